#!/usr/bin/env python3
"""Writes the normal-conditions scenario templates under scenarios/normal/.

Contract specs and capitals are assumptions. Prices are integer ticks of
the unit named in each description (e.g. crude oil in tenths of a yuan).
"""
import csv
import json
import pathlib

ROOT = pathlib.Path(__file__).resolve().parent.parent

# name: (description, tick, multiplier, initial margin, maintenance, news)
CONTRACTS = {
    "sc2501": ("Crude oil futures, tenths of CNY per barrel, 1000 barrels per contract", 1, 100, 0.10, 0.08, [
        (2, "OPEC+ signals it will extend voluntary output cuts into next quarter.", ["supply", "bullish"]),
    ]),
    "ta501": ("PTA futures, CNY per tonne, 5 tonnes per contract", 2, 5, 0.07, 0.06, [
        (2, "Several PTA plants announce maintenance shutdowns, tightening spot supply.", ["supply", "bullish"]),
    ]),
    "ih2412": ("SSE 50 index futures, tenths of an index point, 300 CNY per point", 2, 30, 0.12, 0.10, [
        (2, "Regulators announce support measures for blue-chip equities.", ["policy", "bullish"]),
    ]),
    "gcg2502": ("Gold futures, tenths of USD per ounce, 100 ounces per contract", 1, 10, 0.08, 0.07, []),
    "ch2503": ("Commodity futures, CNY per unit, 10 units per contract", 1, 10, 0.08, 0.07, []),
    "sf2503": ("Ferrosilicon futures, CNY per tonne, 5 tonnes per contract", 2, 5, 0.08, 0.07, []),
}

ROSTER = [
    ("agg_1", "aggressive", "Momentum trader who scales in fast.", 1, 40),
    ("agg_2", "aggressive", "Short-term speculator trading breakouts.", -1, 40),
    ("con_1", "conservative", "Pension overlay manager with tight limits.", 1, 30),
    ("con_2", "conservative", "Hedger protecting physical inventory.", -1, 30),
    ("cus_1", "custom", "Market maker quoting both sides.", 1, 20),
    ("cus_2", "custom", "Arbitrage desk balancing spot and futures.", -1, 20),
]


def last_price(name):
    with open(ROOT / "data" / f"{name}.csv") as f:
        rows = list(csv.DictReader(f))
    return int(rows[-1]["settle"])


def scenario(name, spec):
    desc, tick, mult, im, mm, news = spec
    price = last_price(name)
    notional = price * mult
    roster = []
    for aid, style, persona, sign, pos in ROSTER:
        roster.append({
            "id": aid,
            "persona": persona,
            "style": style,
            "knowledge": [],
            "backend": "foundation",
            "temperature": 0.7,
            "top_p": 0.9,
            "uptake": 0.5,
            # about five times the initial margin of the starting position
            "cash": float(round(5 * im * notional * pos / 1000) * 1000 + 100000),
            "position": sign * pos,
        })
    return {
        "name": name,
        "description": f"Normal trading conditions for {name.upper()} over three days. Capitals are assumptions.",
        "engine": {
            "asset": {"description": desc, "tick": tick, "lot": 1, "multiplier": mult},
            "rules": {
                "matching_policy": "cda_price_time",
                "price_band": None,
                "initial_margin": im,
                "maintenance_margin": mm,
                "fee_per_contract": 0,
            },
            "d_sim": 3,
            "d_turn": 4,
            "initial_price": price,
            "rng_seed": 11,
            "disclosure": [],
        },
        "roster": roster,
        "news": [{"frame": f, "targets": "all", "text": t, "tags": tags} for f, t, tags in news],
        "generator": {"history": f"../../data/{name}.csv", "k": 5, "seed": 42, "window": 5},
        "ablation": "none",
        "agent_settings": {"expert_iterations": 2, "parse_retries": 3, "expert_backend": "expert", "advice_cap": 4000},
        "redactions": [],
        "backends": [
            {"id": "foundation", "kind": "scripted", "script": "../scripts/normal.foundation.json"},
            {"id": "expert", "kind": "scripted", "script": "../scripts/normal.expert.json"},
        ],
        "seed": 1,
        "deterministic": True,
    }


def fenced(obj):
    return "```json\n" + json.dumps(obj) + "\n```"


def foundation_script():
    strat = ["strategy", "refinement"]
    longs = ["agg_1", "con_1", "cus_1"]
    shorts = ["agg_2", "con_2", "cus_2"]
    rules = [
        {"purpose": ["analysis", "analysis_revision"], "contains": "bullish",
         "response": fenced({"trend": "up", "confidence": 0.7, "analysis": "The headline tightens supply or lifts demand."})},
        {"purpose": ["analysis", "analysis_revision"],
         "response": fenced({"trend": "flat", "confidence": 0.5, "analysis": "No catalyst; price should range."})},
        {"purpose": strat, "agent": ["agg_1", "agg_2"], "frames": [2, 3], "contains": "bullish",
         "response": fenced({"direction": "strong_buy", "urgency": "high", "exposure": 0.3, "rationale": "Chase the news."})},
        {"purpose": strat, "agent": longs,
         "response": fenced({"direction": "buy", "urgency": "mid", "exposure": 0.1, "rationale": "Add on dips."})},
        {"purpose": strat, "agent": shorts,
         "response": fenced({"direction": "sell", "urgency": "mid", "exposure": 0.1, "rationale": "Sell into strength."})},
        {"purpose": strat,
         "response": fenced({"direction": "hold", "urgency": "low", "exposure": 0.0, "rationale": "No edge."})},
        {"purpose": "withdraw", "response": fenced({"withdraw": [], "rationale": "Orders still fit the plan."})},
        {"purpose": "direct_order", "agent": longs,
         "response": fenced({"orders": [{"side": "buy", "price_offset": 0.01, "volume": 5}], "rationale": "Bid just above."})},
        {"purpose": "direct_order",
         "response": fenced({"orders": [{"side": "sell", "price_offset": 0.01, "volume": 5}], "rationale": "Offer just below."})},
        {"purpose": "reflection",
         "response": fenced({"summary": "Traded the range.", "lessons": [{"tag": "sizing", "note": "keep orders small in quiet markets"}]})},
    ]
    return {"rules": rules}


def expert_script():
    return {
        "rules": [
            {"purpose": "expert_analysis", "contains": "bullish",
             "response": "News moves this contract; weigh it above the recent range."},
        ],
        "default": "Quiet market; trade small and respect margin.",
    }


def dump(path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2) + "\n")


def main():
    for name, spec in CONTRACTS.items():
        dump(ROOT / "scenarios" / "normal" / f"{name}.scenario.json", scenario(name, spec))
    dump(ROOT / "scenarios" / "scripts" / "normal.foundation.json", foundation_script())
    dump(ROOT / "scenarios" / "scripts" / "normal.expert.json", expert_script())


if __name__ == "__main__":
    main()
