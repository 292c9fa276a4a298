#!/usr/bin/env python3
"""Writes the synthetic price histories under data/.

Every series is a seeded random walk with a few volatility regimes, ending
at the contract's configured start price. Nothing here is market data.
"""
import argparse
import datetime as dt
import math
import pathlib

import numpy as np

# name: (end price, daily vol, drift, tick, seed)
SERIES = {
    "sc2501": (5500, 0.019, -0.0003, 1, 11),
    "ta501": (4900, 0.013, 0.0, 2, 12),
    "ih2412": (26500, 0.012, 0.0006, 2, 13),
    "gcg2502": (26500, 0.009, 0.0008, 1, 14),
    "ch2503": (7800, 0.011, -0.0002, 1, 15),
    "sf2503": (6300, 0.014, 0.0, 2, 16),
}

DAYS = 128


def trading_days(end, n):
    out = []
    d = end
    while len(out) < n:
        if d.weekday() < 5:
            out.append(d)
        d -= dt.timedelta(days=1)
    return list(reversed(out))


def walk(end_price, vol, drift, seed):
    rng = np.random.default_rng(seed)
    # calm / busy / calm
    scale = np.ones(DAYS - 1)
    scale[40:70] = 1.8
    scale[100:] = 1.3
    r = drift + vol * scale * rng.standard_normal(DAYS - 1)
    logp = np.concatenate([[0.0], np.cumsum(r)])
    return end_price * np.exp(logp - logp[-1])


def regime_walk(end_price, seed, stay=0.9):
    """Three persistent regimes (down, calm, up) so returns carry momentum."""
    drift = (-0.015, 0.0, 0.02)
    vol = (0.008, 0.01, 0.008)
    rng = np.random.default_rng(seed)
    state = 1
    r = np.empty(DAYS - 1)
    for i in range(DAYS - 1):
        if rng.random() > stay:
            state = int(rng.integers(0, 3))
        r[i] = drift[state] + vol[state] * rng.standard_normal()
    logp = np.concatenate([[0.0], np.cumsum(r)])
    return end_price * np.exp(logp - logp[-1])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data"))
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    end = dt.date(2024, 11, 29)
    write(out / "nickel.csv", trading_days(dt.date(2022, 3, 4), DAYS), regime_walk(29000, 7), 10, 107)
    for name, (price, vol, drift, tick, seed) in SERIES.items():
        write(out / f"{name}.csv", trading_days(end, DAYS), walk(price, vol, drift, seed), tick, seed + 100)


def write(path, days, prices, tick, seed):
    vrng = np.random.default_rng(seed)
    with open(path, "w") as f:
        f.write("timestamp,settle,volume\n")
        for d, p in zip(days, prices):
            p = max(tick, int(math.floor(p / tick + 0.5)) * tick)
            v = int(vrng.integers(20000, 60000))
            f.write(f"{d.isoformat()},{p},{v}\n")


if __name__ == "__main__":
    main()
