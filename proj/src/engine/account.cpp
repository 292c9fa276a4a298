#include "mtsim/engine/account.hpp"

#include <algorithm>

namespace mtsim {

Cents margin_for(Price price, Qty volume, std::int64_t multiplier, std::int64_t fraction_bp) noexcept {
  const __int128 notional = static_cast<__int128>(price) * volume * multiplier * kCentsPerUnit;
  const __int128 num = notional * fraction_bp;
  return static_cast<Cents>((num + 9999) / 10000);
}

Qty max_affordable_volume(Cents available, Price price, std::int64_t multiplier,
                          std::int64_t initial_bp) noexcept {
  if (available <= 0 || price <= 0) return 0;
  // largest v with margin_for(price, v) <= available
  const __int128 per = static_cast<__int128>(price) * multiplier * kCentsPerUnit * initial_bp;
  Qty v = static_cast<Qty>((static_cast<__int128>(available) * 10000) / per);
  while (v > 0 && margin_for(price, v, multiplier, initial_bp) > available) --v;
  return std::max<Qty>(v, 0);
}

nlohmann::ordered_json account_to_json(const Account& a) {
  return {{"agent", a.agent},
          {"cash", a.cash},
          {"margin", a.margin_posted},
          {"reserved", a.reserved},
          {"realized_pnl", a.realized_pnl},
          {"unrealized_pnl", a.unrealized_pnl},
          {"position", a.position},
          {"avg_entry", a.avg_entry},
          {"basis", a.basis},
          {"liquidation", a.liquidation}};
}

Account account_from_json(const nlohmann::ordered_json& j) {
  Account a;
  a.agent = j.at("agent").get<std::string>();
  a.cash = j.at("cash").get<Cents>();
  a.margin_posted = j.at("margin").get<Cents>();
  a.reserved = j.value("reserved", Cents{0});
  a.realized_pnl = j.value("realized_pnl", Cents{0});
  a.unrealized_pnl = j.value("unrealized_pnl", Cents{0});
  a.position = j.at("position").get<Qty>();
  a.avg_entry = j.value("avg_entry", 0.0);
  a.basis = j.value("basis", std::int64_t{0});
  a.liquidation = j.value("liquidation", false);
  return a;
}

} // namespace mtsim
