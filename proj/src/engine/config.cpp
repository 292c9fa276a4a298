#include "mtsim/engine/config.hpp"

#include <cmath>

namespace mtsim {

std::int64_t TradingRules::initial_margin_bp() const noexcept {
  return std::llround(initial_margin * 10000.0);
}

std::int64_t TradingRules::maintenance_margin_bp() const noexcept {
  return std::llround(maintenance_margin * 10000.0);
}

void EngineConfig::validate() const {
  if (asset.tick <= 0) throw ConfigError("invalid config: tick must be positive");
  if (asset.lot <= 0) throw ConfigError("invalid config: lot must be positive");
  if (asset.multiplier <= 0) throw ConfigError("invalid config: multiplier must be positive");
  if (rules.matching_policy != "cda_price_time")
    throw ConfigError("invalid config: unknown matching policy '" + rules.matching_policy + "'");
  if (!(rules.maintenance_margin > 0.0) || !(rules.initial_margin < 1.0) ||
      rules.maintenance_margin > rules.initial_margin)
    throw ConfigError("invalid config: margins must satisfy 0 < maintenance <= initial < 1");
  if (rules.maintenance_margin_bp() <= 0)
    throw ConfigError("invalid config: maintenance margin below one basis point");
  if (rules.price_band && !(*rules.price_band > 0.0))
    throw ConfigError("invalid config: price band must be positive when enabled");
  if (rules.fee_per_contract < 0) throw ConfigError("invalid config: negative fee");
  if (d_sim < 1) throw ConfigError("invalid config: d_sim must be >= 1");
  if (d_turn < 1) throw ConfigError("invalid config: d_turn must be >= 1");
  if (initial_price <= 0 || initial_price % asset.tick != 0)
    throw ConfigError("invalid config: initial price must be a positive multiple of tick");
}

void to_json(nlohmann::ordered_json& j, const EngineConfig& c) {
  j = nlohmann::ordered_json{
      {"asset",
       {{"description", c.asset.description},
        {"tick", c.asset.tick},
        {"lot", c.asset.lot},
        {"multiplier", c.asset.multiplier}}},
      {"rules",
       {{"matching_policy", c.rules.matching_policy},
        {"price_band", c.rules.price_band ? nlohmann::ordered_json(*c.rules.price_band)
                                          : nlohmann::ordered_json(nullptr)},
        {"initial_margin", c.rules.initial_margin},
        {"maintenance_margin", c.rules.maintenance_margin},
        {"fee_per_contract", c.rules.fee_per_contract}}},
      {"d_sim", c.d_sim},
      {"d_turn", c.d_turn},
      {"initial_price", c.initial_price},
      {"rng_seed", c.rng_seed},
      {"disclosure", c.disclosure}};
}

void from_json(const nlohmann::ordered_json& j, EngineConfig& c) {
  const auto& a = j.at("asset");
  c.asset.description = a.value("description", std::string{});
  c.asset.tick = a.at("tick").get<Price>();
  c.asset.lot = a.value("lot", std::int64_t{1});
  c.asset.multiplier = a.value("multiplier", c.asset.lot);
  const auto& r = j.at("rules");
  c.rules.matching_policy = r.value("matching_policy", std::string{"cda_price_time"});
  if (auto it = r.find("price_band"); it != r.end() && !it->is_null())
    c.rules.price_band = it->get<double>();
  else
    c.rules.price_band.reset();
  c.rules.initial_margin = r.at("initial_margin").get<double>();
  c.rules.maintenance_margin = r.at("maintenance_margin").get<double>();
  c.rules.fee_per_contract = r.value("fee_per_contract", Cents{0});
  c.d_sim = j.at("d_sim").get<int>();
  c.d_turn = j.at("d_turn").get<int>();
  c.initial_price = j.at("initial_price").get<Price>();
  c.rng_seed = j.value("rng_seed", std::uint64_t{0});
  c.disclosure = j.value("disclosure", std::vector<AgentId>{});
}

} // namespace mtsim
