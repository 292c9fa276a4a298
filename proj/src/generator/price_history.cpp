#include "mtsim/generator/price_history.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "mtsim/core/types.hpp"

namespace mtsim {

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::optional<double> number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return std::nullopt;
  return v;
}

} // namespace

bool PriceHistory::has_volume() const noexcept {
  if (points.empty()) return false;
  for (const auto& p : points)
    if (!p.volume) return false;
  return true;
}

std::vector<double> PriceHistory::prices() const {
  std::vector<double> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(p.settle);
  return out;
}

void PriceHistory::validate() const {
  bool numeric = true;
  for (const auto& p : points) {
    if (!(p.settle > 0.0) || !std::isfinite(p.settle))
      throw ConfigError("price history: non-positive price at " + p.timestamp);
    if (!number(p.timestamp)) numeric = false;
  }
  for (std::size_t i = 1; i < points.size(); ++i) {
    const auto& a = points[i - 1].timestamp;
    const auto& b = points[i].timestamp;
    const bool ok = numeric ? *number(a) < *number(b) : a < b;
    if (!ok) throw ConfigError("price history: timestamps not increasing at '" + b + "'");
  }
}

PriceHistory PriceHistory::from_csv(std::istream& in) {
  PriceHistory h;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(trim(cell));
    if (cols.size() < 2)
      throw ConfigError("price history line " + std::to_string(lineno) + ": expected timestamp,settle[,volume]");
    auto settle = number(cols[1]);
    if (!settle) {
      if (h.points.empty()) continue; // header
      throw ConfigError("price history line " + std::to_string(lineno) + ": bad price '" + cols[1] + "'");
    }
    PricePoint p{cols[0], *settle, std::nullopt};
    if (cols.size() > 2 && !cols[2].empty()) {
      p.volume = number(cols[2]);
      if (!p.volume)
        throw ConfigError("price history line " + std::to_string(lineno) + ": bad volume '" + cols[2] + "'");
    }
    h.points.push_back(std::move(p));
  }
  h.validate();
  return h;
}

PriceHistory PriceHistory::load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open price history " + path.string());
  return from_csv(in);
}

PriceHistory PriceHistory::from_prices(const std::vector<double>& prices) {
  PriceHistory h;
  for (std::size_t i = 0; i < prices.size(); ++i) h.points.push_back({std::to_string(i + 1), prices[i], std::nullopt});
  h.validate();
  return h;
}

} // namespace mtsim
