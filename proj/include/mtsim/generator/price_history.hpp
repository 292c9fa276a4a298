#pragma once
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <vector>

namespace mtsim {

struct PricePoint {
  std::string timestamp;
  double settle{0.0};
  std::optional<double> volume;
};

// Daily (or per-frame) settlement series. CSV columns: timestamp, settle,
// optional volume; a header row is skipped if its second field is not a
// number.
struct PriceHistory {
  std::vector<PricePoint> points;

  std::size_t size() const noexcept { return points.size(); }
  bool has_volume() const noexcept;
  std::vector<double> prices() const;
  // Throws ConfigError: prices must be positive and finite, timestamps
  // strictly increasing (numerically if all are numbers, else as strings).
  void validate() const;

  static PriceHistory from_csv(std::istream& in);
  static PriceHistory load_csv(const std::filesystem::path& path);
  static PriceHistory from_prices(const std::vector<double>& prices);
};

} // namespace mtsim
