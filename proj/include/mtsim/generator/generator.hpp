#pragma once
#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include <json.hpp>

#include "mtsim/engine/order.hpp"
#include "mtsim/generator/price_history.hpp"
#include "mtsim/generator/tendency.hpp"

namespace mtsim {

struct FitOptions {
  int k{5};
  std::uint64_t seed{42};
  // rolling volatility window, in returns
  int window{5};
  int max_iterations{300};
  double tolerance{1e-6};
  // estimate (mu_v, sigma_v) from the volume column when present
  bool volume_from_data{false};
};

struct ClassParams {
  double centroid_return{0.0};
  double centroid_vol{0.0};
  std::size_t members{0};
  // next-period simple return statistics of the class members
  double mu_p{0.0};
  double sigma_p{0.0};
};

struct DirectionParams {
  double mu_p{0.0};
  double sigma_p{0.0};
  std::vector<int> classes;
};

struct GeneratorModel {
  int k{0};
  // sorted by centroid return, ascending
  std::vector<ClassParams> classes;
  // indexed by Direction; the Hold entry is unused by generate_orders
  std::array<DirectionParams, 5> directions{};
  double mu_v{0.7};
  double sigma_v{0.1};
  double aggressive_mult{1.3};
  double conservative_mult{0.75};
  double custom_mult{1.0};
  int max_orders{3};
  bool degenerate{false};
  // fit metadata
  std::string feature{"log_return,rolling_vol"};
  int window{5};
  std::uint64_t seed{0};
  int iterations{0};
  std::size_t points{0};
  std::string first_timestamp;
  std::string last_timestamp;

  double style_multiplier(Style s) const noexcept;
  const DirectionParams& params(Direction d) const { return directions[static_cast<std::size_t>(d)]; }
};

// Feature rows (log return, rolling volatility) for t = 1 .. n-2 and the
// matching next-period simple returns.
struct FeatureTable {
  std::vector<std::array<double, 2>> features;
  std::vector<double> next_returns;
};
FeatureTable build_features(const std::vector<double>& prices, int window);

struct KMeansResult {
  std::vector<std::array<double, 2>> centroids;
  std::vector<int> labels;
  int iterations{0};
};
// k-means++ seeding, Lloyd iterations until every centroid moves less than
// `tol` or `max_iter` is reached.
KMeansResult kmeans(const std::vector<std::array<double, 2>>& points, int k, std::uint64_t seed,
                    int max_iter = 300, double tol = 1e-6);

// Throws ConfigError when the history is shorter than k + 2.
GeneratorModel fit_generator(const PriceHistory& history, const FitOptions& opts = {});

nlohmann::ordered_json model_to_json(const GeneratorModel& m);
GeneratorModel model_from_json(const nlohmann::json& j);
void save_model(const GeneratorModel& m, const std::filesystem::path& path);
GeneratorModel load_model(const std::filesystem::path& path);

struct MarginTerms {
  Price tick{1};
  std::int64_t multiplier{1};
  std::int64_t initial_bp{1250};
};

struct GeneratedOrders {
  std::vector<OrderRequest> orders;
  // offsets drawn from N(|mu_p|, sigma_p) before sign alignment and rounding
  std::vector<double> raw_offsets;
  // volume fraction draw before clamping
  double raw_volume_fraction{0.0};
  double volume_fraction{0.0};
  Qty capacity{0};
};

// Rounds to the tick grid; exact halves go away from `reference`.
Price round_to_tick_away(double price, Price tick, double reference);

// Buy prices are m(1 + x), sell prices m(1 - x), x ~ N(|mu_p|, sigma_p) per
// order. Total volume is round(capacity * min(clamp(v, 0, 1) * urgency,
// exposure)) with v ~ N(mu_v * style, sigma_v), where capacity is the
// affordable volume at the highest sampled price. Hold gives no orders.
GeneratedOrders generate_orders(const GeneratorModel& model, const Tendency& tendency, Style style,
                                Price market_price, Cents available, const MarginTerms& terms,
                                std::mt19937_64& rng);

} // namespace mtsim
