#include "mtsim/generator/generator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "mtsim/core/types.hpp"
#include "mtsim/engine/account.hpp"

namespace mtsim {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double dist2(const std::array<double, 2>& a, const std::array<double, 2>& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  return dx * dx + dy * dy;
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size()))};
}

// k > 5: extremes keep strong_*, interior classes split evenly over
// sell/hold/buy. k < 5: direction d uses class round(d (k-1) / 4).
std::array<std::vector<int>, 5> direction_groups(int k) {
  std::array<std::vector<int>, 5> g;
  if (k >= 5) {
    g[0].push_back(0);
    g[4].push_back(k - 1);
    const int interior = k - 2;
    for (int i = 1; i <= k - 2; ++i) g[1 + (i - 1) * 3 / interior].push_back(i);
  } else {
    for (int d = 0; d < 5; ++d) g[d].push_back(static_cast<int>(std::lround(d * (k - 1) / 4.0)));
  }
  return g;
}

} // namespace

double GeneratorModel::style_multiplier(Style s) const noexcept {
  switch (s) {
    case Style::Aggressive: return aggressive_mult;
    case Style::Conservative: return conservative_mult;
    case Style::Custom: return custom_mult;
  }
  return custom_mult;
}

FeatureTable build_features(const std::vector<double>& prices, int window) {
  FeatureTable t;
  const std::size_t n = prices.size();
  if (n < 3) return t;
  std::vector<double> r(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) r[i] = std::log(prices[i] / prices[i - 1]);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const std::size_t lo = i + 1 >= static_cast<std::size_t>(window) + 1 ? i + 1 - window : 1;
    std::vector<double> win(r.begin() + static_cast<std::ptrdiff_t>(lo), r.begin() + static_cast<std::ptrdiff_t>(i) + 1);
    t.features.push_back({r[i], mean_std(win).second});
    t.next_returns.push_back(prices[i + 1] / prices[i] - 1.0);
  }
  return t;
}

KMeansResult kmeans(const std::vector<std::array<double, 2>>& points, int k, std::uint64_t seed, int max_iter,
                    double tol) {
  if (k <= 0 || points.size() < static_cast<std::size_t>(k)) throw ConfigError("kmeans: fewer points than k");
  std::mt19937_64 rng(seed);
  KMeansResult res;
  res.centroids.push_back(points[rng() % points.size()]);
  std::vector<double> d2(points.size());
  while (res.centroids.size() < static_cast<std::size_t>(k)) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : res.centroids) best = std::min(best, dist2(points[i], c));
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) throw ConfigError("kmeans: fewer distinct points than k");
    const double target = unit_draw(rng) * total;
    double acc = 0.0;
    std::size_t pick = points.size() - 1;
    for (std::size_t i = 0; i < points.size(); ++i) {
      acc += d2[i];
      if (acc > target && d2[i] > 0.0) {
        pick = i;
        break;
      }
    }
    while (d2[pick] == 0.0) --pick;
    res.centroids.push_back(points[pick]);
  }

  res.labels.assign(points.size(), 0);
  for (int it = 1; it <= max_iter; ++it) {
    res.iterations = it;
    for (std::size_t i = 0; i < points.size(); ++i) {
      int best = 0;
      for (int c = 1; c < k; ++c)
        if (dist2(points[i], res.centroids[c]) < dist2(points[i], res.centroids[best])) best = c;
      res.labels[i] = best;
    }
    std::vector<std::array<double, 2>> sum(k, {0.0, 0.0});
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      sum[res.labels[i]][0] += points[i][0];
      sum[res.labels[i]][1] += points[i][1];
      ++count[res.labels[i]];
    }
    double moved = 0.0;
    for (int c = 0; c < k; ++c) {
      if (count[c] == 0) continue;
      const std::array<double, 2> next{sum[c][0] / count[c], sum[c][1] / count[c]};
      moved = std::max(moved, std::sqrt(dist2(next, res.centroids[c])));
      res.centroids[c] = next;
    }
    if (moved < tol) break;
  }
  return res;
}

GeneratorModel fit_generator(const PriceHistory& history, const FitOptions& opts) {
  if (opts.k < 1) throw ConfigError("generator: k must be >= 1");
  if (opts.window < 1) throw ConfigError("generator: window must be >= 1");
  if (history.size() < static_cast<std::size_t>(opts.k) + 2)
    throw ConfigError("generator: history has " + std::to_string(history.size()) + " points, need at least k + 2 = " +
                      std::to_string(opts.k + 2));
  history.validate();

  GeneratorModel m;
  m.window = opts.window;
  m.seed = opts.seed;
  m.points = history.size();
  m.first_timestamp = history.points.front().timestamp;
  m.last_timestamp = history.points.back().timestamp;
  m.feature = "log_return,rolling_vol_w" + std::to_string(opts.window);

  const auto table = build_features(history.prices(), opts.window);
  const auto& pts = table.features;
  const bool constant =
      std::all_of(pts.begin(), pts.end(), [&](const auto& p) { return p == pts.front(); });

  std::vector<int> labels;
  if (constant) {
    m.degenerate = true;
    m.k = 1;
    m.classes.push_back({pts.front()[0], pts.front()[1], pts.size(), 0.0, 0.0});
    labels.assign(pts.size(), 0);
  } else {
    auto km = kmeans(pts, opts.k, opts.seed, opts.max_iterations, opts.tolerance);
    m.k = opts.k;
    m.iterations = km.iterations;
    std::vector<int> order(opts.k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return km.centroids[a][0] < km.centroids[b][0] ||
             (km.centroids[a][0] == km.centroids[b][0] && km.centroids[a][1] < km.centroids[b][1]);
    });
    std::vector<int> rank(opts.k);
    for (int i = 0; i < opts.k; ++i) rank[order[i]] = i;
    labels.resize(km.labels.size());
    for (std::size_t i = 0; i < km.labels.size(); ++i) labels[i] = rank[km.labels[i]];
    for (int i = 0; i < opts.k; ++i) {
      ClassParams c;
      c.centroid_return = km.centroids[order[i]][0];
      c.centroid_vol = km.centroids[order[i]][1];
      std::vector<double> next;
      for (std::size_t j = 0; j < labels.size(); ++j)
        if (labels[j] == i) next.push_back(table.next_returns[j]);
      c.members = next.size();
      std::tie(c.mu_p, c.sigma_p) = mean_std(next);
      m.classes.push_back(c);
    }
  }

  const auto groups = direction_groups(m.k);
  for (int d = 0; d < 5; ++d) {
    auto& dp = m.directions[d];
    dp.classes = groups[d];
    std::vector<double> next;
    for (std::size_t j = 0; j < labels.size(); ++j)
      if (std::find(dp.classes.begin(), dp.classes.end(), labels[j]) != dp.classes.end())
        next.push_back(table.next_returns[j]);
    std::tie(dp.mu_p, dp.sigma_p) = mean_std(next);
  }

  if (opts.volume_from_data && history.has_volume()) {
    double vmax = 0.0;
    for (const auto& p : history.points) vmax = std::max(vmax, *p.volume);
    if (vmax > 0.0) {
      std::vector<double> frac;
      for (const auto& p : history.points) frac.push_back(*p.volume / vmax);
      std::tie(m.mu_v, m.sigma_v) = mean_std(frac);
    }
  }
  return m;
}

ordered_json model_to_json(const GeneratorModel& m) {
  ordered_json classes = ordered_json::array();
  for (const auto& c : m.classes)
    classes.push_back({{"centroid_return", c.centroid_return},
                       {"centroid_vol", c.centroid_vol},
                       {"members", c.members},
                       {"mu_p", c.mu_p},
                       {"sigma_p", c.sigma_p}});
  ordered_json dirs = ordered_json::object();
  for (int d = 0; d < 5; ++d) {
    const auto& dp = m.directions[d];
    dirs[std::string(to_string(static_cast<Direction>(d)))] = {
        {"classes", dp.classes}, {"mu_p", dp.mu_p}, {"sigma_p", dp.sigma_p}};
  }
  return {{"k", m.k},
          {"classes", classes},
          {"directions", dirs},
          {"volume", {{"mu_v", m.mu_v}, {"sigma_v", m.sigma_v}}},
          {"style_multipliers",
           {{"aggressive", m.aggressive_mult}, {"conservative", m.conservative_mult}, {"custom", m.custom_mult}}},
          {"max_orders", m.max_orders},
          {"degenerate", m.degenerate},
          {"fit",
           {{"feature", m.feature},
            {"window", m.window},
            {"seed", m.seed},
            {"iterations", m.iterations},
            {"points", m.points},
            {"first", m.first_timestamp},
            {"last", m.last_timestamp}}}};
}

GeneratorModel model_from_json(const json& j) {
  GeneratorModel m;
  m.k = j.at("k").get<int>();
  for (const auto& c : j.at("classes"))
    m.classes.push_back({c.at("centroid_return").get<double>(), c.at("centroid_vol").get<double>(),
                         c.at("members").get<std::size_t>(), c.at("mu_p").get<double>(),
                         c.at("sigma_p").get<double>()});
  for (int d = 0; d < 5; ++d) {
    const auto& dp = j.at("directions").at(std::string(to_string(static_cast<Direction>(d))));
    m.directions[d] = {dp.at("mu_p").get<double>(), dp.at("sigma_p").get<double>(),
                       dp.at("classes").get<std::vector<int>>()};
  }
  m.mu_v = j.at("volume").at("mu_v").get<double>();
  m.sigma_v = j.at("volume").at("sigma_v").get<double>();
  const auto& sm = j.at("style_multipliers");
  m.aggressive_mult = sm.at("aggressive").get<double>();
  m.conservative_mult = sm.at("conservative").get<double>();
  m.custom_mult = sm.value("custom", 1.0);
  m.max_orders = j.value("max_orders", 3);
  m.degenerate = j.value("degenerate", false);
  if (j.contains("fit")) {
    const auto& f = j["fit"];
    m.feature = f.value("feature", m.feature);
    m.window = f.value("window", 5);
    m.seed = f.value("seed", std::uint64_t{0});
    m.iterations = f.value("iterations", 0);
    m.points = f.value("points", std::size_t{0});
    m.first_timestamp = f.value("first", std::string{});
    m.last_timestamp = f.value("last", std::string{});
  }
  if (m.sigma_v < 0.0 || m.max_orders < 1) throw ConfigError("generator model: invalid volume parameters");
  for (const auto& dp : m.directions)
    if (dp.sigma_p < 0.0) throw ConfigError("generator model: negative sigma_p");
  return m;
}

void save_model(const GeneratorModel& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << model_to_json(m).dump(2) << '\n';
}

GeneratorModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open generator model " + path.string());
  return model_from_json(json::parse(in));
}

Price round_to_tick_away(double price, Price tick, double reference) {
  const double q = price / static_cast<double>(tick);
  const double lo = std::floor(q);
  const double frac = q - lo;
  double n;
  if (std::abs(frac - 0.5) < 1e-9)
    n = price >= reference ? lo + 1.0 : lo;
  else
    n = frac < 0.5 ? lo : lo + 1.0;
  return static_cast<Price>(n) * tick;
}

GeneratedOrders generate_orders(const GeneratorModel& model, const Tendency& tendency, Style style,
                                Price market_price, Cents available, const MarginTerms& terms,
                                std::mt19937_64& rng) {
  GeneratedOrders out;
  if (tendency.direction == Direction::Hold || market_price <= 0) return out;
  const bool buy = is_buy(tendency.direction);
  const auto& dp = model.params(tendency.direction);
  const double m = static_cast<double>(market_price);

  const int n = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(std::max(1, model.max_orders)));
  std::normal_distribution<double> offset(std::abs(dp.mu_p), dp.sigma_p);
  std::vector<Price> prices;
  for (int i = 0; i < n; ++i) {
    const double x = dp.sigma_p > 0.0 ? offset(rng) : std::abs(dp.mu_p);
    out.raw_offsets.push_back(x);
    Price p = round_to_tick_away(buy ? m * (1.0 + x) : m * (1.0 - x), terms.tick, m);
    prices.push_back(std::max(p, terms.tick));
  }
  const Price top = *std::max_element(prices.begin(), prices.end());
  out.capacity = max_affordable_volume(available, top, terms.multiplier, terms.initial_bp);

  const double v = model.sigma_v > 0.0
                       ? std::normal_distribution<double>(model.mu_v * model.style_multiplier(style), model.sigma_v)(rng)
                       : model.mu_v * model.style_multiplier(style);
  out.raw_volume_fraction = v;
  out.volume_fraction =
      std::min(std::clamp(v, 0.0, 1.0) * urgency_multiplier(tendency.urgency), std::clamp(tendency.exposure, 0.0, 1.0));
  Qty total = static_cast<Qty>(std::llround(static_cast<double>(out.capacity) * out.volume_fraction));
  if (total <= 0) return out;

  const int count = static_cast<int>(std::min<Qty>(n, total));
  std::vector<Qty> vols(count, total / count);
  for (Qty r = 0; r < total % count; ++r) ++vols[r];
  // per-order margin rounding can exceed the pooled figure by a few cents
  auto margin = [&] {
    Cents sum = 0;
    for (int i = 0; i < count; ++i) sum += margin_for(prices[i], vols[i], terms.multiplier, terms.initial_bp);
    return sum;
  };
  while (margin() > available) {
    auto it = std::max_element(vols.begin(), vols.end());
    if (*it == 0) break;
    --*it;
  }
  for (int i = 0; i < count; ++i) {
    if (vols[i] <= 0) continue;
    OrderRequest o;
    o.side = buy ? Side::Buy : Side::Sell;
    o.price = prices[i];
    o.volume = vols[i];
    out.orders.push_back(o);
  }
  return out;
}

} // namespace mtsim
