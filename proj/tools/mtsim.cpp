#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "mtsim/metrics/metrics.hpp"
#include "mtsim/service/batch.hpp"
#include "mtsim/service/replay.hpp"
#include "mtsim/service/server.hpp"

using namespace mtsim;
namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitBadInput = 2;
constexpr int kExitBackend = 3;

struct RunArgs {
  std::string scenario;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string ablation;
  int repeat{1};
  bool deterministic{false};
  bool concurrent{false};
  std::string backends;
};

int cmd_run(const RunArgs& a) {
  Scenario s;
  RunOptions opts;
  try {
    s = load_scenario(a.scenario);
    if (!a.ablation.empty()) {
      auto ab = ablation_from_string(a.ablation);
      if (!ab) throw ConfigError("unknown ablation '" + a.ablation + "'");
      opts.ablation = *ab;
    }
    if (!a.backends.empty()) opts.backends = load_backends_file(a.backends);
    // resolve everything that can fail before any artifact is written
    (void)prepare_run(s, opts);
  } catch (const std::exception& e) {
    std::cerr << "mtsim: " << e.what() << "\n";
    return kExitBadInput;
  }
  if (a.deterministic) opts.deterministic = true;
  if (a.concurrent) opts.deterministic = false;

  const fs::path out = a.out.empty() ? fs::path("runs") / s.name : fs::path(a.out);
  const std::uint64_t base_seed = a.seed.value_or(s.seed);
  ordered_json report{{"scenario", s.name}, {"runs", ordered_json::array()}};
  std::vector<double> increases;
  for (int i = 0; i < a.repeat; ++i) {
    opts.seed = base_seed + static_cast<std::uint64_t>(i);
    const fs::path dir = a.repeat == 1 ? out : out / ("run-" + std::to_string(i + 1));
    BatchResult r;
    try {
      r = run_batch(s, opts, dir);
    } catch (const llm::BackendFailure& e) {
      std::cerr << "mtsim: backend: " << e.what() << "\n";
      return kExitBackend;
    } catch (const std::exception& e) {
      std::cerr << "mtsim: " << e.what() << "\n";
      return kExitFailure;
    }
    const auto& g = r.summary.at("growth");
    increases.push_back(g.at("increase").get<double>());
    report["runs"].push_back({{"seed", *opts.seed},
                              {"log", r.log.string()},
                              {"status", r.summary.at("status")},
                              {"ablation", r.summary.at("ablation")},
                              {"growth", g}});
    std::cout << dir.string() << ": " << r.summary.at("status").get<std::string>() << ", "
              << r.summary.at("rounds").get<int>() << " rounds, increase " << g.at("increase").get<double>() << "\n";
  }
  if (a.repeat > 1 || s.reference.growth_rate) {
    double mean = 0.0;
    for (double x : increases) mean += x;
    mean /= static_cast<double>(increases.size());
    report["mean_increase"] = mean;
    if (s.reference.growth_rate) {
      double err = 0.0;
      for (double x : increases) err += relative_error(x, *s.reference.growth_rate);
      report["reference_increase"] = *s.reference.growth_rate;
      report["mean_relative_error"] = err / static_cast<double>(increases.size());
    }
    fs::create_directories(out);
    std::ofstream(out / "growth_report.json") << report.dump(2) << "\n";
    std::cout << "growth report: " << (out / "growth_report.json").string() << "\n";
  }
  return 0;
}

int cmd_replay(const std::string& log, const std::string& graph_dir) {
  if (!fs::exists(log)) {
    std::cerr << "mtsim: no such log " << log << "\n";
    return kExitBadInput;
  }
  const auto r = replay_file(log);
  const auto loaded = load_jsonl_file(log);
  const auto expected = logged_final_accounts(loaded.events);
  ordered_json accts = ordered_json::array();
  bool equal = expected.size() == r.accounts.size();
  for (const auto& [id, a] : r.accounts) {
    accts.push_back(account_to_json(a));
    auto it = expected.find(id);
    if (it == expected.end() || account_to_json(it->second) != account_to_json(a)) equal = false;
  }
  ordered_json out{{"frame", r.frame},
                   {"turn", r.turn},
                   {"events_applied", r.events_applied},
                   {"truncated", r.truncated},
                   {"settlements", r.settlements},
                   {"matches_log", equal && r.divergence.empty()},
                   {"accounts", accts}};
  if (r.bad_line) out["bad_line"] = r.bad_line;
  if (!r.error.empty()) out["error"] = r.error;
  if (!r.divergence.empty()) out["divergence"] = r.divergence;
  std::cout << out.dump(2) << "\n";
  if (!graph_dir.empty()) {
    const auto n = export_graph(loaded.events, graph_dir);
    std::cerr << "graph: " << n.agents << " agents, " << n.orders << " orders, " << n.deals << " deals, " << n.events
              << " events, " << n.edges << " edges\n";
  }
  if (r.truncated) return kExitFailure;
  return equal && r.divergence.empty() ? 0 : kExitFailure;
}

int cmd_fit(const std::string& csv, const FitOptions& fit, const std::string& out) {
  try {
    const auto model = fit_generator(PriceHistory::load_csv(csv), fit);
    if (out.empty())
      std::cout << model_to_json(model).dump(2) << "\n";
    else
      save_model(model, out);
  } catch (const std::exception& e) {
    std::cerr << "mtsim: " << e.what() << "\n";
    return kExitBadInput;
  }
  return 0;
}

int cmd_metrics(const std::string& log, const std::string& out, const ExportOptions& opts) {
  if (!fs::exists(log)) {
    std::cerr << "mtsim: no such log " << log << "\n";
    return kExitBadInput;
  }
  const auto loaded = load_jsonl_file(log);
  if (loaded.bad_line) std::cerr << "mtsim: log unreadable from line " << loaded.bad_line << "\n";
  try {
    const auto summary = out.empty() ? run_summary(loaded.events, opts) : export_tables(loaded.events, out, opts);
    std::cout << summary.dump(2) << "\n";
  } catch (const std::exception& e) {
    std::cerr << "mtsim: " << e.what() << "\n";
    return kExitFailure;
  }
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Futures market simulation with language-model agents"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run a scenario headless");
  run_cmd->add_option("scenario", run.scenario, "Scenario JSON file")->required();
  run_cmd->add_option("-o,--out", run.out, "Output directory (default runs/<name>)");
  run_cmd->add_option("--seed", run.seed, "Run seed; repeats use seed+i");
  run_cmd->add_option("--ablation", run.ablation, "none | no_expert | no_generator | both");
  run_cmd->add_option("--repeat", run.repeat, "Number of runs")->check(CLI::PositiveNumber);
  run_cmd->add_flag("--deterministic", run.deterministic, "Serial agents in roster order");
  run_cmd->add_flag("--concurrent", run.concurrent, "One task per agent");
  run_cmd->add_option("--backends", run.backends, "Backend config file overriding scenario backends")
      ->envname("MTSIM_BACKENDS");

  std::string log, graph_dir, out;
  auto* replay_cmd = app.add_subcommand("replay", "Rebuild engine state from a record log");
  replay_cmd->add_option("log", log, "records.jsonl")->required();
  replay_cmd->add_option("--graph", graph_dir, "Write nodes.csv/edges.csv here");

  std::string csv;
  FitOptions fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit the order generator on a price history");
  fit_cmd->add_option("history", csv, "CSV: timestamp,settle[,volume]")->required();
  fit_cmd->add_option("-k", fit.k, "Classes")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--seed", fit.seed, "k-means seed");
  fit_cmd->add_option("--window", fit.window, "Volatility window")->check(CLI::PositiveNumber);
  fit_cmd->add_flag("--volume-from-data", fit.volume_from_data, "Estimate volume parameters from data");
  fit_cmd->add_option("-o,--out", out, "Model JSON (stdout if omitted)");

  ExportOptions mopts;
  std::string mout;
  auto* metrics_cmd = app.add_subcommand("metrics", "Compute metrics from a record log");
  metrics_cmd->add_option("log", log, "records.jsonl")->required();
  metrics_cmd->add_option("-o,--out", mout, "Write CSV tables and summary.json here");
  metrics_cmd->add_option("--liquidation-agent", mopts.liquidation_agent, "Agent for the liquidation series");
  metrics_cmd->add_option("--reference", mopts.reference_growth, "Reference total increase");

  ServerOptions sopts;
  std::string bind = "127.0.0.1:8080";
  auto* serve_cmd = app.add_subcommand("serve", "HTTP and WebSocket service");
  serve_cmd->add_option("--bind", bind, "host:port")->envname("MTSIM_BIND");
  serve_cmd->add_option("--backends", sopts.backends_file, "Backend config file")->envname("MTSIM_BACKENDS");
  serve_cmd->add_option("--scenario-root", sopts.scenario_root, "Directory POST /runs paths resolve against");
  serve_cmd->add_option("--turn-window", sopts.turn_window_s, "Seconds per turn for human orders in interactive runs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitBadInput;
  }

  if (*run_cmd) return cmd_run(run);
  if (*replay_cmd) return cmd_replay(log, graph_dir);
  if (*fit_cmd) return cmd_fit(csv, fit, out);
  if (*metrics_cmd) return cmd_metrics(log, mout, mopts);
  if (*serve_cmd) {
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos) {
      std::cerr << "mtsim: --bind expects host:port\n";
      return kExitBadInput;
    }
    sopts.host = bind.substr(0, colon);
    sopts.port = static_cast<unsigned short>(std::stoi(bind.substr(colon + 1)));
    try {
      Server server(sopts);
      std::cout << "listening on " << sopts.host << ":" << server.port() << "\n" << std::flush;
      server.run();
    } catch (const std::exception& e) {
      std::cerr << "mtsim: " << e.what() << "\n";
      return kExitFailure;
    }
    return 0;
  }
  return kExitFailure;
}
