#include "mtsim/service/batch.hpp"

#include <fstream>

#include "mtsim/metrics/metrics.hpp"
#include "mtsim/service/replay.hpp"

namespace mtsim {

namespace fs = std::filesystem;

ExportOptions export_options_for(const Scenario& s) {
  return {s.reference.liquidation_agent, s.reference.growth_rate};
}

BatchResult run_batch(const Scenario& s, const RunOptions& opts, const fs::path& dir) {
  auto run = prepare_run(s, opts);
  fs::create_directories(dir);
  BatchResult out;
  out.log = dir / "records.jsonl";
  std::ofstream sink(out.log, std::ios::binary | std::ios::trunc);
  if (!sink) throw std::runtime_error("cannot write " + out.log.string());
  run.records->set_sink(&sink);
  out.outcome = run.simulation->run();
  run.records->set_sink(nullptr);
  sink.close();

  const auto events = run.records->snapshot();
  out.summary = export_tables(events, dir / "metrics", export_options_for(s));
  export_graph(events, dir / "graph");
  return out;
}

} // namespace mtsim
