// Command-line front end: enumerate wafer configurations, evaluate a fixed
// operating point, search the strategy space, or re-render a JSON report.
//
// Exit codes: 0 success, 2 malformed config, 3 infeasible problem, 4 internal
// error.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "wdse/config_io.hpp"
#include "wdse/engines.hpp"
#include "wdse/pipeline.hpp"
#include "wdse/placement.hpp"
#include "wdse/search.hpp"
#include "wdse/units.hpp"
#include "wdse/version.hpp"

namespace fs = std::filesystem;
using namespace wdse;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitSchema = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitInternal = 4;

struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> omega;
  std::optional<int> steps;
  std::optional<int> population;
  std::optional<int> threads;
  bool fast = false;
};

void apply_overrides(RunSpec& spec, const CliOverrides& ov) {
  if (ov.seed) spec.search.seed = *ov.seed;
  if (ov.omega) spec.search.omega = *ov.omega;
  if (ov.steps) spec.search.ga_steps = *ov.steps;
  if (ov.population) spec.search.population = *ov.population;
  if (ov.threads) spec.search.threads = *ov.threads;
  if (ov.fast) spec.search.fast = true;
}

std::string out_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void ensure_out_dir(const std::string& dir) {
  if (dir.empty()) throw SpecError("--out directory is required");
  fs::create_directories(dir);
}

PerfTable load_perf_cache(const std::string& path) {
  PerfTable table;
  if (path.empty() || !fs::exists(path)) return table;
  table = PerfTable::deserialize(read_text_file(path));
  return table;
}

void save_perf_cache(const std::string& path, const PerfTable& table) {
  if (path.empty()) return;
  write_text_file(path, table.serialize());
}

// Expands the partially-specified operating point into a concrete tensor
// split, defaulting the region to the first tiling of the die grid and the
// leftover tensor degree onto the hidden dimension.
TpSplit resolve_split(const StrategyChoice& choice, const WaferConfig& wafer) {
  if (choice.tp < 1 || choice.pp < 1)
    throw SpecError("config.strategy: tp and pp must be positive");
  TpSplit split;
  if (choice.region_w > 0) {
    split.region_w = choice.region_w;
    split.region_h = choice.region_h;
    if (split.region_w * split.region_h != choice.tp)
      throw SpecError("config.strategy.region: area must equal tp");
  } else {
    for (int w = 1; w <= choice.tp; ++w) {
      if (choice.tp % w != 0) continue;
      const int h = choice.tp / w;
      if (wafer.grid_x % w != 0 || wafer.grid_y % h != 0) continue;
      const int slots = (wafer.grid_x / w) * (wafer.grid_y / h);
      if (slots < choice.pp) continue;
      split.region_w = w;
      split.region_h = h;
      break;
    }
    if (split.region_w == 0)
      throw InfeasibleError("no region tiling fits tp=" + std::to_string(choice.tp) +
                            " pp=" + std::to_string(choice.pp) + " on grid " +
                            std::to_string(wafer.grid_x) + "x" +
                            std::to_string(wafer.grid_y));
  }
  split.fb = choice.fb;
  split.fs = choice.fs;
  const int rest = choice.tp / (choice.fb * choice.fs);
  if (choice.fb * choice.fs * rest != choice.tp)
    throw SpecError("config.strategy.split: b*s must divide tp");
  if (choice.fh > 0) {
    split.fh = choice.fh;
    split.fk = choice.fk > 0 ? choice.fk : rest / choice.fh;
  } else if (choice.fk > 0) {
    split.fk = choice.fk;
    split.fh = rest / choice.fk;
  } else {
    split.fh = rest;
    split.fk = 1;
  }
  if (split.fb * split.fs * split.fh * split.fk != choice.tp)
    throw SpecError("config.strategy.split: factors must multiply to tp");
  return split;
}

int run_enumerate(const RunSpec& spec, const std::string& out_dir,
                  std::uint64_t input_hash) {
  if (!spec.templates)
    throw SpecError("config.templates is required for the enumerate command");
  ensure_out_dir(out_dir);
  const std::vector<WaferConfig> wafers = enumerate_wafer_configs(*spec.templates);
  write_text_file(out_path(out_dir, "wafers.json"), wafer_catalog_json(wafers, input_hash));
  write_text_file(out_path(out_dir, "wafers.csv"), wafer_catalog_csv(wafers));
  std::printf("enumerate: %zu feasible wafer configs -> %s\n", wafers.size(),
              out_dir.c_str());
  return kExitOk;
}

int run_evaluate(const RunSpec& spec, const std::string& out_dir,
                 std::uint64_t input_hash) {
  if (spec.wafers.empty())
    throw SpecError("config.wafers must list exactly one wafer for evaluate");
  if (!spec.strategy)
    throw SpecError("config.strategy is required for the evaluate command");
  ensure_out_dir(out_dir);
  const WaferConfig& wafer = spec.wafers.front();
  const TpSplit split = resolve_split(*spec.strategy, wafer);

  PerfTable table = load_perf_cache(spec.perf_cache);
  const StrategyOutcome result = evaluate_fixed_point(
      wafer, spec.workload, table, spec.cost, spec.search, split, spec.strategy->pp);
  save_perf_cache(spec.perf_cache, table);

  write_text_file(out_path(out_dir, "report.json"),
                  evaluation_json(wafer, spec.workload, result.strategy, result.report,
                                  input_hash));
  write_text_file(out_path(out_dir, "stages.csv"), stages_csv(result.report));
  write_text_file(out_path(out_dir, "trace.json"),
                  export_chrome_trace(result.report.timeline));
  write_text_file(out_path(out_dir, "placement.txt"),
                  ascii_diagram(result.strategy.placement));
  std::printf("evaluate: %s tp=%d pp=%d iteration=%.6g s throughput=%.6g FLOP/s\n",
              wafer.label.c_str(), result.strategy.tp, result.strategy.pp,
              result.report.iteration_time, result.report.throughput);
  return kExitOk;
}

int run_search(const RunSpec& spec, const std::string& out_dir,
               std::uint64_t input_hash) {
  if (spec.wafers.empty())
    throw SpecError("config.wafers must list at least one wafer for search");
  ensure_out_dir(out_dir);

  PerfTable table = load_perf_cache(spec.perf_cache);
  std::vector<std::pair<WaferConfig, SearchResult>> ranked;
  for (const WaferConfig& wafer : spec.wafers) {
    SearchResult res =
        search_parallelism(wafer, spec.workload, table, spec.cost, spec.search);
    std::printf("search: %s -> %s\n", wafer.label.c_str(), res.verdict.c_str());
    ranked.emplace_back(wafer, std::move(res));
  }
  save_perf_cache(spec.perf_cache, table);

  // Feasible rows first, best training throughput on top.
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second.feasible != b.second.feasible) return a.second.feasible;
    return a.second.best_report.throughput > b.second.best_report.throughput;
  });

  const bool single = ranked.size() == 1;
  for (const auto& [wafer, res] : ranked) {
    const std::string tag = single ? "" : "-" + wafer.label;
    write_text_file(out_path(out_dir, "search" + tag + ".json"),
                    search_json(wafer, spec.workload, res, input_hash));
    write_text_file(out_path(out_dir, "candidates" + tag + ".csv"),
                    candidates_csv(res.candidates));
    if (res.feasible) {
      write_text_file(out_path(out_dir, "placement" + tag + ".txt"),
                      ascii_diagram(res.best.placement));
      write_text_file(out_path(out_dir, "trace" + tag + ".json"),
                      export_chrome_trace(res.best_report.timeline));
    }
  }
  if (!single) write_text_file(out_path(out_dir, "ranked.csv"), ranking_csv(ranked));

  const bool any_feasible =
      std::any_of(ranked.begin(), ranked.end(),
                  [](const auto& r) { return r.second.feasible; });
  if (!any_feasible) {
    std::fprintf(stderr, "search: no feasible strategy on any wafer\n");
    return kExitInfeasible;
  }
  return kExitOk;
}

int run_report(const std::string& config_path, const std::string& out_file) {
  const std::string text = render_report_text(read_text_file(config_path));
  if (out_file.empty()) {
    std::fputs(text.c_str(), stdout);
  } else {
    write_text_file(out_file, text);
    std::printf("report: wrote %s\n", out_file.c_str());
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string(kToolName) +
               " - wafer-scale training design space exploration"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  std::string config_path;
  std::string out_dir;
  CliOverrides ov;

  auto add_common = [&](CLI::App* cmd, bool search_knobs) {
    cmd->add_option("--config", config_path, "input config JSON")->required();
    cmd->add_option("--out", out_dir, "output directory");
    if (search_knobs) {
      cmd->add_option("--seed", ov.seed, "override search.seed");
      cmd->add_option("--omega", ov.omega, "override elite survivor share");
      cmd->add_option("--steps", ov.steps, "override optimizer step count");
      cmd->add_option("--population", ov.population, "override population size");
      cmd->add_option("--threads", ov.threads, "override worker thread count");
      cmd->add_flag("--fast", ov.fast, "skip the global refinement stage");
    }
  };

  CLI::App* cmd_enum = app.add_subcommand("enumerate", "list feasible wafer configs");
  add_common(cmd_enum, false);
  CLI::App* cmd_eval = app.add_subcommand("evaluate", "cost one fixed strategy");
  add_common(cmd_eval, true);
  CLI::App* cmd_search = app.add_subcommand("search", "optimize strategy per wafer");
  add_common(cmd_search, true);

  CLI::App* cmd_report = app.add_subcommand("report", "render a JSON report as text");
  cmd_report->add_option("--config", config_path, "report JSON to render")->required();
  cmd_report->add_option("--out", out_dir, "output text file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitSchema;
  }

  try {
    if (cmd_report->parsed()) return run_report(config_path, out_dir);

    const std::string config_text = read_text_file(config_path);
    const std::uint64_t input_hash = fnv1a(config_text.data(), config_text.size());
    RunSpec spec = parse_run_spec(config_text);
    apply_overrides(spec, ov);

    if (cmd_enum->parsed()) return run_enumerate(spec, out_dir, input_hash);
    if (cmd_eval->parsed()) return run_evaluate(spec, out_dir, input_hash);
    return run_search(spec, out_dir, input_hash);
  } catch (const SpecError& e) {
    std::fprintf(stderr, "schema error: %s\n", e.what());
    return kExitSchema;
  } catch (const InfeasibleError& e) {
    std::fprintf(stderr, "infeasible: %s\n", e.what());
    return kExitInfeasible;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kExitInternal;
  }
}
