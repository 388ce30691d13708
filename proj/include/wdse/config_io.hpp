#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wdse/hw_model.hpp"
#include "wdse/search.hpp"
#include "wdse/workload.hpp"

namespace wdse {

// Fixed operating point for the `evaluate` command.  Zeroed fields derive
// defaults: region shape picks the first tiling of the die grid, and an
// unspecified split puts the whole tensor degree on the hidden dimension.
struct StrategyChoice {
  int tp = 1, pp = 1;
  int region_w = 0, region_h = 0;
  int fb = 1, fs = 1, fh = 0, fk = 0;
};

struct RunSpec {
  TrainingWorkload workload;
  std::vector<WaferConfig> wafers;
  std::optional<TemplateRanges> templates;  // `enumerate` input
  std::optional<StrategyChoice> strategy;   // `evaluate` input
  CostParams cost;
  SearchOptions search;
  std::string perf_cache;  // empty disables the on-disk operator cost cache
};

// Strict parse: unknown keys, wrong types, and missing required fields all
// raise SpecError with the offending JSON path.
RunSpec parse_run_spec(const std::string& json_text);
RunSpec load_run_spec(const std::string& path);

// --- Built-in hardware presets -------------------------------------------------

DieSpec die_preset(const std::string& name);           // core16x16, core18x18
DramChipletSpec dram_preset(const std::string& name);  // dram-12g-250 ...
WaferConfig wafer_preset(const std::string& name);
std::vector<std::string> wafer_preset_names();

// --- Deterministic report writers -----------------------------------------------
//
// No wall-clock anywhere: reports carry the tool version and a content hash
// of the input, so fixed-seed runs serialize byte-identically.

std::string format_hash(std::uint64_t h);

std::string wafer_catalog_json(const std::vector<WaferConfig>& wafers,
                               std::uint64_t input_hash);
std::string wafer_catalog_csv(const std::vector<WaferConfig>& wafers);

std::string evaluation_json(const WaferConfig& wafer, const TrainingWorkload& workload,
                            const StrategyConfig& strategy, const EvaluationReport& report,
                            std::uint64_t input_hash);
std::string stages_csv(const EvaluationReport& report);

std::string candidates_csv(const std::vector<CandidateOutcome>& candidates);
std::string search_json(const WaferConfig& wafer, const TrainingWorkload& workload,
                        const SearchResult& result, std::uint64_t input_hash);
std::string ranking_csv(const std::vector<std::pair<WaferConfig, SearchResult>>& ranked);

// Renders a previously written evaluation/search JSON report as plain text
// (summary lines, stage table, placement diagram).
std::string render_report_text(const std::string& report_json_text);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace wdse
