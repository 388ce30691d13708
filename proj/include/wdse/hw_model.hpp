#pragma once

#include <string>
#include <vector>

#include "wdse/units.hpp"

namespace wdse {

// One compute core inside a die's core array.
struct CoreSpec {
  Flops peak_flops = 0;      // FP16 FLOP/s at nominal frequency
  Bytes sram_bytes = 0;      // local scratchpad, bounds GEMM tile sizes
  double frequency_hz = 0;
};

// A rectangular compute die tiled with identical cores.
struct DieSpec {
  std::string name;
  double width_mm = 0;
  double height_mm = 0;
  int core_rows = 0;
  int core_cols = 0;
  CoreSpec core;
  double edge_io_bandwidth = 0;  // bytes/s, total across all four die edges
  double dram_io_fraction = 0;   // share of edge IO reserved for DRAM PHYs
};

// A DRAM chiplet stacked beside a compute die.
struct DramChipletSpec {
  std::string name;
  double width_mm = 0;
  double height_mm = 0;
  Bytes capacity_bytes = 0;
  double bandwidth = 0;  // bytes/s per chiplet interface
};

// A full wafer candidate: a grid_x by grid_y mesh of dies, each with
// dram_chiplets_per_die chiplets attached on its vertical edges.
struct WaferConfig {
  std::string label;
  int grid_x = 0;
  int grid_y = 0;
  DieSpec die;
  int dram_chiplets_per_die = 0;
  DramChipletSpec dram;
  double d2d_bandwidth = 0;  // bytes/s per mesh link
  Seconds d2d_latency = 0;
  double wafer_width_mm = 198.0;
  double wafer_height_mm = 198.0;

  int die_count() const { return grid_x * grid_y; }
  Flops die_flops() const {
    return static_cast<Flops>(die.core_rows) * die.core_cols * die.core.peak_flops;
  }
  Bytes die_sram_bytes() const {
    return static_cast<Bytes>(die.core_rows) * die.core_cols * die.core.sram_bytes;
  }
  Bytes die_dram_bytes() const {
    return static_cast<Bytes>(dram_chiplets_per_die) * dram.capacity_bytes;
  }
  double die_dram_bandwidth() const {
    return dram_chiplets_per_die * dram.bandwidth;
  }
  Flops wafer_flops() const { return die_flops() * die_count(); }
  Bytes wafer_dram_bytes() const { return die_dram_bytes() * die_count(); }
};

struct Feasibility {
  bool ok = true;
  std::vector<std::string> violations;  // constraint names with detail
};

// Chiplets stack vertically along the left/right die edges, at most
// kMaxChipletsPerSide per side.  A side holding k chiplets occupies
// ceil(k / floor(die_h / chiplet_h)) columns of chiplet width.
inline constexpr int kMaxChipletsPerSide = 6;

// Total extra horizontal extent (mm) the DRAM chiplets add to one die,
// or a negative value when the chiplets cannot be attached at all.
double dram_columns_width_mm(const DieSpec& die, const DramChipletSpec& dram,
                             int chiplets_per_die);

Feasibility validate_config(const WaferConfig& cfg);

// Largest per-link D2D bandwidth the edge IO budget admits once the DRAM
// interfaces take their minimum share.  Non-increasing in chiplet count.
double max_feasible_d2d_bandwidth(const DieSpec& die, const DramChipletSpec& dram,
                                  int chiplets_per_die);

struct DieMetrics {
  Flops peak_flops = 0;
  Bytes sram_bytes = 0;
  double area_mm2 = 0;
};

DieMetrics derive_die_metrics(const DieSpec& die);

// Candidate axes for wafer enumeration.  The cross product of all axes is
// generated in lexicographic order and filtered through validate_config.
struct TemplateRanges {
  std::vector<std::pair<int, int>> grids;  // (grid_x, grid_y)
  std::vector<DieSpec> dies;
  std::vector<int> dram_chiplet_counts;
  std::vector<DramChipletSpec> dram_chiplets;
  std::vector<double> d2d_bandwidths;
  std::vector<Seconds> d2d_latencies;
  double wafer_width_mm = 198.0;
  double wafer_height_mm = 198.0;
};

std::vector<WaferConfig> enumerate_wafer_configs(const TemplateRanges& ranges);

}  // namespace wdse
