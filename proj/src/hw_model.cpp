#include "wdse/hw_model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace wdse {

namespace {

// Relative slack for floating-point budget comparisons; geometry and
// bandwidth inputs are human-entered values, not computed chains.
constexpr double kTol = 1e-9;

bool leq(double a, double b) { return a <= b * (1.0 + kTol) + 1e-12; }

}  // namespace

double dram_columns_width_mm(const DieSpec& die, const DramChipletSpec& dram,
                             int chiplets_per_die) {
  if (chiplets_per_die == 0) return 0.0;
  if (chiplets_per_die < 0 || chiplets_per_die > 2 * kMaxChipletsPerSide) return -1.0;
  if (dram.height_mm <= 0 || dram.width_mm <= 0) return -1.0;
  const int per_column = static_cast<int>(die.height_mm / dram.height_mm);
  if (per_column < 1) return -1.0;
  // Fill one side first, spill the remainder to the opposite side.
  const int side_a = std::min(chiplets_per_die, kMaxChipletsPerSide);
  const int side_b = chiplets_per_die - side_a;
  const int cols = ceil_div(side_a, per_column) + ceil_div(side_b, per_column);
  return cols * dram.width_mm;
}

double max_feasible_d2d_bandwidth(const DieSpec& die, const DramChipletSpec& dram,
                                  int chiplets_per_die) {
  const double dram_io = chiplets_per_die * dram.bandwidth;
  return std::max(0.0, die.edge_io_bandwidth - dram_io);
}

DieMetrics derive_die_metrics(const DieSpec& die) {
  DieMetrics m;
  m.peak_flops = static_cast<Flops>(die.core_rows) * die.core_cols * die.core.peak_flops;
  m.sram_bytes = static_cast<Bytes>(die.core_rows) * die.core_cols * die.core.sram_bytes;
  m.area_mm2 = die.width_mm * die.height_mm;
  return m;
}

Feasibility validate_config(const WaferConfig& cfg) {
  Feasibility f;
  auto fail = [&f](const std::string& name, const std::string& detail) {
    f.ok = false;
    f.violations.push_back(name + ": " + detail);
  };

  if (cfg.grid_x < 1 || cfg.grid_y < 1) fail("grid", "die grid must be at least 1x1");
  if (cfg.die.core_rows < 1 || cfg.die.core_cols < 1) fail("die", "empty core array");
  if (cfg.die.core.peak_flops <= 0) fail("die", "core peak FLOPS must be positive");
  if (cfg.die.width_mm <= 0 || cfg.die.height_mm <= 0) fail("die", "non-positive die dims");
  if (cfg.dram_chiplets_per_die < 0) fail("dram", "negative chiplet count");
  if (cfg.dram_chiplets_per_die > 0 && cfg.dram.capacity_bytes <= 0)
    fail("dram", "chiplet capacity must be positive");
  if (cfg.d2d_bandwidth < 0) fail("io", "negative d2d bandwidth");
  if (cfg.die.dram_io_fraction < 0 || cfg.die.dram_io_fraction > 1)
    fail("io", "dram_io_fraction outside [0,1]");
  if (!f.ok) return f;

  if (cfg.dram_chiplets_per_die > 2 * kMaxChipletsPerSide) {
    std::ostringstream os;
    os << cfg.dram_chiplets_per_die << " chiplets exceed " << kMaxChipletsPerSide
       << " per vertical edge";
    fail("dram side count", os.str());
  }

  const double cols_mm =
      dram_columns_width_mm(cfg.die, cfg.dram, cfg.dram_chiplets_per_die);
  if (cols_mm < 0) {
    fail("dram geometry", "chiplet stack does not fit beside the die");
  } else {
    const double cell_w = cfg.die.width_mm + cols_mm;
    const double used_w = cfg.grid_x * cell_w;
    const double used_h = cfg.grid_y * cfg.die.height_mm;
    if (!leq(used_w, cfg.wafer_width_mm)) {
      std::ostringstream os;
      os << used_w << " mm of die+DRAM exceeds wafer width " << cfg.wafer_width_mm;
      fail("area horizontal", os.str());
    }
    if (!leq(used_h, cfg.wafer_height_mm)) {
      std::ostringstream os;
      os << used_h << " mm of dies exceeds wafer height " << cfg.wafer_height_mm;
      fail("area vertical", os.str());
    }
  }

  // Edge IO splits linearly: DRAM PHYs must fit the reserved fraction and
  // the mesh link must fit the remainder.
  const double dram_io = cfg.dram_chiplets_per_die * cfg.dram.bandwidth;
  const double dram_budget = cfg.die.dram_io_fraction * cfg.die.edge_io_bandwidth;
  const double d2d_budget = (1.0 - cfg.die.dram_io_fraction) * cfg.die.edge_io_bandwidth;
  if (!leq(dram_io, dram_budget)) {
    std::ostringstream os;
    os << "DRAM interfaces need " << dram_io << " B/s, reserved share is " << dram_budget;
    fail("IO budget", os.str());
  }
  if (!leq(cfg.d2d_bandwidth, d2d_budget)) {
    std::ostringstream os;
    os << "d2d link needs " << cfg.d2d_bandwidth << " B/s, remaining share is "
       << d2d_budget;
    fail("IO budget", os.str());
  }
  return f;
}

std::vector<WaferConfig> enumerate_wafer_configs(const TemplateRanges& r) {
  std::vector<WaferConfig> out;
  for (const auto& grid : r.grids)
    for (const auto& die : r.dies)
      for (int count : r.dram_chiplet_counts)
        for (const auto& dram : r.dram_chiplets)
          for (double d2d : r.d2d_bandwidths)
            for (Seconds lat : r.d2d_latencies) {
              WaferConfig cfg;
              cfg.grid_x = grid.first;
              cfg.grid_y = grid.second;
              cfg.die = die;
              cfg.dram_chiplets_per_die = count;
              cfg.dram = dram;
              cfg.d2d_bandwidth = d2d;
              cfg.d2d_latency = lat;
              cfg.wafer_width_mm = r.wafer_width_mm;
              cfg.wafer_height_mm = r.wafer_height_mm;
              if (!validate_config(cfg).ok) continue;
              std::ostringstream label;
              label << "g" << cfg.grid_x << "x" << cfg.grid_y << "-" << die.name << "-"
                    << count << "x" << dram.name << "-d2d"
                    << static_cast<long long>(d2d / 1e9);
              cfg.label = label.str();
              out.push_back(cfg);
            }
  return out;
}

}  // namespace wdse
