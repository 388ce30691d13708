#pragma once

#include <string>
#include <vector>

#include "wdse/units.hpp"

namespace wdse {

// Per-stage steady-state work for one microbatch.  recompute_time is charged
// at the start of every backward event (checkpoint replay happens just before
// the gradient pass consumes it).
struct StageTiming {
  Seconds fwd_time = 0;
  Seconds bwd_time = 0;
  Seconds recompute_time = 0;
};

struct PipelineEvent {
  int stage = 0;
  int microbatch = 0;  // 0-based
  bool backward = false;
  Seconds start = 0;
  Seconds end = 0;
};

struct PipelineTimeline {
  int num_stages = 0;
  int num_microbatches = 0;
  std::vector<PipelineEvent> events;  // grouped by stage, in execution order
  Seconds iteration_time = 0;

  // Highest simultaneous count of forward-complete, backward-pending
  // microbatches per stage; equals p - s under one-forward-one-backward.
  std::vector<int> peak_live;
};

// One-forward-one-backward schedule for p stages and n >= p microbatches.
// Stage s (0-based) runs p-s warmup forwards, n-p+s backward/forward
// alternations, and p-s drain backwards.  transfer_time[i] delays activation
// and gradient hand-off across the boundary between stages i and i+1.
PipelineTimeline schedule_1f1b(const std::vector<StageTiming>& stages, int num_microbatches,
                               const std::vector<Seconds>& transfer_time);

// Microbatches a stage must hold live at its peak.
int peak_live_microbatches(int pp, int stage);

// Chrome trace-event JSON for the timeline (one row per stage).
std::string export_chrome_trace(const PipelineTimeline& tl);

}  // namespace wdse
