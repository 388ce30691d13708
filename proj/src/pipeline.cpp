#include "wdse/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"

namespace wdse {

int peak_live_microbatches(int pp, int stage) {
  if (pp < 1 || stage < 0 || stage >= pp) throw SpecError("bad stage index");
  return pp - stage;
}

PipelineTimeline schedule_1f1b(const std::vector<StageTiming>& stages, int num_microbatches,
                               const std::vector<Seconds>& transfer_time) {
  const int p = static_cast<int>(stages.size());
  const int n = num_microbatches;
  if (p < 1) throw SpecError("pipeline needs at least one stage");
  if (n < p)
    throw InfeasibleError("one-forward-one-backward needs microbatches >= stages (" +
                          std::to_string(n) + " < " + std::to_string(p) + ")");
  if (static_cast<int>(transfer_time.size()) != p - 1)
    throw SpecError("need one transfer time per stage boundary");

  struct Slot {
    int microbatch;
    bool backward;
  };
  // Fixed per-stage issue order: warmup forwards, backward/forward
  // alternation, drain backwards.
  std::vector<std::vector<Slot>> order(p);
  for (int s = 0; s < p; ++s) {
    const int warm = p - s;
    auto& seq = order[s];
    seq.reserve(2 * n);
    for (int b = 0; b < warm; ++b) seq.push_back({b, false});
    for (int j = 0; j < n - warm; ++j) {
      seq.push_back({j, true});
      seq.push_back({warm + j, false});
    }
    for (int b = n - warm; b < n; ++b) seq.push_back({b, true});
  }

  const double kUnset = -1.0;
  std::vector<std::vector<Seconds>> fwd_end(p, std::vector<Seconds>(n, kUnset));
  std::vector<std::vector<Seconds>> bwd_end(p, std::vector<Seconds>(n, kUnset));
  std::vector<std::size_t> next(p, 0);
  std::vector<Seconds> stage_free(p, 0.0);

  PipelineTimeline tl;
  tl.num_stages = p;
  tl.num_microbatches = n;
  std::vector<std::vector<PipelineEvent>> per_stage(p);

  // List scheduling over the fixed order; cross-stage dependencies resolve
  // over repeated sweeps (backwards propagate from the last stage upward).
  bool progress = true;
  while (progress) {
    progress = false;
    for (int s = 0; s < p; ++s) {
      while (next[s] < order[s].size()) {
        const Slot slot = order[s][next[s]];
        Seconds ready = 0.0;
        if (!slot.backward) {
          if (s > 0) {
            if (fwd_end[s - 1][slot.microbatch] == kUnset) break;
            ready = fwd_end[s - 1][slot.microbatch] + transfer_time[s - 1];
          }
        } else {
          if (s < p - 1) {
            if (bwd_end[s + 1][slot.microbatch] == kUnset) break;
            ready = bwd_end[s + 1][slot.microbatch] + transfer_time[s];
          } else {
            if (fwd_end[s][slot.microbatch] == kUnset) break;
            ready = fwd_end[s][slot.microbatch];
          }
        }
        PipelineEvent ev;
        ev.stage = s;
        ev.microbatch = slot.microbatch;
        ev.backward = slot.backward;
        ev.start = std::max(stage_free[s], ready);
        const Seconds dur = slot.backward
                                ? stages[s].recompute_time + stages[s].bwd_time
                                : stages[s].fwd_time;
        ev.end = ev.start + dur;
        stage_free[s] = ev.end;
        (slot.backward ? bwd_end : fwd_end)[s][slot.microbatch] = ev.end;
        per_stage[s].push_back(ev);
        ++next[s];
        progress = true;
      }
    }
  }
  for (int s = 0; s < p; ++s)
    if (next[s] != order[s].size())
      throw std::runtime_error("pipeline schedule deadlocked; dependency cycle");

  tl.peak_live.assign(p, 0);
  for (int s = 0; s < p; ++s) {
    int live = 0;
    for (const auto& ev : per_stage[s]) {
      live += ev.backward ? -1 : 1;
      tl.peak_live[s] = std::max(tl.peak_live[s], live);
    }
    for (auto& ev : per_stage[s]) tl.events.push_back(ev);
  }
  for (const auto& ev : tl.events) tl.iteration_time = std::max(tl.iteration_time, ev.end);
  return tl;
}

std::string export_chrome_trace(const PipelineTimeline& tl) {
  nlohmann::ordered_json root;
  auto& events = root["traceEvents"];
  events = nlohmann::ordered_json::array();
  for (const auto& ev : tl.events) {
    nlohmann::ordered_json e;
    e["name"] = std::string(ev.backward ? "B" : "F") + std::to_string(ev.microbatch);
    e["cat"] = ev.backward ? "backward" : "forward";
    e["ph"] = "X";
    e["ts"] = ev.start * 1e6;
    e["dur"] = (ev.end - ev.start) * 1e6;
    e["pid"] = 0;
    e["tid"] = ev.stage;
    events.push_back(std::move(e));
  }
  root["displayTimeUnit"] = "ms";
  return root.dump(1);
}

}  // namespace wdse
