#pragma once

#include <cstdint>
#include <vector>

#include "wdse/units.hpp"
#include "wdse/workload.hpp"

namespace wdse {

inline constexpr Bytes kDefaultMemQuantum = 256 * MiB;

// One storable checkpoint class within a stage: the peak resident footprint
// if stored (all layers, all live microbatches, tensor-parallel sharded) and
// the per-microbatch forward time bought back by not replaying it.
struct StageMemItem {
  OperatorKind kind;
  Bytes bytes = 0;
  Seconds fwd_time = 0;
};

// Memory and timing view of one pipeline stage as the planner sees it.
struct StageMemModel {
  std::vector<StageMemItem> items;
  Seconds fwd_time = 0;   // sum of item fwd times
  Seconds bwd_time = 0;
  Bytes fixed_bytes = 0;  // weights/optimizer + boundary activations, not optional
  Bytes capacity = 0;     // DRAM reachable by this stage's dies
};

// Quantized storage/time trade-off curve for one stage: saved[q] is the
// maximum forward time recovered by storing checkpoints occupying at most q
// quanta, store_mask[q] the chosen item subset.  saved[] is non-decreasing
// and saved[max] equals the full forward time.
struct RecompProfile {
  Bytes quantum = kDefaultMemQuantum;
  std::vector<Seconds> saved;
  std::vector<std::uint32_t> store_mask;
  int max_quanta() const { return static_cast<int>(saved.size()) - 1; }
};

RecompProfile recomp_profile(const std::vector<StageMemItem>& items, Bytes quantum);

// Joint recomputation plan across all stages.
struct RecompPlan {
  Bytes quantum = kDefaultMemQuantum;
  std::vector<std::uint32_t> store_mask;  // per stage, bit i = items[i] stored
  std::vector<Bytes> stored_bytes;        // exact bytes of stored checkpoints
  std::vector<Bytes> demand_bytes;        // fixed + stored
  std::vector<Seconds> stage_time;        // bwd + 2*fwd - saved (steady period)
  std::vector<Seconds> recompute_time;    // fwd - saved, charged per backward
  Seconds t_max = 0;
};

// Minimizes the slowest stage's steady period by splitting the wafer-wide
// checkpoint budget across stages.  A stage may claim more quanta than its
// own capacity (the surplus later offloads to helper stages); the total never
// exceeds the sum of per-stage headrooms.  Budget ties pick the smaller claim.
RecompPlan plan_recompute(const std::vector<StageMemModel>& stages, Bytes quantum);

struct StageOverflow {
  int stage = 0;
  Bytes bytes = 0;  // demand above capacity (sender) or headroom (helper)
};

struct SenderHelperSplit {
  std::vector<StageOverflow> senders;  // overflow descending, stage id breaks ties
  std::vector<StageOverflow> helpers;  // free capacity descending
};

SenderHelperSplit find_senders_helpers(const std::vector<Bytes>& demand,
                                       const std::vector<Bytes>& capacity);

// One offload assignment: `bytes` of stage `sender`'s checkpoints live in
// stage `helper`'s DRAM.
struct MemPair {
  int sender = 0;
  int helper = 0;
  Bytes bytes = 0;
};

// Greedy pairing, largest overflow against largest headroom; senders may
// span several helpers and helpers may serve several senders.  Throws
// InfeasibleError when total overflow exceeds total headroom.
std::vector<MemPair> pair_memory(const SenderHelperSplit& split);

}  // namespace wdse
