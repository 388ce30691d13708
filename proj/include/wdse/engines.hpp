#pragma once

#include <map>
#include <string>
#include <vector>

#include "wdse/cost_model.hpp"
#include "wdse/hw_model.hpp"
#include "wdse/pipeline.hpp"
#include "wdse/placement.hpp"
#include "wdse/recomp.hpp"
#include "wdse/units.hpp"
#include "wdse/workload.hpp"

namespace wdse {

// Tensor-parallel decomposition: a physical region shape plus the logical
// factors splitting batch, sequence, hidden and reduction dimensions.
// fb*fs*fh*fk must equal region_w*region_h.
struct TpSplit {
  int region_w = 1, region_h = 1;
  int fb = 1, fs = 1, fh = 1, fk = 1;
  int tp() const { return fb * fs * fh * fk; }
  int dies() const { return region_w * region_h; }
};

enum class RingKind { kNone, kRing, kFoldedRing, kChain };

struct RingTime {
  Seconds time = 0;
  RingKind kind = RingKind::kNone;
};

// All-reduce over a ring embedded in the tensor-parallel region.  A proper
// rectangle with an even die count carries a cycle on disjoint links; a 1-wide
// strip folds the ring back over shared links at half bandwidth; an odd die
// count admits no cycle and degrades to a chain with doubled startup cost.
RingTime ring_allreduce_mesh(const TpSplit& split, Bytes tensor_bytes, double link_bw,
                             Seconds alpha);

// Per-die shard of one operator under a split.  Column-parallel GEMMs
// (qkv, mlp_up) divide N by fh; row-parallel GEMMs (proj, mlp_down) divide K
// by fh and all-reduce their output.  fb*fs divides the row dimension and fk
// splits the reduction of column-parallel ops, adding a partial-sum reduce.
OpShape shard_op(const OperatorNode& op, const TpSplit& split);

std::vector<OpShape> collect_stage_shapes(const std::vector<OperatorNode>& layer_ops,
                                          const TpSplit& split);

// One operator class aggregated over a stage's layers.
struct StageOpCost {
  OperatorKind kind;
  Seconds fwd = 0, bwd = 0;            // compute + collectives, all layers
  Seconds fwd_comm = 0, bwd_comm = 0;  // collective share of the above
  Bytes checkpoint_bytes = 0;          // per die, one microbatch, all layers
  Flops fwd_flops = 0, bwd_flops = 0;  // per die
  Bytes fwd_ema = 0, bwd_ema = 0;      // per die
  bool ring_fallback = false;
};

struct StageBreakdown {
  std::vector<StageOpCost> ops;
  Seconds fwd_total = 0, bwd_total = 0;
  Flops fwd_flops = 0, bwd_flops = 0;
  Bytes fwd_ema = 0, bwd_ema = 0;
  bool ring_fallback = false;
};

StageBreakdown estimate_stage_timing(const std::vector<OperatorNode>& layer_ops,
                                     int layers, const TpSplit& split,
                                     const WaferConfig& wafer, const PerfTable& table,
                                     const CostParams& params);

// --- Congestion-aware pipeline/offload link assignment -----------------------

struct CommTask {
  int from_stage = 0;
  int to_stage = 0;
  Bytes bytes = 0;  // per-iteration traffic
  bool is_pair = false;
};

struct RoutedTask {
  CommTask task;
  RoutedPath path;
  double effective_bw = 0;  // bottleneck link bandwidth under sharing
  Seconds effective_time = 0;
};

struct LinkLoadMap {
  std::vector<RoutedTask> tasks;  // in assignment order (largest bytes first)
  std::map<MeshLink, Bytes> link_bytes;
  std::map<MeshLink, int> link_tasks;
};

// Largest tasks route first over the path minimizing
// sum_links(1 + punishment * links_already_assigned_there); effective
// bandwidth divides by the final co-occupant count on the bottleneck link.
LinkLoadMap pp_link_allocation(const PlacementMap& placement,
                               const std::vector<CommTask>& tasks, double punishment);

inline constexpr double kDefaultPunishment = 4.0;

// --- Location-aware offload assignment ----------------------------------------

struct AllocationEntry {
  int helper = 0;
  Bytes bytes = 0;
  double cost = 0;  // hop distance * (1 + links shared with pipeline routes)
};

struct SenderAllocation {
  int sender = 0;
  std::vector<AllocationEntry> entries;
};

struct AllocationSet {
  std::vector<SenderAllocation> senders;  // in descending-overflow order
  std::vector<Bytes> residual_free;       // per stage, headroom left over
  std::vector<MemPair> as_pairs() const;
};

// Senders claim helper headroom in descending overflow order.  Each sender
// walks its helper candidates cheapest-cost first (stage id breaks ties),
// splitting across helpers when one runs dry.  Throws InfeasibleError when
// the combined headroom cannot absorb the combined overflow.
AllocationSet allocate_overflow(const SenderHelperSplit& split,
                                const PlacementMap& placement);

// --- Whole-iteration evaluation ----------------------------------------------

struct StrategyConfig {
  int tp = 1, pp = 1;
  TpSplit split;
  RecompPlan recomp;
  PlacementMap placement;
  std::vector<MemPair> alloc;  // offload assignments
};

struct StageReport {
  int layers = 0;
  Seconds fwd = 0, bwd = 0, recompute = 0;
  Bytes demand = 0, capacity = 0, offloaded = 0, received = 0;
  int peak_live = 0;
};

struct EvaluationReport {
  Seconds iteration_time = 0;
  Seconds t_max = 0;            // slowest stage's steady period per microbatch
  double placement_cost = 0;
  Flops useful_flops = 0;       // fwd+bwd, recomputation excluded
  Flops recompute_flops = 0;
  double throughput = 0;        // useful_flops / iteration_time
  double compute_utilization = 0;
  double dram_bw_utilization = 0;
  double link_utilization = 0;
  Seconds offload_stall = 0;
  double avg_pair_dist = 0;
  long long total_hops = 0;
  bool ring_fallback = false;
  bool memory_ok = true;
  std::vector<StageReport> stages;
  PipelineTimeline timeline;
  LinkLoadMap links;
};

// Stage memory/time models shared by the recompute planner and the
// evaluator; capacities and footprints are stage level (die value * tp).
std::vector<StageMemModel> build_stage_mem_models(
    const WaferConfig& wafer, const TrainingWorkload& workload,
    const std::vector<StageBreakdown>& stages, int tp, int pp);

EvaluationReport evaluate_iteration(const WaferConfig& wafer,
                                    const TrainingWorkload& workload,
                                    const StrategyConfig& strategy,
                                    const PerfTable& table, const CostParams& params,
                                    double punishment);

// --- First-order closed-form estimate ----------------------------------------

// Four-term first-order cost: compute and recomputation stretched by the 1F1B
// bubble, memory traffic approximated as flops/eta bytes, and collective plus
// pipeline traffic.  Deliberately blind to placement, routing conflicts, and
// checkpoint offloading; whatever checkpoint footprint per-die DRAM cannot
// hold converts into recomputation pro rata.  Lower is better.
struct BaselineCost {
  double total = 0;
  double c_comp = 0, c_recomp = 0, c_access = 0, c_comm = 0;
  double recompute_fraction = 0;
  int tp = 0, pp = 0;
};

inline constexpr double kDefaultEta = 100.0;  // assumed FLOPs per DRAM byte

BaselineCost analytic_baseline(const WaferConfig& wafer, const TrainingWorkload& workload,
                               int tp, int pp, double eta, const CostParams& params);

// True when some (fh, fk) factoring of tp splits heads and hidden size
// evenly; tp > 1 must additionally be even so collectives embed as rings.
bool split_admissible(const ModelConfig& model, int tp);

// Minimizes analytic_baseline over the (tp, pp) grid the closed form accepts
// (tp even or 1, tp*pp <= die count, pp <= layers <= microbatches).  This is
// what a designer armed with only the closed form would pick, so catalog
// rankings built on it expose the blind spots listed above.
BaselineCost baseline_search(const WaferConfig& wafer, const TrainingWorkload& workload,
                             double eta, const CostParams& params);

}  // namespace wdse
