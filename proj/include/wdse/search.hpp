#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wdse/engines.hpp"

namespace wdse {

// --- Genetic refinement of one (tp, pp) operating point -----------------------

// The mutable strategy genes: what each stage stores, where each stage sits,
// and whose DRAM absorbs each stage's overflow.
struct Genome {
  std::vector<std::uint32_t> store_mask;  // bit i = stage keeps checkpoint item i
  PlacementMap placement;
  std::vector<MemPair> alloc;
};

// Immutable problem view shared by every genome evaluation.
struct GaContext {
  std::vector<StageMemModel> mem;  // stage-level footprints and per-item times
  std::vector<double> comm_pp;     // pipeline traffic weight per boundary
  int num_microbatches = 1;
  int pp() const { return static_cast<int>(mem.size()); }
  // Per-iteration round-trip traffic of one offload pair, used as its
  // placement weight.
  double pair_traffic(const MemPair& p) const;
};

GaContext make_ga_context(const WaferConfig& wafer, const TrainingWorkload& workload,
                          const std::vector<StageBreakdown>& breakdowns, int tp, int pp);

struct GenomeScore {
  double t_max = 0;
  double placement_cost = 0;
  double fitness = 0;  // (t_max/t0) * (cost/c0) against the seed genome
  bool feasible = false;
};

std::vector<Bytes> genome_demand(const GaContext& ctx,
                                 const std::vector<std::uint32_t>& masks);

// Exact-overflow check: every sender's allocation matches its overflow and no
// helper exceeds its headroom.
bool alloc_valid(const GaContext& ctx, const Genome& g);

// Rebuilds the offload assignment for the genome's masks and placement with
// the location-aware allocator.  Empty when the overflow cannot be absorbed.
std::optional<Genome> repair_alloc(const GaContext& ctx, Genome g);

GenomeScore score_genome(const GaContext& ctx, const Genome& g, double t0, double c0);

// Recompute-plan view of an explicit mask assignment, for reporting.
RecompPlan plan_from_mask(const GaContext& ctx, const std::vector<std::uint32_t>& masks,
                          Bytes quantum);

// Mutation and crossover primitives.  Choices are explicit parameters so the
// reachable neighborhood is enumerable in tests; the optimizer draws them
// from its RNG.  Every primitive returns capacity-valid genomes or nothing.
std::optional<Genome> op1_store_flip(const GaContext& ctx, const Genome& g, int stage,
                                     int item);
std::optional<std::pair<Genome, Genome>> op2_mask_exchange(const GaContext& ctx,
                                                           const Genome& a,
                                                           const Genome& b, int cut_stage);
std::optional<Genome> op3_region_swap(const GaContext& ctx, const Genome& g, int stage_a,
                                      int stage_b);
std::optional<Genome> op4_alloc_shift(const GaContext& ctx, const Genome& g,
                                      int sender_stage, bool add_mode, int pick,
                                      Bytes amount);
std::optional<std::pair<Genome, Genome>> op5_alloc_exchange(const GaContext& ctx,
                                                            const Genome& a,
                                                            const Genome& b,
                                                            int sender_stage);

struct GaParams {
  int population = 24;
  int steps = 100;
  double omega = 0.25;  // elite fraction carried over unchanged
  std::uint64_t seed = 1;
  int threads = 1;
};

struct GaStats {
  std::vector<double> best_trace;  // best-ever fitness after each step
  int evaluations = 0;
  int rejected_mutations = 0;
};

struct GaResult {
  Genome best;
  GenomeScore best_score;
  GaStats stats;
};

// Elitist generational search.  All randomness flows from params.seed on the
// coordinating thread; worker threads only run pure scoring, so results are
// independent of the thread count.  best_trace never increases.
GaResult ga_optimize(const GaContext& ctx, const Genome& seed_genome,
                     const GaParams& params);

// --- Parallelism-degree search -------------------------------------------------

struct SearchOptions {
  bool fast = false;  // skip the genetic refinement pass
  double omega = 0.25;
  int ga_steps = 60;
  int population = 24;
  std::uint64_t seed = 1;
  int threads = 1;
  Bytes quantum = kDefaultMemQuantum;
  double punishment = kDefaultPunishment;
  double eta = kDefaultEta;
  int exhaustive_limit = 8;       // placement chains enumerated up to this pp
  long long chain_budget = 20000; // and while the chain-count bound stays under this
  int anneal_iters = 1500;
  bool full_splits = false;  // also enumerate batch/sequence factors
};

struct CandidateOutcome {
  int mp = 0, tp = 0, pp = 0;
  TpSplit split;
  std::string disposition;  // evaluated | delegated | pruned:* | infeasible:*
  double throughput = 0;
  Seconds iteration_time = 0;
  Seconds t_max = 0;
  double placement_cost = 0;
};

struct SearchResult {
  bool feasible = false;
  std::string verdict;
  std::vector<CandidateOutcome> candidates;
  int best_index = -1;  // into candidates
  StrategyConfig best;
  EvaluationReport best_report;
  GaStats ga;
  GenomeScore ga_score;
  BaselineCost baseline;  // closed-form estimate at the winning degrees
};

// Sweeps every admissible (tp, pp, region shape, split) combination, prunes
// hard memory violations, marks candidates whose checkpoints exceed local
// DRAM as delegated to the offload planner, ranks survivors by modeled
// throughput, and optionally refines the winner genetically.
SearchResult search_parallelism(const WaferConfig& wafer, const TrainingWorkload& workload,
                                PerfTable& table, const CostParams& params,
                                const SearchOptions& options);

struct StrategyOutcome {
  CandidateOutcome outcome;
  StrategyConfig strategy;
  EvaluationReport report;
};

// Plans, places, allocates and evaluates one fixed operating point with the
// same constructive pipeline the sweep applies per candidate.  Throws
// InfeasibleError when the point cannot satisfy memory constraints.
StrategyOutcome evaluate_fixed_point(const WaferConfig& wafer,
                                     const TrainingWorkload& workload, PerfTable& table,
                                     const CostParams& params, const SearchOptions& options,
                                     const TpSplit& split, int pp);

}  // namespace wdse
