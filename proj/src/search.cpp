#include "wdse/search.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "wdse/parallel.hpp"

namespace wdse {

namespace {

double ratio(double x, double x0) {
  if (x0 > 0) return x / x0;
  return x > 0 ? std::numeric_limits<double>::infinity() : 1.0;
}

struct MemoryRails {
  std::vector<Bytes> demand, overflow, free;
};

MemoryRails rails(const GaContext& ctx, const std::vector<std::uint32_t>& masks) {
  MemoryRails r;
  r.demand = genome_demand(ctx, masks);
  r.overflow.resize(r.demand.size());
  r.free.resize(r.demand.size());
  for (std::size_t t = 0; t < r.demand.size(); ++t) {
    const Bytes cap = ctx.mem[t].capacity;
    r.overflow[t] = std::max<Bytes>(0, r.demand[t] - cap);
    r.free[t] = std::max<Bytes>(0, cap - r.demand[t]);
  }
  return r;
}

// Hop distance scaled by pipeline-route sharing, the same metric the
// location-aware allocator ranks helpers by.
double pair_cost(const PlacementMap& placement, const std::set<MeshLink>& pipeline,
                 int sender, int helper) {
  const RoutedPath p = route_stage_pair(placement, sender, helper, pipeline);
  const int dist = manhattan(region_center(placement.regions[sender]),
                             region_center(placement.regions[helper]));
  return dist * (1.0 + p.shared_with_pipeline);
}

}  // namespace

double GaContext::pair_traffic(const MemPair& p) const {
  const int live = std::max(1, peak_live_microbatches(pp(), p.sender));
  return 2.0 * static_cast<double>(p.bytes) * num_microbatches / live;
}

GaContext make_ga_context(const WaferConfig& wafer, const TrainingWorkload& workload,
                          const std::vector<StageBreakdown>& breakdowns, int tp, int pp) {
  GaContext ctx;
  ctx.mem = build_stage_mem_models(wafer, workload, breakdowns, tp, pp);
  ctx.num_microbatches = workload.num_microbatches;
  const Bytes boundary_full = static_cast<Bytes>(workload.microbatch_size) *
                              workload.model.seq_len * workload.model.hidden_size *
                              kActElemBytes;
  ctx.comm_pp.assign(std::max(0, pp - 1),
                     2.0 * static_cast<double>(workload.num_microbatches) *
                         static_cast<double>(boundary_full));
  return ctx;
}

std::vector<Bytes> genome_demand(const GaContext& ctx,
                                 const std::vector<std::uint32_t>& masks) {
  if (masks.size() != ctx.mem.size())
    throw SpecError("mask count does not match stage count");
  std::vector<Bytes> demand(masks.size(), 0);
  for (std::size_t t = 0; t < masks.size(); ++t) {
    Bytes stored = 0;
    for (std::size_t i = 0; i < ctx.mem[t].items.size(); ++i)
      if (masks[t] & (1u << i)) stored += ctx.mem[t].items[i].bytes;
    demand[t] = ctx.mem[t].fixed_bytes + stored;
  }
  return demand;
}

bool alloc_valid(const GaContext& ctx, const Genome& g) {
  const int pp = ctx.pp();
  if (static_cast<int>(g.store_mask.size()) != pp) return false;
  if (static_cast<int>(g.placement.regions.size()) != pp) return false;
  const MemoryRails r = rails(ctx, g.store_mask);
  std::vector<Bytes> sent(pp, 0), recv(pp, 0);
  for (const auto& p : g.alloc) {
    if (p.sender < 0 || p.sender >= pp || p.helper < 0 || p.helper >= pp) return false;
    if (p.sender == p.helper || p.bytes <= 0) return false;
    sent[p.sender] += p.bytes;
    recv[p.helper] += p.bytes;
  }
  for (int t = 0; t < pp; ++t) {
    if (sent[t] != r.overflow[t]) return false;
    if (recv[t] > r.free[t]) return false;
  }
  return true;
}

std::optional<Genome> repair_alloc(const GaContext& ctx, Genome g) {
  const MemoryRails r = rails(ctx, g.store_mask);
  std::vector<Bytes> caps(ctx.mem.size());
  for (std::size_t t = 0; t < ctx.mem.size(); ++t) caps[t] = ctx.mem[t].capacity;
  try {
    const SenderHelperSplit split = find_senders_helpers(r.demand, caps);
    g.alloc = allocate_overflow(split, g.placement).as_pairs();
  } catch (const InfeasibleError&) {
    return std::nullopt;
  }
  return g;
}

GenomeScore score_genome(const GaContext& ctx, const Genome& g, double t0, double c0) {
  GenomeScore s;
  if (!alloc_valid(ctx, g)) {
    s.fitness = std::numeric_limits<double>::infinity();
    return s;
  }
  s.feasible = true;
  for (std::size_t t = 0; t < ctx.mem.size(); ++t) {
    Seconds saved = 0;
    for (std::size_t i = 0; i < ctx.mem[t].items.size(); ++i)
      if (g.store_mask[t] & (1u << i)) saved += ctx.mem[t].items[i].fwd_time;
    s.t_max = std::max(s.t_max,
                       ctx.mem[t].bwd_time + 2 * ctx.mem[t].fwd_time - saved);
  }
  std::vector<double> weights;
  weights.reserve(g.alloc.size());
  for (const auto& p : g.alloc) weights.push_back(ctx.pair_traffic(p));
  s.placement_cost = global_cost(g.placement, ctx.comm_pp, g.alloc, weights).cost;
  s.fitness = ratio(s.t_max, t0) * ratio(s.placement_cost, c0);
  return s;
}

RecompPlan plan_from_mask(const GaContext& ctx, const std::vector<std::uint32_t>& masks,
                          Bytes quantum) {
  RecompPlan plan;
  plan.quantum = quantum;
  plan.store_mask = masks;
  const std::size_t pp = ctx.mem.size();
  plan.stored_bytes.resize(pp);
  plan.demand_bytes.resize(pp);
  plan.stage_time.resize(pp);
  plan.recompute_time.resize(pp);
  for (std::size_t t = 0; t < pp; ++t) {
    Bytes stored = 0;
    Seconds saved = 0;
    for (std::size_t i = 0; i < ctx.mem[t].items.size(); ++i) {
      if (masks[t] & (1u << i)) {
        stored += ctx.mem[t].items[i].bytes;
        saved += ctx.mem[t].items[i].fwd_time;
      }
    }
    plan.stored_bytes[t] = stored;
    plan.demand_bytes[t] = ctx.mem[t].fixed_bytes + stored;
    plan.recompute_time[t] = ctx.mem[t].fwd_time - saved;
    plan.stage_time[t] = ctx.mem[t].bwd_time + 2 * ctx.mem[t].fwd_time - saved;
    plan.t_max = std::max(plan.t_max, plan.stage_time[t]);
  }
  return plan;
}

std::optional<Genome> op1_store_flip(const GaContext& ctx, const Genome& g, int stage,
                                     int item) {
  if (stage < 0 || stage >= ctx.pp()) return std::nullopt;
  if (item < 0 || item >= static_cast<int>(ctx.mem[stage].items.size()))
    return std::nullopt;
  Genome child = g;
  child.store_mask[stage] ^= (1u << item);
  return repair_alloc(ctx, std::move(child));
}

std::optional<std::pair<Genome, Genome>> op2_mask_exchange(const GaContext& ctx,
                                                           const Genome& a,
                                                           const Genome& b,
                                                           int cut_stage) {
  const int pp = ctx.pp();
  if (cut_stage <= 0 || cut_stage >= pp) return std::nullopt;
  Genome ca = a, cb = b;
  for (int t = cut_stage; t < pp; ++t)
    std::swap(ca.store_mask[t], cb.store_mask[t]);
  auto ra = repair_alloc(ctx, std::move(ca));
  auto rb = repair_alloc(ctx, std::move(cb));
  if (!ra || !rb) return std::nullopt;
  return std::make_pair(std::move(*ra), std::move(*rb));
}

std::optional<Genome> op3_region_swap(const GaContext& ctx, const Genome& g, int stage_a,
                                      int stage_b) {
  const int pp = ctx.pp();
  if (stage_a < 0 || stage_a >= pp || stage_b < 0 || stage_b >= pp) return std::nullopt;
  if (stage_a == stage_b) return std::nullopt;
  Genome child = g;
  std::swap(child.placement.regions[stage_a], child.placement.regions[stage_b]);
  return child;
}

std::optional<Genome> op4_alloc_shift(const GaContext& ctx, const Genome& g,
                                      int sender_stage, bool add_mode, int pick,
                                      Bytes amount) {
  const int pp = ctx.pp();
  if (sender_stage < 0 || sender_stage >= pp || amount <= 0) return std::nullopt;
  const MemoryRails r = rails(ctx, g.store_mask);
  if (r.overflow[sender_stage] <= 0) return std::nullopt;

  std::vector<Bytes> recv(pp, 0);
  for (const auto& p : g.alloc) recv[p.helper] += p.bytes;

  // Entries of this sender, addressed by index into g.alloc.
  std::vector<std::size_t> mine;
  for (std::size_t i = 0; i < g.alloc.size(); ++i)
    if (g.alloc[i].sender == sender_stage) mine.push_back(i);
  if (mine.empty()) return std::nullopt;

  const std::set<MeshLink> pl = link_set(pipeline_routes(g.placement));
  auto cost = [&](int helper) { return pair_cost(g.placement, pl, sender_stage, helper); };

  Genome child = g;
  if (add_mode) {
    // Shift bytes onto a helper this sender does not use yet, preferring the
    // cheapest; bytes come off the sender's costliest current entries.
    std::set<int> current;
    for (const std::size_t i : mine) current.insert(g.alloc[i].helper);
    struct Cand {
      double c;
      int stage;
      Bytes room;
    };
    std::vector<Cand> cands;
    for (int h = 0; h < pp; ++h) {
      if (h == sender_stage || current.count(h)) continue;
      const Bytes room = r.free[h] - recv[h];
      if (room <= 0) continue;
      cands.push_back({cost(h), h, room});
    }
    if (cands.empty()) return std::nullopt;
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.c != b.c) return a.c < b.c;
      return a.stage < b.stage;
    });
    const Cand& target = cands[pick % cands.size()];

    std::sort(mine.begin(), mine.end(), [&](std::size_t a, std::size_t b) {
      const double ca = cost(g.alloc[a].helper), cb = cost(g.alloc[b].helper);
      if (ca != cb) return ca > cb;
      return g.alloc[a].helper > g.alloc[b].helper;
    });
    Bytes move = std::min(amount, target.room);
    Bytes moved = 0;
    for (const std::size_t i : mine) {
      if (move <= 0) break;
      const Bytes take = std::min(move, child.alloc[i].bytes);
      child.alloc[i].bytes -= take;
      move -= take;
      moved += take;
    }
    if (moved <= 0) return std::nullopt;
    child.alloc.push_back({sender_stage, target.stage, moved});
  } else {
    // Drain part of one chosen entry and respread it over the remaining
    // headroom, cheapest helper first.
    const std::size_t victim = mine[pick % mine.size()];
    const Bytes drain = std::min(amount, child.alloc[victim].bytes);
    if (drain <= 0) return std::nullopt;
    struct Cand {
      double c;
      int stage;
      Bytes room;
    };
    std::vector<Cand> cands;
    for (int h = 0; h < pp; ++h) {
      if (h == sender_stage || h == child.alloc[victim].helper) continue;
      const Bytes room = r.free[h] - recv[h];
      if (room <= 0) continue;
      cands.push_back({cost(h), h, room});
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.c != b.c) return a.c < b.c;
      return a.stage < b.stage;
    });
    Bytes rest = drain;
    std::vector<MemPair> extra;
    for (const Cand& c : cands) {
      if (rest <= 0) break;
      const Bytes take = std::min(rest, c.room);
      extra.push_back({sender_stage, c.stage, take});
      rest -= take;
    }
    if (rest > 0) return std::nullopt;
    child.alloc[victim].bytes -= drain;
    for (auto& e : extra) {
      // Merge into an existing entry for the same helper when present.
      bool merged = false;
      for (auto& p : child.alloc) {
        if (p.sender == e.sender && p.helper == e.helper && p.bytes > 0) {
          p.bytes += e.bytes;
          merged = true;
          break;
        }
      }
      if (!merged) child.alloc.push_back(e);
    }
  }
  std::erase_if(child.alloc, [](const MemPair& p) { return p.bytes <= 0; });
  if (!alloc_valid(ctx, child)) return std::nullopt;
  return child;
}

std::optional<std::pair<Genome, Genome>> op5_alloc_exchange(const GaContext& ctx,
                                                            const Genome& a,
                                                            const Genome& b,
                                                            int sender_stage) {
  const int pp = ctx.pp();
  if (sender_stage < 0 || sender_stage >= pp) return std::nullopt;
  Genome ca = a, cb = b;
  auto extract = [&](Genome& g) {
    std::vector<MemPair> mine;
    std::erase_if(g.alloc, [&](const MemPair& p) {
      if (p.sender != sender_stage) return false;
      mine.push_back(p);
      return true;
    });
    return mine;
  };
  std::vector<MemPair> ma = extract(ca);
  std::vector<MemPair> mb = extract(cb);
  if (ma.empty() && mb.empty()) return std::nullopt;
  for (const auto& p : mb) ca.alloc.push_back(p);
  for (const auto& p : ma) cb.alloc.push_back(p);
  if (!alloc_valid(ctx, ca) || !alloc_valid(ctx, cb)) return std::nullopt;
  return std::make_pair(std::move(ca), std::move(cb));
}

namespace {

struct ScoredGenome {
  Genome genome;
  GenomeScore score;
};

int tournament(std::mt19937_64& rng, const std::vector<ScoredGenome>& pool) {
  const int a = static_cast<int>(rng() % pool.size());
  const int b = static_cast<int>(rng() % pool.size());
  if (pool[a].score.fitness != pool[b].score.fitness)
    return pool[a].score.fitness < pool[b].score.fitness ? a : b;
  return std::min(a, b);
}

std::vector<int> overflow_stages(const GaContext& ctx,
                                 const std::vector<std::uint32_t>& masks) {
  const MemoryRails r = rails(ctx, masks);
  std::vector<int> out;
  for (std::size_t t = 0; t < r.overflow.size(); ++t)
    if (r.overflow[t] > 0) out.push_back(static_cast<int>(t));
  return out;
}

}  // namespace

GaResult ga_optimize(const GaContext& ctx, const Genome& seed_genome,
                     const GaParams& params) {
  if (params.population < 2) throw SpecError("population must be at least 2");
  if (params.steps < 0) throw SpecError("negative step count");
  if (params.omega < 0 || params.omega > 1)
    throw SpecError("elite fraction must lie in [0, 1]");
  const int pp = ctx.pp();
  if (pp < 1) throw SpecError("empty problem context");

  Genome seed = seed_genome;
  if (!alloc_valid(ctx, seed)) {
    auto repaired = repair_alloc(ctx, std::move(seed));
    if (!repaired)
      throw InfeasibleError("seed strategy cannot satisfy memory constraints");
    seed = std::move(*repaired);
  }
  GenomeScore raw = score_genome(ctx, seed, 1.0, 1.0);
  const double t0 = raw.t_max;
  const double c0 = raw.placement_cost;

  GaResult result;
  GaStats& stats = result.stats;
  std::mt19937_64 rng(mix_seed(params.seed, 0x6e61u));

  auto mutate_single = [&](const Genome& parent) -> std::optional<Genome> {
    const int which = static_cast<int>(rng() % 3);
    switch (which) {
      case 0: {
        const int stage = static_cast<int>(rng() % pp);
        const int items = static_cast<int>(ctx.mem[stage].items.size());
        if (items == 0) return std::nullopt;
        return op1_store_flip(ctx, parent, stage, static_cast<int>(rng() % items));
      }
      case 1: {
        if (pp < 2) return std::nullopt;
        const int a = static_cast<int>(rng() % pp);
        const int b = static_cast<int>(rng() % pp);
        return op3_region_swap(ctx, parent, a, b);
      }
      default: {
        const auto senders = overflow_stages(ctx, parent.store_mask);
        if (senders.empty()) return std::nullopt;
        const int s = senders[rng() % senders.size()];
        const bool add = (rng() & 1) != 0;
        const int pick = static_cast<int>(rng() % 8);
        const MemoryRails r = rails(ctx, parent.store_mask);
        const Bytes amount =
            std::max<Bytes>(1, r.overflow[s] >> (rng() % 4));
        return op4_alloc_shift(ctx, parent, s, add, pick, amount);
      }
    }
  };

  // Population: the seed plus mutated copies; failed mutations fall back to
  // plain copies so the population size is always met.
  std::vector<ScoredGenome> pop;
  pop.push_back({seed, {}});
  while (static_cast<int>(pop.size()) < params.population) {
    std::optional<Genome> child;
    for (int attempt = 0; attempt < 8 && !child; ++attempt) {
      child = mutate_single(seed);
      if (!child) ++stats.rejected_mutations;
    }
    pop.push_back({child ? std::move(*child) : seed, {}});
  }

  auto score_all = [&](std::vector<ScoredGenome>& v, std::size_t from) {
    parallel_for_indexed(v.size() - from, params.threads, [&](std::size_t i) {
      v[from + i].score = score_genome(ctx, v[from + i].genome, t0, c0);
    });
    stats.evaluations += static_cast<int>(v.size() - from);
  };
  score_all(pop, 0);

  result.best = pop[0].genome;
  result.best_score = pop[0].score;
  for (const auto& sg : pop)
    if (sg.score.fitness < result.best_score.fitness) {
      result.best = sg.genome;
      result.best_score = sg.score;
    }

  for (int step = 0; step < params.steps; ++step) {
    std::vector<ScoredGenome> offspring;
    offspring.reserve(params.population);
    while (static_cast<int>(offspring.size()) < params.population) {
      bool produced = false;
      for (int attempt = 0; attempt < 8 && !produced; ++attempt) {
        const int op = static_cast<int>(rng() % 5);
        const int pa = tournament(rng, pop);
        switch (op) {
          case 0: {
            const int stage = static_cast<int>(rng() % pp);
            const int items = static_cast<int>(ctx.mem[stage].items.size());
            if (items == 0) break;
            if (auto c = op1_store_flip(ctx, pop[pa].genome, stage,
                                        static_cast<int>(rng() % items))) {
              offspring.push_back({std::move(*c), {}});
              produced = true;
            }
            break;
          }
          case 1: {
            const int pb = tournament(rng, pop);
            if (pp < 2) break;
            const int cut = 1 + static_cast<int>(rng() % (pp - 1));
            if (auto c = op2_mask_exchange(ctx, pop[pa].genome, pop[pb].genome, cut)) {
              offspring.push_back({std::move(c->first), {}});
              if (static_cast<int>(offspring.size()) < params.population)
                offspring.push_back({std::move(c->second), {}});
              produced = true;
            }
            break;
          }
          case 2: {
            const int a = static_cast<int>(rng() % pp);
            const int b = static_cast<int>(rng() % pp);
            if (auto c = op3_region_swap(ctx, pop[pa].genome, a, b)) {
              offspring.push_back({std::move(*c), {}});
              produced = true;
            }
            break;
          }
          case 3: {
            const auto senders = overflow_stages(ctx, pop[pa].genome.store_mask);
            if (senders.empty()) break;
            const int s = senders[rng() % senders.size()];
            const bool add = (rng() & 1) != 0;
            const int pick = static_cast<int>(rng() % 8);
            const MemoryRails r = rails(ctx, pop[pa].genome.store_mask);
            const Bytes amount = std::max<Bytes>(1, r.overflow[s] >> (rng() % 4));
            if (auto c = op4_alloc_shift(ctx, pop[pa].genome, s, add, pick, amount)) {
              offspring.push_back({std::move(*c), {}});
              produced = true;
            }
            break;
          }
          default: {
            const int pb = tournament(rng, pop);
            const auto senders = overflow_stages(ctx, pop[pa].genome.store_mask);
            if (senders.empty()) break;
            const int s = senders[rng() % senders.size()];
            if (auto c =
                    op5_alloc_exchange(ctx, pop[pa].genome, pop[pb].genome, s)) {
              offspring.push_back({std::move(c->first), {}});
              if (static_cast<int>(offspring.size()) < params.population)
                offspring.push_back({std::move(c->second), {}});
              produced = true;
            }
            break;
          }
        }
        if (!produced) ++stats.rejected_mutations;
      }
      if (!produced) offspring.push_back({pop[tournament(rng, pop)].genome, {}});
    }

    score_all(offspring, 0);

    // Elitist survivor selection over parents + offspring.
    std::vector<ScoredGenome> pool;
    pool.reserve(pop.size() + offspring.size());
    for (auto& sg : pop) pool.push_back(std::move(sg));
    for (auto& sg : offspring) pool.push_back(std::move(sg));
    std::vector<int> order(pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return pool[a].score.fitness < pool[b].score.fitness;
    });
    const int elites = std::clamp(
        static_cast<int>(std::ceil(params.omega * params.population)), 1,
        params.population);
    std::vector<ScoredGenome> next;
    next.reserve(params.population);
    for (int i = 0; i < elites; ++i) next.push_back(pool[order[i]]);
    while (static_cast<int>(next.size()) < params.population)
      next.push_back(pool[tournament(rng, pool)]);
    pop = std::move(next);

    if (pop[0].score.fitness < result.best_score.fitness) {
      result.best = pop[0].genome;
      result.best_score = pop[0].score;
    }
    stats.best_trace.push_back(result.best_score.fitness);
  }
  return result;
}

// --- Parallelism-degree sweep --------------------------------------------------

namespace {

std::vector<int> divisors_of(int v) {
  std::vector<int> out;
  for (int d = 1; d <= v; ++d)
    if (v % d == 0) out.push_back(d);
  return out;
}

struct CandidateSpec {
  int mp = 0, tp = 0, pp = 0;
  TpSplit split;
  std::string prune;
};

struct TriageRow {
  CandidateOutcome outcome;
  std::optional<StrategyConfig> strategy;
};

TriageRow triage_candidate(const WaferConfig& wafer, const TrainingWorkload& workload,
                           const std::vector<OperatorNode>& layer_ops,
                           const CandidateSpec& sp, const PerfTable& table,
                           const CostParams& params, const SearchOptions& options,
                           std::uint64_t anneal_seed) {
  TriageRow row;
  row.outcome.mp = sp.mp;
  row.outcome.tp = sp.tp;
  row.outcome.pp = sp.pp;
  row.outcome.split = sp.split;
  if (!sp.prune.empty()) {
    row.outcome.disposition = sp.prune;
    return row;
  }

  try {
    std::vector<StageBreakdown> breakdowns;
    breakdowns.reserve(sp.pp);
    for (int t = 0; t < sp.pp; ++t)
      breakdowns.push_back(estimate_stage_timing(
          layer_ops, layers_in_stage(workload.model.num_layers, sp.pp, t), sp.split,
          wafer, table, params));

    const auto mem = build_stage_mem_models(wafer, workload, breakdowns, sp.tp, sp.pp);
    const RecompPlan plan = plan_recompute(mem, options.quantum);

    std::vector<Bytes> caps(mem.size());
    for (std::size_t t = 0; t < mem.size(); ++t) caps[t] = mem[t].capacity;
    const SenderHelperSplit sh = find_senders_helpers(plan.demand_bytes, caps);
    const std::vector<MemPair> seed_pairs = pair_memory(sh);
    row.outcome.disposition = sh.senders.empty() ? "evaluated" : "delegated";

    GaContext ctx = make_ga_context(wafer, workload, breakdowns, sp.tp, sp.pp);
    std::vector<double> pair_weights;
    pair_weights.reserve(seed_pairs.size());
    for (const auto& p : seed_pairs) pair_weights.push_back(ctx.pair_traffic(p));

    const MeshGrid grid{wafer.grid_x, wafer.grid_y, wafer.d2d_bandwidth};
    const int slots = (wafer.grid_x / sp.split.region_w) *
                      (wafer.grid_y / sp.split.region_h);
    const double chain_estimate = slots * std::pow(3.0, sp.pp - 1);
    PlacementSearchParams pparams;
    pparams.exhaustive_limit =
        (sp.pp <= options.exhaustive_limit &&
         chain_estimate <= static_cast<double>(options.chain_budget))
            ? sp.pp
            : 0;
    pparams.anneal_iters = options.anneal_iters;
    pparams.seed = anneal_seed;
    const PlacementResult placed =
        location_aware_placement(sp.pp, sp.split.region_w, sp.split.region_h, grid,
                                 ctx.comm_pp, seed_pairs, pair_weights, pparams);

    StrategyConfig strategy;
    strategy.tp = sp.tp;
    strategy.pp = sp.pp;
    strategy.split = sp.split;
    strategy.recomp = plan;
    strategy.placement = placed.placement;
    strategy.alloc = allocate_overflow(sh, placed.placement).as_pairs();

    const EvaluationReport rep = evaluate_iteration(wafer, workload, strategy, table,
                                                    params, options.punishment);
    row.outcome.throughput = rep.throughput;
    row.outcome.iteration_time = rep.iteration_time;
    row.outcome.t_max = rep.t_max;
    row.outcome.placement_cost = rep.placement_cost;
    row.strategy = std::move(strategy);
  } catch (const InfeasibleError& e) {
    row.outcome.disposition = std::string("infeasible: ") + e.what();
    row.strategy.reset();
  }
  return row;
}

}  // namespace

SearchResult search_parallelism(const WaferConfig& wafer, const TrainingWorkload& workload,
                                PerfTable& table, const CostParams& params,
                                const SearchOptions& options) {
  SearchResult res;
  const int max_devices = wafer.die_count();
  if (max_devices < 1) throw SpecError("wafer has no dies");

  // No device count can hold the optimizer state: nothing downstream helps.
  const Bytes min_state_per_die =
      ceil_div(workload.model_state_total(), static_cast<Bytes>(max_devices));
  if (min_state_per_die > wafer.die_dram_bytes()) {
    res.verdict = "infeasible: model state exceeds total wafer DRAM";
    return res;
  }

  const int layers = workload.model.num_layers;
  const int n = workload.num_microbatches;
  const long long hidden = workload.model.hidden_size;
  const int heads = workload.model.num_heads;

  std::vector<CandidateSpec> specs;
  for (int mp = 1; mp <= max_devices; ++mp) {
    for (const int tp : divisors_of(mp)) {
      if (tp != 1 && tp % 2 != 0) continue;  // rings want an even die count
      const int pp = mp / tp;
      CandidateSpec base;
      base.mp = mp;
      base.tp = tp;
      base.pp = pp;
      if (pp > layers) {
        base.prune = "pruned: more stages than layers";
        specs.push_back(base);
        continue;
      }
      if (n < pp) {
        base.prune = "pruned: fewer microbatches than stages";
        specs.push_back(base);
        continue;
      }
      if (model_state_bytes(workload.model, tp, pp) > wafer.die_dram_bytes()) {
        base.prune = "pruned: model state exceeds stage DRAM";
        specs.push_back(base);
        continue;
      }

      std::vector<std::pair<int, int>> shapes;
      for (int w = 1; w <= tp; ++w) {
        if (tp % w != 0) continue;
        const int h = tp / w;
        if (wafer.grid_x % w != 0 || wafer.grid_y % h != 0) continue;
        if (static_cast<long long>(wafer.grid_x / w) * (wafer.grid_y / h) < pp) continue;
        shapes.push_back({w, h});
      }
      if (shapes.empty()) {
        base.prune = "pruned: no region tiling";
        specs.push_back(base);
        continue;
      }

      std::vector<std::array<int, 4>> factorings;
      const auto fbs = options.full_splits ? divisors_of(tp) : std::vector<int>{1};
      for (const int fb : fbs) {
        if (workload.microbatch_size % fb != 0) continue;
        const auto fss =
            options.full_splits ? divisors_of(tp / fb) : std::vector<int>{1};
        for (const int fs : fss) {
          if (workload.model.seq_len % fs != 0) continue;
          for (const int fh : divisors_of(tp / (fb * fs))) {
            if (hidden % fh != 0 || heads % fh != 0) continue;
            const int fk = tp / (fb * fs * fh);
            if (hidden % fk != 0) continue;
            factorings.push_back({fb, fs, fh, fk});
          }
        }
      }
      if (factorings.empty()) {
        base.prune = "pruned: no admissible tensor split";
        specs.push_back(base);
        continue;
      }

      for (const auto& [w, h] : shapes) {
        for (const auto& f : factorings) {
          CandidateSpec sp = base;
          sp.split = TpSplit{w, h, f[0], f[1], f[2], f[3]};
          specs.push_back(sp);
        }
      }
    }
  }

  // Cost table coverage happens up front on one thread; the parallel triage
  // below then only reads it.
  const auto layer_ops = build_operator_graph(workload.model, workload.microbatch_size);
  std::vector<OpShape> needed;
  for (const auto& sp : specs) {
    if (!sp.prune.empty()) continue;
    const auto shapes = collect_stage_shapes(layer_ops, sp.split);
    needed.insert(needed.end(), shapes.begin(), shapes.end());
  }
  build_perf_table(table, {wafer}, needed, params);

  std::vector<TriageRow> rows(specs.size());
  parallel_for_indexed(specs.size(), options.threads, [&](std::size_t i) {
    rows[i] = triage_candidate(wafer, workload, layer_ops, specs[i], table, params,
                               options, mix_seed(options.seed, i));
  });

  res.candidates.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    res.candidates.push_back(rows[i].outcome);
    if (!rows[i].strategy) continue;
    if (res.best_index < 0 ||
        rows[i].outcome.throughput > res.candidates[res.best_index].throughput)
      res.best_index = static_cast<int>(i);
  }
  if (res.best_index < 0) {
    res.verdict = "infeasible: no parallelization satisfies the memory constraints";
    return res;
  }

  res.feasible = true;
  res.best = *rows[res.best_index].strategy;
  res.best_report = evaluate_iteration(wafer, workload, res.best, table, params,
                                       options.punishment);

  if (!options.fast) {
    std::vector<StageBreakdown> breakdowns;
    for (int t = 0; t < res.best.pp; ++t)
      breakdowns.push_back(estimate_stage_timing(
          layer_ops, layers_in_stage(workload.model.num_layers, res.best.pp, t),
          res.best.split, wafer, table, params));
    const GaContext ctx =
        make_ga_context(wafer, workload, breakdowns, res.best.tp, res.best.pp);

    Genome seed;
    seed.store_mask = res.best.recomp.store_mask;
    seed.placement = res.best.placement;
    seed.alloc = res.best.alloc;

    GaParams gp;
    gp.population = options.population;
    gp.steps = options.ga_steps;
    gp.omega = options.omega;
    gp.seed = options.seed;
    gp.threads = options.threads;
    const GaResult ga = ga_optimize(ctx, seed, gp);
    res.ga = ga.stats;
    res.ga_score = ga.best_score;

    StrategyConfig refined = res.best;
    refined.recomp = plan_from_mask(ctx, ga.best.store_mask, options.quantum);
    refined.placement = ga.best.placement;
    refined.alloc = ga.best.alloc;
    const EvaluationReport refined_rep =
        evaluate_iteration(wafer, workload, refined, table, params, options.punishment);
    // Refinement optimizes the proxy objective; it only replaces the sweep
    // winner when the full model agrees.
    if (refined_rep.throughput >= res.best_report.throughput) {
      res.best = std::move(refined);
      res.best_report = refined_rep;
    }
  }

  res.baseline = baseline_search(wafer, workload, options.eta, params);

  std::ostringstream verdict;
  verdict << "best tp=" << res.best.tp << " pp=" << res.best.pp << " region="
          << res.best.split.region_w << "x" << res.best.split.region_h << " split=b"
          << res.best.split.fb << ".s" << res.best.split.fs << ".h" << res.best.split.fh
          << ".k" << res.best.split.fk << " throughput=" << res.best_report.throughput;
  res.verdict = verdict.str();
  return res;
}

StrategyOutcome evaluate_fixed_point(const WaferConfig& wafer,
                                     const TrainingWorkload& workload, PerfTable& table,
                                     const CostParams& params, const SearchOptions& options,
                                     const TpSplit& split, int pp) {
  if (pp < 1) throw SpecError("pp must be positive");
  const int tp = split.tp();
  if (static_cast<long long>(tp) * pp > wafer.die_count())
    throw InfeasibleError("tp*pp exceeds the die count");
  if (pp > workload.model.num_layers)
    throw InfeasibleError("more stages than layers");
  if (workload.num_microbatches < pp)
    throw InfeasibleError("fewer microbatches than stages");

  const auto layer_ops = build_operator_graph(workload.model, workload.microbatch_size);
  build_perf_table(table, {wafer}, collect_stage_shapes(layer_ops, split), params);

  CandidateSpec sp;
  sp.mp = tp * pp;
  sp.tp = tp;
  sp.pp = pp;
  sp.split = split;
  const TriageRow row = triage_candidate(wafer, workload, layer_ops, sp, table, params,
                                         options, mix_seed(options.seed, 0));
  if (!row.strategy) throw InfeasibleError(row.outcome.disposition);

  StrategyOutcome out;
  out.outcome = row.outcome;
  out.strategy = *row.strategy;
  out.report = evaluate_iteration(wafer, workload, out.strategy, table, params,
                                  options.punishment);
  return out;
}

}  // namespace wdse
