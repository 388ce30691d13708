#include "wdse/engines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace wdse {

namespace {

bool column_parallel(OperatorKind k) {
  return k == OperatorKind::kQkvGemm || k == OperatorKind::kMlpUpGemm;
}

long long shard_dim(long long v, long long parts) {
  return parts <= 1 ? v : ceil_div(v, parts);
}

void check_split(const TpSplit& s) {
  if (s.region_w < 1 || s.region_h < 1 || s.fb < 1 || s.fs < 1 || s.fh < 1 || s.fk < 1)
    throw SpecError("tensor-parallel factors must be positive");
  if (s.tp() != s.dies())
    throw SpecError("tensor-parallel factors (" + std::to_string(s.tp()) +
                    ") must cover the region dies (" + std::to_string(s.dies()) + ")");
}

}  // namespace

RingTime ring_allreduce_mesh(const TpSplit& split, Bytes tensor_bytes, double link_bw,
                             Seconds alpha) {
  check_split(split);
  const int tp = split.tp();
  if (tp <= 1) return {0.0, RingKind::kNone};
  if (link_bw <= 0) throw SpecError("all-reduce needs positive link bandwidth");

  const int w = split.region_w, h = split.region_h;
  // A w*h grid embeds a Hamiltonian cycle on disjoint links exactly when both
  // sides exceed one and the die count is even.  tp == 2 degenerates to a
  // two-node exchange over the single shared link at full bandwidth.
  if (tp == 2) return {allreduce_time(tp, tensor_bytes, link_bw, alpha), RingKind::kRing};
  if (w >= 2 && h >= 2) {
    if (tp % 2 == 0)
      return {allreduce_time(tp, tensor_bytes, link_bw, alpha), RingKind::kRing};
    // Odd die count: no cycle exists; a reduce-then-broadcast chain doubles
    // both the startup cost and the per-link traffic.
    return {2 * alpha + allreduce_time(tp, tensor_bytes, link_bw / 2, 0.0),
            RingKind::kChain};
  }
  // 1-wide strip: the logical ring folds back over the same links, so every
  // link carries two ring hops.
  return {allreduce_time(tp, tensor_bytes, link_bw / 2, alpha), RingKind::kFoldedRing};
}

OpShape shard_op(const OperatorNode& op, const TpSplit& split) {
  check_split(split);
  const long long frows = static_cast<long long>(split.fb) * split.fs;
  OpShape s;
  s.kind = op.kind;
  switch (op.kind) {
    case OperatorKind::kQkvGemm:
    case OperatorKind::kMlpUpGemm:
      s.m = shard_dim(op.m, frows);
      s.k = shard_dim(op.k, split.fk);
      s.n = shard_dim(op.n, split.fh);
      break;
    case OperatorKind::kProjGemm:
    case OperatorKind::kMlpDownGemm:
      s.m = shard_dim(op.m, frows);
      s.k = shard_dim(op.k, static_cast<long long>(split.fh) * split.fk);
      s.n = op.n;
      break;
    case OperatorKind::kFlashAttention:
      // Heads split across fh, query rows across fb*fs; keys and values
      // replicate over fs (every query attends the full context) and fk
      // replicates the whole operator.
      s.m = shard_dim(op.m, frows);
      s.k = shard_dim(op.k, split.fh);
      s.n = op.n;
      s.kv_elements = shard_dim(op.kv_elements,
                                static_cast<long long>(split.fb) * split.fh);
      break;
    default:
      s.elements = shard_dim(op.elements, split.tp());
      break;
  }
  return s;
}

std::vector<OpShape> collect_stage_shapes(const std::vector<OperatorNode>& layer_ops,
                                          const TpSplit& split) {
  std::vector<OpShape> shapes;
  shapes.reserve(layer_ops.size());
  for (const auto& op : layer_ops) shapes.push_back(shard_op(op, split));
  return shapes;
}

StageBreakdown estimate_stage_timing(const std::vector<OperatorNode>& layer_ops,
                                     int layers, const TpSplit& split,
                                     const WaferConfig& wafer, const PerfTable& table,
                                     const CostParams& params) {
  check_split(split);
  if (layers < 0) throw SpecError("negative layer count");
  const std::string key = die_cost_key(wafer, params);
  const int tp = split.tp();

  StageBreakdown out;
  out.ops.reserve(layer_ops.size());
  for (const auto& op : layer_ops) {
    const OpShape shape = shard_op(op, split);
    const OpCost& cost = table.lookup(key, shape);

    Seconds comm = 0;
    bool fallback = false;
    if (op.tp_comm_after && tp > 1) {
      // Row-parallel output is a partial sum of the full tensor; the ring
      // spans the whole region with the per-die row shard as payload.
      const Bytes payload = static_cast<Bytes>(shape.m) * shape.n * params.elem_bytes;
      const RingTime ring =
          ring_allreduce_mesh(split, payload, wafer.d2d_bandwidth, params.alpha_link);
      comm = ring.time;
      fallback = ring.kind == RingKind::kFoldedRing || ring.kind == RingKind::kChain;
    } else if (split.fk > 1 && column_parallel(op.kind)) {
      // Reduction-dim split leaves per-die partial sums of the sharded
      // output; the fk-way subgroup reduces them before the next operator.
      const Bytes payload = static_cast<Bytes>(shape.m) * shape.n * params.elem_bytes;
      comm = allreduce_time(split.fk, payload, wafer.d2d_bandwidth, params.alpha_link);
    }

    StageOpCost oc;
    oc.kind = op.kind;
    oc.fwd = layers * (cost.fwd_latency + comm);
    oc.bwd = layers * (cost.bwd_latency + comm);
    oc.fwd_comm = layers * comm;
    oc.bwd_comm = layers * comm;
    oc.checkpoint_bytes = ceil_div(op.checkpoint_bytes, static_cast<Bytes>(tp)) * layers;
    oc.fwd_flops = layers * cost.fwd_flops;
    oc.bwd_flops = layers * cost.bwd_flops;
    oc.fwd_ema = layers * cost.fwd_ema_bytes;
    oc.bwd_ema = layers * cost.bwd_ema_bytes;
    oc.ring_fallback = fallback;

    out.fwd_total += oc.fwd;
    out.bwd_total += oc.bwd;
    out.fwd_flops += oc.fwd_flops;
    out.bwd_flops += oc.bwd_flops;
    out.fwd_ema += oc.fwd_ema;
    out.bwd_ema += oc.bwd_ema;
    out.ring_fallback = out.ring_fallback || fallback;
    out.ops.push_back(oc);
  }
  return out;
}

LinkLoadMap pp_link_allocation(const PlacementMap& placement,
                               const std::vector<CommTask>& tasks, double punishment) {
  if (placement.grid.link_bandwidth <= 0)
    throw SpecError("link allocation needs positive link bandwidth");
  if (punishment < 0) throw SpecError("negative congestion punishment");

  std::vector<std::size_t> order(tasks.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return tasks[a].bytes > tasks[b].bytes;
  });

  LinkLoadMap out;
  for (const std::size_t idx : order) {
    const CommTask& t = tasks[idx];
    auto cost = [&](const MeshLink& l) {
      const auto it = out.link_tasks.find(l);
      const int occ = it == out.link_tasks.end() ? 0 : it->second;
      return 1.0 + punishment * occ;
    };
    RoutedTask rt;
    rt.task = t;
    rt.path = route_stage_pair_weighted(placement, t.from_stage, t.to_stage, cost, nullptr);
    rt.path.is_pair = t.is_pair;
    for (const auto& l : rt.path.links) {
      out.link_tasks[l] += 1;
      out.link_bytes[l] += t.bytes;
    }
    out.tasks.push_back(std::move(rt));
  }

  // Final sharing is known only after every task routed: a task's effective
  // bandwidth divides by the heaviest co-occupancy along its path.
  for (auto& rt : out.tasks) {
    int bottleneck = 1;
    for (const auto& l : rt.path.links)
      bottleneck = std::max(bottleneck, out.link_tasks.at(l));
    rt.effective_bw = placement.grid.link_bandwidth / bottleneck;
    rt.effective_time = static_cast<double>(rt.task.bytes) / rt.effective_bw;
  }
  return out;
}

std::vector<MemPair> AllocationSet::as_pairs() const {
  std::vector<MemPair> pairs;
  for (const auto& sa : senders)
    for (const auto& e : sa.entries) pairs.push_back({sa.sender, e.helper, e.bytes});
  return pairs;
}

AllocationSet allocate_overflow(const SenderHelperSplit& split,
                                const PlacementMap& placement) {
  const int pp = static_cast<int>(placement.regions.size());
  AllocationSet out;
  out.residual_free.assign(pp, 0);
  for (const auto& h : split.helpers) {
    if (h.stage < 0 || h.stage >= pp)
      throw SpecError("helper references an unknown stage");
    out.residual_free[h.stage] = h.bytes;
  }

  const std::set<MeshLink> pl = link_set(pipeline_routes(placement));
  for (const auto& s : split.senders) {
    if (s.stage < 0 || s.stage >= pp)
      throw SpecError("sender references an unknown stage");
    SenderAllocation sa;
    sa.sender = s.stage;

    struct Candidate {
      double cost;
      int stage;
    };
    std::vector<Candidate> cands;
    for (const auto& h : split.helpers) {
      const RoutedPath p = route_stage_pair(placement, s.stage, h.stage, pl);
      const int dist = manhattan(region_center(placement.regions[s.stage]),
                                 region_center(placement.regions[h.stage]));
      cands.push_back({dist * (1.0 + p.shared_with_pipeline), h.stage});
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      if (a.cost != b.cost) return a.cost < b.cost;
      return a.stage < b.stage;
    });

    Bytes need = s.bytes;
    for (const auto& c : cands) {
      if (need <= 0) break;
      Bytes& room = out.residual_free[c.stage];
      if (room <= 0) continue;
      const Bytes take = std::min(need, room);
      sa.entries.push_back({c.stage, take, c.cost});
      room -= take;
      need -= take;
    }
    if (need > 0)
      throw InfeasibleError("offload shortfall: stage " + std::to_string(s.stage) +
                            " cannot place " + std::to_string(need) +
                            " bytes on any helper");
    out.senders.push_back(std::move(sa));
  }
  return out;
}

std::vector<StageMemModel> build_stage_mem_models(
    const WaferConfig& wafer, const TrainingWorkload& workload,
    const std::vector<StageBreakdown>& stages, int tp, int pp) {
  if (static_cast<int>(stages.size()) != pp)
    throw SpecError("need one stage breakdown per pipeline stage");
  const Bytes state_per_die = model_state_bytes(workload.model, tp, pp);
  const Bytes boundary_per_die =
      boundary_activation_bytes(workload.model, workload.microbatch_size, tp);

  std::vector<StageMemModel> out(pp);
  for (int t = 0; t < pp; ++t) {
    const int live = peak_live_microbatches(pp, t);
    StageMemModel& m = out[t];
    m.capacity = wafer.die_dram_bytes() * tp;
    m.fixed_bytes = (state_per_die + boundary_per_die * live) * tp;
    m.bwd_time = stages[t].bwd_total;
    for (const auto& oc : stages[t].ops) {
      StageMemItem item;
      item.kind = oc.kind;
      item.bytes = oc.checkpoint_bytes * live * tp;
      item.fwd_time = oc.fwd;
      m.items.push_back(item);
      m.fwd_time += item.fwd_time;
    }
  }
  return out;
}

EvaluationReport evaluate_iteration(const WaferConfig& wafer,
                                    const TrainingWorkload& workload,
                                    const StrategyConfig& strategy,
                                    const PerfTable& table, const CostParams& params,
                                    double punishment) {
  const int tp = strategy.tp;
  const int pp = strategy.pp;
  const int n = workload.num_microbatches;
  if (tp < 1 || pp < 1) throw SpecError("tp and pp must be positive");
  if (static_cast<int>(strategy.placement.regions.size()) != pp)
    throw SpecError("placement covers " +
                    std::to_string(strategy.placement.regions.size()) +
                    " stages, strategy declares " + std::to_string(pp));
  if (static_cast<int>(strategy.recomp.store_mask.size()) != pp)
    throw SpecError("recompute plan covers " +
                    std::to_string(strategy.recomp.store_mask.size()) +
                    " stages, strategy declares " + std::to_string(pp));
  if (strategy.split.tp() != tp)
    throw SpecError("tensor split does not match the declared tp degree");

  const auto layer_ops = build_operator_graph(workload.model, workload.microbatch_size);
  std::vector<StageBreakdown> breakdowns;
  breakdowns.reserve(pp);
  for (int t = 0; t < pp; ++t)
    breakdowns.push_back(estimate_stage_timing(
        layer_ops, layers_in_stage(workload.model.num_layers, pp, t), strategy.split,
        wafer, table, params));

  const auto mem = build_stage_mem_models(wafer, workload, breakdowns, tp, pp);

  EvaluationReport rep;
  rep.stages.resize(pp);

  // Steady-state stage periods under the chosen checkpoint masks.
  std::vector<StageTiming> timing(pp);
  std::vector<Bytes> demand(pp, 0), offloaded(pp, 0), received(pp, 0);
  for (int t = 0; t < pp; ++t) {
    const std::uint32_t mask = strategy.recomp.store_mask[t];
    Seconds replay = 0;
    Bytes stored = 0;
    for (std::size_t i = 0; i < mem[t].items.size(); ++i) {
      if (mask & (1u << i))
        stored += mem[t].items[i].bytes;
      else
        replay += mem[t].items[i].fwd_time;
    }
    timing[t].fwd_time = breakdowns[t].fwd_total;
    timing[t].bwd_time = breakdowns[t].bwd_total;
    timing[t].recompute_time = replay;
    demand[t] = mem[t].fixed_bytes + stored;

    rep.stages[t].layers = layers_in_stage(workload.model.num_layers, pp, t);
    rep.stages[t].fwd = timing[t].fwd_time;
    rep.stages[t].bwd = timing[t].bwd_time;
    rep.stages[t].recompute = replay;
    rep.stages[t].demand = demand[t];
    rep.stages[t].capacity = mem[t].capacity;
    rep.stages[t].peak_live = peak_live_microbatches(pp, t);
    rep.ring_fallback = rep.ring_fallback || breakdowns[t].ring_fallback;

    rep.t_max = std::max(rep.t_max,
                         timing[t].fwd_time + timing[t].recompute_time + timing[t].bwd_time);
  }

  for (const auto& p : strategy.alloc) {
    if (p.sender < 0 || p.sender >= pp || p.helper < 0 || p.helper >= pp)
      throw SpecError("offload pair references an unknown stage");
    offloaded[p.sender] += p.bytes;
    received[p.helper] += p.bytes;
  }
  for (int t = 0; t < pp; ++t) {
    rep.stages[t].offloaded = offloaded[t];
    rep.stages[t].received = received[t];
    const Bytes resident = demand[t] - offloaded[t] + received[t];
    if (resident > mem[t].capacity || offloaded[t] > demand[t] - mem[t].fixed_bytes)
      rep.memory_ok = false;
  }

  // Per-iteration traffic: every boundary moves the full activation tensor
  // forward and its gradient back; every offload pair round-trips each
  // microbatch's share of the stored overflow.
  const Bytes boundary_full = static_cast<Bytes>(workload.microbatch_size) *
                              workload.model.seq_len * workload.model.hidden_size *
                              kActElemBytes;
  std::vector<CommTask> tasks;
  std::vector<double> comm_pp(std::max(0, pp - 1), 0);
  for (int i = 0; i + 1 < pp; ++i) {
    const Bytes per_iter = 2 * static_cast<Bytes>(n) * boundary_full;
    tasks.push_back({i, i + 1, per_iter, false});
    comm_pp[i] = static_cast<double>(per_iter);
  }
  std::vector<double> comm_pair;
  for (const auto& p : strategy.alloc) {
    const int live = peak_live_microbatches(pp, p.sender);
    const Bytes per_iter = static_cast<Bytes>(
        std::llround(2.0 * static_cast<double>(p.bytes) * n / std::max(1, live)));
    tasks.push_back({p.sender, p.helper, per_iter, true});
    comm_pair.push_back(static_cast<double>(per_iter));
  }

  rep.links = pp_link_allocation(strategy.placement, tasks, punishment);

  std::vector<Seconds> transfer(std::max(0, pp - 1), 0);
  std::vector<Seconds> pair_time(strategy.alloc.size(), 0);
  for (const auto& rt : rep.links.tasks) {
    if (!rt.task.is_pair) {
      const int i = rt.task.from_stage;
      transfer[i] = wafer.d2d_latency +
                    static_cast<double>(boundary_full) / rt.effective_bw;
    } else {
      for (std::size_t k = 0; k < strategy.alloc.size(); ++k) {
        if (strategy.alloc[k].sender == rt.task.from_stage &&
            strategy.alloc[k].helper == rt.task.to_stage && pair_time[k] == 0) {
          pair_time[k] = rt.effective_time;
          break;
        }
      }
    }
  }

  rep.timeline = schedule_1f1b(timing, n, transfer);
  rep.iteration_time = rep.timeline.iteration_time;

  // Offload traffic hides inside the sender's pipeline bubbles; only the
  // excess extends the iteration.
  std::vector<Seconds> busy(pp, 0);
  for (const auto& e : rep.timeline.events) busy[e.stage] += e.end - e.start;
  for (std::size_t k = 0; k < strategy.alloc.size(); ++k) {
    const int s = strategy.alloc[k].sender;
    const Seconds idle = std::max(0.0, rep.timeline.iteration_time - busy[s]);
    rep.offload_stall += std::max(0.0, pair_time[k] - idle);
  }
  rep.iteration_time += rep.offload_stall;

  const PlacementCost pc =
      global_cost(strategy.placement, comm_pp, strategy.alloc, comm_pair);
  rep.placement_cost = pc.cost;
  rep.avg_pair_dist = pc.avg_pair_dist;
  rep.total_hops = pc.paths.total_hops();

  for (int t = 0; t < pp; ++t) {
    rep.useful_flops +=
        (breakdowns[t].fwd_flops + breakdowns[t].bwd_flops) * tp * static_cast<double>(n);
    const std::uint32_t mask = strategy.recomp.store_mask[t];
    for (std::size_t i = 0; i < breakdowns[t].ops.size(); ++i)
      if (!(mask & (1u << i)))
        rep.recompute_flops +=
            breakdowns[t].ops[i].fwd_flops * tp * static_cast<double>(n);
  }
  rep.throughput = rep.iteration_time > 0 ? rep.useful_flops / rep.iteration_time : 0;

  const double used_flops_pool = wafer.die_flops() * tp * pp;
  const double used_dram_bw = wafer.die_dram_bandwidth() * tp * pp;
  if (rep.iteration_time > 0 && used_flops_pool > 0)
    rep.compute_utilization = rep.useful_flops / (rep.iteration_time * used_flops_pool);
  double ema_total = 0;
  for (int t = 0; t < pp; ++t) {
    ema_total += static_cast<double>(breakdowns[t].fwd_ema + breakdowns[t].bwd_ema) * tp * n;
    const std::uint32_t mask = strategy.recomp.store_mask[t];
    for (std::size_t i = 0; i < breakdowns[t].ops.size(); ++i)
      if (!(mask & (1u << i)))
        ema_total += static_cast<double>(breakdowns[t].ops[i].fwd_ema) * tp * n;
  }
  if (rep.iteration_time > 0 && used_dram_bw > 0)
    rep.dram_bw_utilization = ema_total / (rep.iteration_time * used_dram_bw);
  if (rep.iteration_time > 0 && !rep.links.link_bytes.empty()) {
    double link_traffic = 0;
    for (const auto& [l, b] : rep.links.link_bytes) link_traffic += static_cast<double>(b);
    rep.link_utilization =
        link_traffic / (rep.iteration_time * strategy.placement.grid.link_bandwidth *
                        static_cast<double>(rep.links.link_bytes.size()));
  }
  return rep;
}

BaselineCost analytic_baseline(const WaferConfig& wafer, const TrainingWorkload& workload,
                               int tp, int pp, double eta, const CostParams& params) {
  if (tp < 1 || pp < 1) throw SpecError("tp and pp must be positive");
  if (eta <= 0) throw SpecError("eta must be positive");
  const auto layer_ops = build_operator_graph(workload.model, workload.microbatch_size);
  const int n = workload.num_microbatches;
  const long long L = workload.model.num_layers;

  double fwd_layer = 0, bwd_layer = 0;
  for (const auto& op : layer_ops) {
    fwd_layer += op.fwd_flops;
    bwd_layer += op.bwd_flops;
  }
  const double f_iter = static_cast<double>(n) * L * fwd_layer;
  const double b_iter = static_cast<double>(n) * L * bwd_layer;

  // Each die keeps its own stage's checkpoints: the closed form knows nothing
  // about offloading to other stages, so per-stage DRAM shortfall converts
  // into that stage's recomputation pro rata.  Stage 0 retains the most live
  // microbatches under 1F1B and is squeezed first.
  BaselineCost out;
  out.tp = tp;
  out.pp = pp;
  const Bytes state_per_die = model_state_bytes(workload.model, tp, pp);
  const Bytes boundary_per_die =
      boundary_activation_bytes(workload.model, workload.microbatch_size, tp);
  double recomp_flops = 0;
  double layers_weighted_r = 0;
  for (int t = 0; t < pp; ++t) {
    const int live = peak_live_microbatches(pp, t);
    const int layers = layers_in_stage(workload.model.num_layers, pp, t);
    const Bytes fixed = state_per_die + boundary_per_die * live;
    if (fixed > wafer.die_dram_bytes()) {
      out.total = std::numeric_limits<double>::infinity();
      out.recompute_fraction = 1.0;
      return out;
    }
    const Bytes headroom = wafer.die_dram_bytes() - fixed;
    const Bytes ckpt = checkpoint_bytes_per_stage(layer_ops, layers, tp, live);
    const double r =
        ckpt > 0 ? std::clamp(1.0 - static_cast<double>(headroom) /
                                        static_cast<double>(ckpt),
                              0.0, 1.0)
                 : 0.0;
    recomp_flops += r * static_cast<double>(n) * layers * fwd_layer;
    layers_weighted_r += r * layers;
  }
  out.recompute_fraction = layers_weighted_r / workload.model.num_layers;

  // 1F1B keeps each stage busy for n of the n+pp-1 slots on the critical
  // path, so all per-device serial work stretches by the reciprocal.
  const double bubble = static_cast<double>(n + pp - 1) / n;
  const double pool = wafer.die_flops() * params.utilization * tp * pp;
  const double dram_bw = wafer.die_dram_bandwidth() * tp * pp;
  out.c_comp = bubble * (f_iter + b_iter) / pool;
  out.c_recomp = bubble * recomp_flops / pool;
  out.c_access = bubble * ((f_iter + b_iter + recomp_flops) / eta) / dram_bw;

  const double bsh = static_cast<double>(workload.microbatch_size) *
                     workload.model.seq_len * workload.model.hidden_size * kActElemBytes;
  // Four collectives per layer (two each way through the attention and MLP
  // blocks); each ring pays 2(tp-1) link startups plus the usual beta term.
  const double ring_steps = tp > 1 ? 2.0 * (tp - 1) : 0.0;
  const double ring_beta = tp > 1 ? 2.0 * (tp - 1) / tp * bsh / wafer.d2d_bandwidth : 0.0;
  const double collective_time =
      static_cast<double>(n) * L * 4.0 * (ring_steps * wafer.d2d_latency + ring_beta);
  const double pipeline_time =
      static_cast<double>(n) * (pp - 1) * 2.0 *
      (wafer.d2d_latency + bsh / wafer.d2d_bandwidth);
  out.c_comm = collective_time + pipeline_time;

  out.total = out.c_comp + out.c_recomp + out.c_access + out.c_comm;
  return out;
}

bool split_admissible(const ModelConfig& model, int tp) {
  if (tp == 1) return true;
  if (tp % 2 != 0) return false;  // collective rings want an even die count
  for (int fh = 1; fh <= tp; ++fh) {
    if (tp % fh != 0) continue;
    const int fk = tp / fh;
    if (model.num_heads % fh == 0 && model.hidden_size % fh == 0 &&
        model.hidden_size % fk == 0)
      return true;
  }
  return false;
}

BaselineCost baseline_search(const WaferConfig& wafer, const TrainingWorkload& workload,
                             double eta, const CostParams& params) {
  BaselineCost best;
  best.total = std::numeric_limits<double>::infinity();
  // Same admissible degree grid as the full search: the tensor group must
  // tile the mesh as a rectangle and factor over heads and hidden size.  The
  // closed form shares the design space and differs only in how it scores.
  for (int tp = 1; tp <= wafer.die_count(); ++tp) {
    if (!split_admissible(workload.model, tp)) continue;
    int max_slots = 0;
    for (int w = 1; w <= tp; ++w) {
      if (tp % w != 0) continue;
      const int h = tp / w;
      if (wafer.grid_x % w != 0 || wafer.grid_y % h != 0) continue;
      max_slots = std::max(max_slots, (wafer.grid_x / w) * (wafer.grid_y / h));
    }
    const int max_pp = std::min({max_slots, workload.model.num_layers,
                                 workload.num_microbatches});
    for (int pp = 1; pp <= max_pp; ++pp) {
      const BaselineCost c = analytic_baseline(wafer, workload, tp, pp, eta, params);
      if (c.total < best.total) best = c;
    }
  }
  return best;
}

}  // namespace wdse
