#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "wdse/engines.hpp"

using namespace wdse;

namespace {

TpSplit make_split(int w, int h, int fb, int fs, int fh, int fk) {
  TpSplit s;
  s.region_w = w;
  s.region_h = h;
  s.fb = fb;
  s.fs = fs;
  s.fh = fh;
  s.fk = fk;
  return s;
}

// Small enough that every sharded operator stays SRAM resident, so the perf
// table entries are tiling independent and all flop counts are exact integers.
ModelConfig nano_model() {
  ModelConfig m;
  m.name = "nano";
  m.num_layers = 4;
  m.hidden_size = 64;
  m.num_heads = 4;
  m.seq_len = 32;
  m.vocab_size = 512;
  return m;
}

WaferConfig mesh_wafer() {
  WaferConfig w;
  w.label = "mesh16";
  w.grid_x = 4;
  w.grid_y = 4;
  w.die.name = "unit";
  w.die.width_mm = 12;
  w.die.height_mm = 12;
  w.die.core_rows = 1;
  w.die.core_cols = 1;
  w.die.core.peak_flops = 1e12;
  w.die.core.sram_bytes = MiB;
  w.die.core.frequency_hz = 1e9;
  w.die.edge_io_bandwidth = 1e12;
  w.die.dram_io_fraction = 0.5;
  w.dram_chiplets_per_die = 2;
  w.dram.name = "unit-dram";
  w.dram.width_mm = 3;
  w.dram.height_mm = 3;
  w.dram.capacity_bytes = GB;
  w.dram.bandwidth = 1e11;
  w.d2d_bandwidth = 1e11;
  w.d2d_latency = 1e-7;
  return w;
}

PerfTable table_over(const WaferConfig& wafer, const std::vector<OperatorNode>& ops,
                     const std::vector<TpSplit>& splits, const CostParams& params) {
  PerfTable t;
  for (const auto& s : splits)
    build_perf_table(t, {wafer}, collect_stage_shapes(ops, s), params);
  return t;
}

PlacementMap hand_placement(int gx, int gy, double bw, int rw, int rh,
                            std::vector<Region> regions) {
  PlacementMap p;
  p.grid = {gx, gy, bw};
  p.region_w = rw;
  p.region_h = rh;
  p.regions = std::move(regions);
  return p;
}

}  // namespace

TEST_CASE("mesh all-reduce picks ring, folded ring or chain by region shape") {
  const Bytes bytes = 1 << 20;
  const double bw = 1024.0 * 1024.0 * 1024.0;
  const Seconds a = 1.0 / (1 << 20);

  // A single die never communicates, even with an unusable link bandwidth.
  const RingTime solo = ring_allreduce_mesh(make_split(1, 1, 1, 1, 1, 1), bytes, 0.0, a);
  CHECK(solo.time == 0.0);
  CHECK(solo.kind == RingKind::kNone);

  // Two dies exchange over their one shared link at full bandwidth, whether
  // the region is laid out 2x1 or 1x2.
  for (const TpSplit& s : {make_split(2, 1, 2, 1, 1, 1), make_split(1, 2, 1, 2, 1, 1)}) {
    const RingTime two = ring_allreduce_mesh(s, bytes, bw, a);
    CHECK(two.kind == RingKind::kRing);
    CHECK(two.time == allreduce_time(2, bytes, bw, a));
    CHECK(two.time == 0.00097751617431640625);  // 2^-20 + 2^-10
  }

  // An even rectangle carries a Hamiltonian cycle on disjoint links.
  const RingTime even = ring_allreduce_mesh(make_split(2, 2, 1, 1, 2, 2), bytes, bw, a);
  CHECK(even.kind == RingKind::kRing);
  CHECK(even.time == allreduce_time(4, bytes, bw, a));
  CHECK(even.time == 0.00146579742431640625);  // 2^-20 + 1.5 * 2^-10

  // An odd rectangle has no cycle: reduce then broadcast over a chain,
  // doubling both the startup cost and the per-link traffic.
  const RingTime odd = ring_allreduce_mesh(make_split(3, 3, 9, 1, 1, 1), bytes, bw, a);
  CHECK(odd.kind == RingKind::kChain);
  CHECK(odd.time == 2 * a + allreduce_time(9, bytes, bw / 2, 0.0));

  // A 1-wide strip folds the ring back over its own links at half bandwidth.
  const RingTime fold_v = ring_allreduce_mesh(make_split(1, 4, 1, 4, 1, 1), bytes, bw, a);
  CHECK(fold_v.kind == RingKind::kFoldedRing);
  CHECK(fold_v.time == allreduce_time(4, bytes, bw / 2, a));
  const RingTime fold_h = ring_allreduce_mesh(make_split(4, 1, 1, 1, 4, 1), bytes, bw, a);
  CHECK(fold_h.kind == RingKind::kFoldedRing);
  CHECK(fold_h.time == fold_v.time);

  // Same die count, worse embedding: the fold pays for its shared links.
  CHECK(fold_v.time > even.time);

  CHECK_THROWS_AS(ring_allreduce_mesh(make_split(2, 2, 1, 1, 2, 2), bytes, 0.0, a),
                  SpecError);
  CHECK_THROWS_AS(ring_allreduce_mesh(make_split(2, 2, 2, 1, 1, 1), bytes, bw, a),
                  SpecError);
  CHECK_THROWS_AS(ring_allreduce_mesh(make_split(2, 2, 0, 1, 2, 2), bytes, bw, a),
                  SpecError);
}

TEST_CASE("sharding divides each operator along its parallel dimensions") {
  ModelConfig wide;
  wide.name = "wide";
  wide.num_layers = 4;
  wide.hidden_size = 8192;
  wide.num_heads = 64;
  wide.seq_len = 2048;
  wide.vocab_size = 32000;
  const auto ops = build_operator_graph(wide, 2);
  REQUIRE(ops.size() == 8);

  const TpSplit s16 = make_split(4, 4, 2, 2, 2, 2);
  const long long frows = 4;

  for (const auto& op : ops) {
    const OpShape s = shard_op(op, s16);
    CHECK(s.kind == op.kind);
    switch (op.kind) {
      case OperatorKind::kQkvGemm:
      case OperatorKind::kMlpUpGemm:
        CHECK(s.m == ceil_div(op.m, frows));
        CHECK(s.k == ceil_div(op.k, 2LL));
        CHECK(s.n == ceil_div(op.n, 2LL));
        // Row shards, the reduction split and the column split partition the
        // multiply exactly, so shard work times the die count is the total.
        CHECK(s.m * s.k * s.n * 16 == op.m * op.k * op.n);
        break;
      case OperatorKind::kProjGemm:
      case OperatorKind::kMlpDownGemm:
        CHECK(s.m == ceil_div(op.m, frows));
        CHECK(s.k == ceil_div(op.k, 4LL));
        CHECK(s.n == op.n);
        CHECK(s.m * s.k * s.n * 16 == op.m * op.k * op.n);
        break;
      case OperatorKind::kFlashAttention:
        CHECK(s.m == ceil_div(op.m, frows));
        CHECK(s.k == ceil_div(op.k, 2LL));
        CHECK(s.n == op.n);
        // Keys and values replicate over the sequence and reduction factors.
        CHECK(s.kv_elements == ceil_div(op.kv_elements, 4LL));
        break;
      default:
        CHECK(s.elements * 16 == op.elements);
        break;
    }
  }

  // Spot values for the 16-way split at microbatch 2.
  const OpShape qkv = shard_op(ops[1], s16);
  CHECK(qkv.m == 1024);
  CHECK(qkv.k == 4096);
  CHECK(qkv.n == 12288);
  const OpShape proj = shard_op(ops[3], s16);
  CHECK(proj.m == 1024);
  CHECK(proj.k == 2048);
  CHECK(proj.n == 8192);

  // Indivisible dimensions round up, one-way factors leave them alone.
  OperatorNode odd;
  odd.kind = OperatorKind::kQkvGemm;
  odd.m = 5;
  odd.k = 7;
  odd.n = 9;
  const OpShape oc = shard_op(odd, make_split(6, 1, 2, 1, 3, 1));
  CHECK(oc.m == 3);
  CHECK(oc.k == 7);
  CHECK(oc.n == 3);
  odd.kind = OperatorKind::kProjGemm;
  const OpShape orow = shard_op(odd, make_split(6, 1, 1, 2, 3, 1));
  CHECK(orow.m == 3);
  CHECK(orow.k == 3);
  CHECK(orow.n == 9);

  const auto shapes = collect_stage_shapes(ops, s16);
  REQUIRE(shapes.size() == ops.size());
  for (std::size_t i = 0; i < ops.size(); ++i) CHECK(shapes[i] == shard_op(ops[i], s16));
}

TEST_CASE("stage timing scales table latencies and collectives by layer count") {
  const ModelConfig model = nano_model();
  const WaferConfig wafer = mesh_wafer();
  const CostParams params;
  const auto ops = build_operator_graph(model, 1);
  const TpSplit split = make_split(2, 2, 1, 1, 2, 2);
  const TpSplit strip = make_split(1, 4, 1, 1, 4, 1);
  const PerfTable table = table_over(wafer, ops, {split, strip}, params);
  const std::string key = die_cost_key(wafer, params);

  const StageBreakdown br = estimate_stage_timing(ops, 3, split, wafer, table, params);
  REQUIRE(br.ops.size() == 8);

  Seconds fwd_total = 0, bwd_total = 0;
  Flops fwd_flops = 0, bwd_flops = 0;
  Bytes fwd_ema = 0, bwd_ema = 0;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    const OpShape shape = shard_op(ops[i], split);
    const OpCost& cost = table.lookup(key, shape);
    const Bytes payload = static_cast<Bytes>(shape.m) * shape.n * params.elem_bytes;
    Seconds comm = 0;
    if (ops[i].tp_comm_after) {
      const RingTime ring =
          ring_allreduce_mesh(split, payload, wafer.d2d_bandwidth, params.alpha_link);
      CHECK(ring.kind == RingKind::kRing);
      comm = ring.time;
    } else if (ops[i].kind == OperatorKind::kQkvGemm ||
               ops[i].kind == OperatorKind::kMlpUpGemm) {
      // fk > 1 leaves per-die partial sums; the two-way subgroup reduces them.
      comm = allreduce_time(2, payload, wafer.d2d_bandwidth, params.alpha_link);
    }

    const StageOpCost& oc = br.ops[i];
    CHECK(oc.kind == ops[i].kind);
    CHECK(oc.fwd == 3 * (cost.fwd_latency + comm));
    CHECK(oc.bwd == 3 * (cost.bwd_latency + comm));
    CHECK(oc.fwd_comm == 3 * comm);
    CHECK(oc.bwd_comm == 3 * comm);
    CHECK(oc.checkpoint_bytes == ceil_div(ops[i].checkpoint_bytes, Bytes{4}) * 3);
    CHECK(oc.fwd_flops == 3 * cost.fwd_flops);
    CHECK(oc.bwd_flops == 3 * cost.bwd_flops);
    CHECK(oc.fwd_ema == 3 * cost.fwd_ema_bytes);
    CHECK(oc.bwd_ema == 3 * cost.bwd_ema_bytes);
    CHECK_FALSE(oc.ring_fallback);

    fwd_total += oc.fwd;
    bwd_total += oc.bwd;
    fwd_flops += oc.fwd_flops;
    bwd_flops += oc.bwd_flops;
    fwd_ema += oc.fwd_ema;
    bwd_ema += oc.bwd_ema;
  }
  CHECK(br.fwd_total == fwd_total);
  CHECK(br.bwd_total == bwd_total);
  CHECK(br.fwd_flops == fwd_flops);
  CHECK(br.bwd_flops == bwd_flops);
  CHECK(br.fwd_ema == fwd_ema);
  CHECK(br.bwd_ema == bwd_ema);
  CHECK_FALSE(br.ring_fallback);

  // A strip region folds its all-reduce ring, which the breakdown flags.
  const StageBreakdown sb = estimate_stage_timing(ops, 1, strip, wafer, table, params);
  CHECK(sb.ring_fallback);
  CHECK(sb.ops[3].ring_fallback);
  CHECK_FALSE(sb.ops[0].ring_fallback);

  const StageBreakdown zero = estimate_stage_timing(ops, 0, split, wafer, table, params);
  CHECK(zero.fwd_total == 0.0);
  CHECK(zero.bwd_total == 0.0);
  CHECK(zero.fwd_ema == 0);
  REQUIRE(zero.ops.size() == 8);
  CHECK(zero.ops[1].checkpoint_bytes == 0);

  CHECK_THROWS_AS(estimate_stage_timing(ops, -1, split, wafer, table, params), SpecError);
  // Shapes never built for the table are hard misses, not silent fallbacks.
  CHECK_THROWS(estimate_stage_timing(ops, 1, make_split(4, 4, 4, 4, 1, 1), wafer, table,
                                     params));
}

TEST_CASE("link allocation spreads competing tasks and meters the bottleneck") {
  // Two 2x2 regions with a two-row corridor between them: the heavier task
  // takes the top row, punishment pushes the second onto the bottom row.
  const PlacementMap pm =
      hand_placement(6, 2, 1e9, 2, 2, {{0, 0, 2, 2}, {4, 0, 2, 2}});
  const std::vector<CommTask> tasks = {{0, 1, 1000, false}, {0, 1, 999, false}};

  const LinkLoadMap spread = pp_link_allocation(pm, tasks, kDefaultPunishment);
  REQUIRE(spread.tasks.size() == 2);
  CHECK(spread.tasks[0].task.bytes == 1000);
  CHECK(spread.tasks[1].task.bytes == 999);
  REQUIRE(spread.tasks[0].path.links.size() == 3);
  REQUIRE(spread.tasks[1].path.links.size() == 3);
  for (const auto& l : spread.tasks[0].path.links) {
    CHECK(l.y1 == 0);
    CHECK(l.y2 == 0);
  }
  for (const auto& l : spread.tasks[1].path.links) {
    CHECK(l.y1 == 1);
    CHECK(l.y2 == 1);
  }
  for (const auto& rt : spread.tasks) {
    CHECK(rt.effective_bw == 1e9);
    CHECK(rt.effective_time == static_cast<double>(rt.task.bytes) / 1e9);
  }

  // Without punishment the tie resolves to the same row and bandwidth halves.
  const LinkLoadMap piled = pp_link_allocation(pm, tasks, 0.0);
  CHECK(piled.tasks[0].path.links == piled.tasks[1].path.links);
  for (const auto& rt : piled.tasks) {
    CHECK(rt.effective_bw == 1e9 / 2);
    CHECK(rt.effective_time == static_cast<double>(rt.task.bytes) / (1e9 / 2));
  }

  // Link load maps are exactly the sum of the routed paths.
  std::map<MeshLink, Bytes> bytes_recount;
  std::map<MeshLink, int> tasks_recount;
  for (const auto& rt : piled.tasks)
    for (const auto& l : rt.path.links) {
      bytes_recount[l] += rt.task.bytes;
      tasks_recount[l] += 1;
    }
  CHECK(bytes_recount == piled.link_bytes);
  CHECK(tasks_recount == piled.link_tasks);

  // A single-row mesh offers no alternative: both directions pile onto the
  // same three links and each task sees half the link bandwidth.
  const PlacementMap row = hand_placement(
      4, 1, 1e9, 1, 1, {{0, 0, 1, 1}, {1, 0, 1, 1}, {2, 0, 1, 1}, {3, 0, 1, 1}});
  const std::vector<CommTask> duel = {{0, 3, 500, false}, {3, 0, 500, true}};
  const LinkLoadMap shared = pp_link_allocation(row, duel, kDefaultPunishment);
  // Equal byte counts keep submission order.
  CHECK(shared.tasks[0].task.to_stage == 3);
  CHECK(shared.tasks[1].task.to_stage == 0);
  CHECK(shared.tasks[1].path.is_pair);
  for (const auto& rt : shared.tasks) {
    CHECK(rt.path.links.size() == 3);
    CHECK(rt.effective_bw == 1e9 / 2);
  }

  CHECK(pp_link_allocation(row, {}, 1.0).tasks.empty());
  PlacementMap dead = row;
  dead.grid.link_bandwidth = 0;
  CHECK_THROWS_AS(pp_link_allocation(dead, duel, 1.0), SpecError);
  CHECK_THROWS_AS(pp_link_allocation(row, duel, -1.0), SpecError);
}

TEST_CASE("overflow walks helpers cheapest first and splits on exhaustion") {
  // Six stages snake around a 3x2 mesh; stage 0 overflows and stages 3..5
  // have headroom.  Helper costs from stage 0 work out to 9, 4 and 1.
  const PlacementMap pm = hand_placement(3, 2, 1e9, 1, 1,
                                         {{0, 0, 1, 1},
                                          {1, 0, 1, 1},
                                          {2, 0, 1, 1},
                                          {2, 1, 1, 1},
                                          {1, 1, 1, 1},
                                          {0, 1, 1, 1}});
  SenderHelperSplit split;
  split.senders = {{0, 100}};
  split.helpers = {{3, 60}, {4, 50}, {5, 80}};

  const AllocationSet alloc = allocate_overflow(split, pm);
  REQUIRE(alloc.senders.size() == 1);
  CHECK(alloc.senders[0].sender == 0);
  REQUIRE(alloc.senders[0].entries.size() == 2);
  // Nearest helper drains first, the remainder spills to the next cheapest.
  CHECK(alloc.senders[0].entries[0].helper == 5);
  CHECK(alloc.senders[0].entries[0].bytes == 80);
  CHECK(alloc.senders[0].entries[0].cost == 1.0);
  CHECK(alloc.senders[0].entries[1].helper == 4);
  CHECK(alloc.senders[0].entries[1].bytes == 20);
  CHECK(alloc.senders[0].entries[1].cost == 4.0);
  REQUIRE(alloc.residual_free.size() == 6);
  CHECK(alloc.residual_free[3] == 60);
  CHECK(alloc.residual_free[4] == 30);
  CHECK(alloc.residual_free[5] == 0);

  const auto pairs = alloc.as_pairs();
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].sender == 0);
  CHECK(pairs[0].helper == 5);
  CHECK(pairs[0].bytes == 80);
  CHECK(pairs[1].helper == 4);
  CHECK(pairs[1].bytes == 20);

  // A second sender sees only what the first left behind.
  SenderHelperSplit two = split;
  two.senders = {{0, 100}, {1, 40}};
  const AllocationSet both = allocate_overflow(two, pm);
  REQUIRE(both.senders.size() == 2);
  CHECK(both.senders[1].sender == 1);
  REQUIRE(both.senders[1].entries.size() == 2);
  CHECK(both.senders[1].entries[0].helper == 4);
  CHECK(both.senders[1].entries[0].bytes == 30);
  CHECK(both.senders[1].entries[1].helper == 3);
  CHECK(both.senders[1].entries[1].bytes == 10);
  CHECK(both.residual_free[3] == 50);
  CHECK(both.residual_free[4] == 0);

  // Byte conservation: overflow lands in full, headroom shrinks to match.
  Bytes assigned = 0, residual = 0;
  for (const auto& sa : both.senders)
    for (const auto& e : sa.entries) assigned += e.bytes;
  for (const Bytes b : both.residual_free) residual += b;
  CHECK(assigned == 140);
  CHECK(assigned + residual == 60 + 50 + 80);

  // Equal cost breaks toward the smaller helper stage id.
  const PlacementMap strip = hand_placement(
      3, 1, 1e9, 1, 1, {{0, 0, 1, 1}, {1, 0, 1, 1}, {2, 0, 1, 1}});
  SenderHelperSplit tie;
  tie.senders = {{1, 100}};
  tie.helpers = {{0, 60}, {2, 60}};
  const AllocationSet mid = allocate_overflow(tie, strip);
  REQUIRE(mid.senders[0].entries.size() == 2);
  CHECK(mid.senders[0].entries[0].helper == 0);
  CHECK(mid.senders[0].entries[0].bytes == 60);
  CHECK(mid.senders[0].entries[1].helper == 2);
  CHECK(mid.senders[0].entries[1].bytes == 40);

  SenderHelperSplit broke;
  broke.senders = {{0, 1000}};
  broke.helpers = {{5, 10}};
  CHECK_THROWS_AS(allocate_overflow(broke, pm), InfeasibleError);
  SenderHelperSplit stray;
  stray.senders = {{0, 10}};
  stray.helpers = {{9, 100}};
  CHECK_THROWS_AS(allocate_overflow(stray, pm), SpecError);
}

TEST_CASE("stage memory models carry stage-level footprints and timings") {
  const ModelConfig model = nano_model();
  const WaferConfig wafer = mesh_wafer();
  const CostParams params;
  const auto ops = build_operator_graph(model, 2);
  const TpSplit split = make_split(2, 2, 1, 1, 2, 2);
  const PerfTable table = table_over(wafer, ops, {split}, params);

  TrainingWorkload wl;
  wl.model = model;
  wl.microbatch_size = 2;
  wl.num_microbatches = 6;

  std::vector<StageBreakdown> br;
  for (int t = 0; t < 2; ++t)
    br.push_back(estimate_stage_timing(ops, layers_in_stage(model.num_layers, 2, t),
                                       split, wafer, table, params));

  const auto mem = build_stage_mem_models(wafer, wl, br, 4, 2);
  REQUIRE(mem.size() == 2);
  const Bytes state = model_state_bytes(model, 4, 2);
  const Bytes boundary = boundary_activation_bytes(model, 2, 4);
  for (int t = 0; t < 2; ++t) {
    const int live = peak_live_microbatches(2, t);
    CHECK(mem[t].capacity == wafer.die_dram_bytes() * 4);
    CHECK(mem[t].fixed_bytes == (state + boundary * live) * 4);
    CHECK(mem[t].bwd_time == br[t].bwd_total);
    REQUIRE(mem[t].items.size() == br[t].ops.size());
    Seconds fwd = 0;
    for (std::size_t i = 0; i < mem[t].items.size(); ++i) {
      CHECK(mem[t].items[i].kind == br[t].ops[i].kind);
      CHECK(mem[t].items[i].bytes == br[t].ops[i].checkpoint_bytes * live * 4);
      CHECK(mem[t].items[i].fwd_time == br[t].ops[i].fwd);
      fwd += mem[t].items[i].fwd_time;
    }
    CHECK(mem[t].fwd_time == fwd);
  }
  // Later stages retain fewer live microbatches, so their footprint shrinks.
  CHECK(mem[0].fixed_bytes > mem[1].fixed_bytes);
  CHECK(mem[0].items[0].bytes == 2 * mem[1].items[0].bytes);

  CHECK_THROWS_AS(build_stage_mem_models(wafer, wl, br, 4, 3), SpecError);
}

TEST_CASE("iteration evaluation composes stage, schedule and placement models") {
  const ModelConfig model = nano_model();
  const WaferConfig wafer = mesh_wafer();
  const CostParams params;
  const auto ops = build_operator_graph(model, 1);
  const TpSplit split = make_split(2, 2, 1, 1, 2, 2);
  const PerfTable table = table_over(wafer, ops, {split}, params);

  TrainingWorkload wl;
  wl.model = model;
  wl.microbatch_size = 1;
  wl.num_microbatches = 4;

  const MeshGrid grid{4, 4, wafer.d2d_bandwidth};
  StrategyConfig strat;
  strat.tp = 4;
  strat.pp = 2;
  strat.split = split;
  strat.placement = serpentine_placement(2, 2, 2, grid);
  strat.recomp.store_mask = {0xFFu, 0u};

  const EvaluationReport rep =
      evaluate_iteration(wafer, wl, strat, table, params, kDefaultPunishment);

  // Rebuild every intermediate with the already-tested building blocks.
  std::vector<StageBreakdown> br;
  for (int t = 0; t < 2; ++t)
    br.push_back(estimate_stage_timing(ops, layers_in_stage(model.num_layers, 2, t),
                                       split, wafer, table, params));
  const auto mem = build_stage_mem_models(wafer, wl, br, 4, 2);
  REQUIRE(mem[0].items.size() == 8);

  Bytes stored0 = 0;
  for (const auto& it : mem[0].items) stored0 += it.bytes;
  Seconds replay1 = 0;
  for (const auto& it : mem[1].items) replay1 += it.fwd_time;

  REQUIRE(rep.stages.size() == 2);
  CHECK(rep.stages[0].layers == 2);
  CHECK(rep.stages[1].layers == 2);
  CHECK(rep.stages[0].fwd == br[0].fwd_total);
  CHECK(rep.stages[0].bwd == br[0].bwd_total);
  CHECK(rep.stages[0].recompute == 0.0);
  CHECK(rep.stages[1].recompute == replay1);
  CHECK(rep.stages[0].demand == mem[0].fixed_bytes + stored0);
  CHECK(rep.stages[1].demand == mem[1].fixed_bytes);
  CHECK(rep.stages[0].capacity == mem[0].capacity);
  CHECK(rep.stages[0].peak_live == 2);
  CHECK(rep.stages[1].peak_live == 1);
  CHECK(rep.stages[0].offloaded == 0);
  CHECK(rep.stages[1].received == 0);
  CHECK(rep.memory_ok);
  CHECK_FALSE(rep.ring_fallback);

  const Seconds per0 = br[0].fwd_total + 0.0 + br[0].bwd_total;
  const Seconds per1 = br[1].fwd_total + replay1 + br[1].bwd_total;
  CHECK(rep.t_max == std::max(per0, per1));

  // One pipeline boundary task carries both directions for all microbatches.
  const Bytes boundary_full = 1 * model.seq_len * model.hidden_size * kActElemBytes;
  CHECK(boundary_full == 4096);
  const std::vector<CommTask> tasks = {{0, 1, 2 * 4 * boundary_full, false}};
  const LinkLoadMap links = pp_link_allocation(strat.placement, tasks, kDefaultPunishment);
  CHECK(rep.links.link_bytes == links.link_bytes);
  const Seconds transfer0 =
      wafer.d2d_latency + static_cast<double>(boundary_full) / links.tasks[0].effective_bw;

  std::vector<StageTiming> timing(2);
  timing[0] = {br[0].fwd_total, br[0].bwd_total, 0.0};
  timing[1] = {br[1].fwd_total, br[1].bwd_total, replay1};
  const PipelineTimeline tl = schedule_1f1b(timing, 4, {transfer0});
  CHECK(rep.iteration_time == tl.iteration_time);
  CHECK(rep.timeline.iteration_time == tl.iteration_time);
  CHECK(rep.timeline.events.size() == tl.events.size());
  CHECK(rep.offload_stall == 0.0);

  Flops useful = 0, recompute = 0;
  for (int t = 0; t < 2; ++t)
    useful += (br[t].fwd_flops + br[t].bwd_flops) * 4 * 4.0;
  for (std::size_t i = 0; i < br[1].ops.size(); ++i)
    recompute += br[1].ops[i].fwd_flops * 4 * 4.0;
  CHECK(rep.useful_flops == useful);
  CHECK(rep.recompute_flops == recompute);
  CHECK(rep.throughput == useful / rep.iteration_time);
  CHECK(rep.compute_utilization ==
        useful / (rep.iteration_time * wafer.die_flops() * 4 * 2));

  double ema_total = 0;
  for (int t = 0; t < 2; ++t)
    ema_total += static_cast<double>(br[t].fwd_ema + br[t].bwd_ema) * 4 * 4;
  for (std::size_t i = 0; i < br[1].ops.size(); ++i)
    ema_total += static_cast<double>(br[1].ops[i].fwd_ema) * 4 * 4;
  CHECK(rep.dram_bw_utilization ==
        ema_total / (rep.iteration_time * wafer.die_dram_bandwidth() * 4 * 2));

  double link_traffic = 0;
  for (const auto& [l, b] : rep.links.link_bytes) link_traffic += static_cast<double>(b);
  CHECK(rep.link_utilization ==
        link_traffic / (rep.iteration_time * grid.link_bandwidth *
                        static_cast<double>(rep.links.link_bytes.size())));

  const PlacementCost pc = global_cost(strat.placement, {2.0 * 4 * boundary_full}, {}, {});
  CHECK(rep.placement_cost == pc.cost);
  CHECK(rep.avg_pair_dist == 0.0);
  CHECK(rep.total_hops == pc.paths.total_hops());
  CHECK(rep.total_hops == 1);

  // Identical inputs reproduce the report bit for bit.
  const EvaluationReport again =
      evaluate_iteration(wafer, wl, strat, table, params, kDefaultPunishment);
  CHECK(again.iteration_time == rep.iteration_time);
  CHECK(again.t_max == rep.t_max);
  CHECK(again.throughput == rep.throughput);
  CHECK(again.placement_cost == rep.placement_cost);
  CHECK(again.compute_utilization == rep.compute_utilization);
  CHECK(again.dram_bw_utilization == rep.dram_bw_utilization);
  CHECK(again.link_utilization == rep.link_utilization);
}

TEST_CASE("offload pairs stall the iteration only beyond the sender's idle time") {
  const ModelConfig model = nano_model();
  const WaferConfig wafer = mesh_wafer();
  const CostParams params;
  const auto ops = build_operator_graph(model, 1);
  const TpSplit split = make_split(2, 2, 1, 1, 2, 2);
  const PerfTable table = table_over(wafer, ops, {split}, params);

  TrainingWorkload wl;
  wl.model = model;
  wl.microbatch_size = 1;
  wl.num_microbatches = 4;

  const MeshGrid grid{4, 4, wafer.d2d_bandwidth};
  StrategyConfig strat;
  strat.tp = 4;
  strat.pp = 2;
  strat.split = split;
  strat.placement = serpentine_placement(2, 2, 2, grid);
  strat.recomp.store_mask = {0xFFu, 0u};
  strat.alloc = {{0, 1, 32 * MiB}};

  const EvaluationReport rep =
      evaluate_iteration(wafer, wl, strat, table, params, kDefaultPunishment);

  // The offloaded volume exceeds what stage 0 actually stores, which the
  // memory check must flag even though the schedule still evaluates.
  std::vector<StageBreakdown> br;
  for (int t = 0; t < 2; ++t)
    br.push_back(estimate_stage_timing(ops, layers_in_stage(model.num_layers, 2, t),
                                       split, wafer, table, params));
  const auto mem = build_stage_mem_models(wafer, wl, br, 4, 2);
  Bytes stored0 = 0;
  for (const auto& it : mem[0].items) stored0 += it.bytes;
  REQUIRE(stored0 < 32 * MiB);
  CHECK_FALSE(rep.memory_ok);
  CHECK(rep.stages[0].offloaded == 32 * MiB);
  CHECK(rep.stages[1].received == 32 * MiB);

  // Mirror the traffic model: the pair round-trips each microbatch's share.
  const Bytes boundary_full = 4096;
  const Bytes pair_iter = static_cast<Bytes>(
      std::llround(2.0 * static_cast<double>(32 * MiB) * 4 / std::max(1, 2)));
  const std::vector<CommTask> tasks = {{0, 1, 2 * 4 * boundary_full, false},
                                       {0, 1, pair_iter, true}};
  const LinkLoadMap links = pp_link_allocation(strat.placement, tasks, kDefaultPunishment);
  CHECK(rep.links.link_bytes == links.link_bytes);

  Seconds transfer0 = 0, pair_time = 0;
  for (const auto& rt : links.tasks) {
    if (rt.task.is_pair)
      pair_time = rt.effective_time;
    else
      transfer0 = wafer.d2d_latency +
                  static_cast<double>(boundary_full) / rt.effective_bw;
  }

  Seconds replay1 = 0;
  for (const auto& it : mem[1].items) replay1 += it.fwd_time;
  std::vector<StageTiming> timing(2);
  timing[0] = {br[0].fwd_total, br[0].bwd_total, 0.0};
  timing[1] = {br[1].fwd_total, br[1].bwd_total, replay1};
  const PipelineTimeline tl = schedule_1f1b(timing, 4, {transfer0});

  Seconds busy0 = 0;
  for (const auto& e : tl.events)
    if (e.stage == 0) busy0 += e.end - e.start;
  const Seconds idle0 = std::max(0.0, tl.iteration_time - busy0);
  const Seconds stall = std::max(0.0, pair_time - idle0);
  CHECK(stall > 0.0);
  CHECK(rep.offload_stall == stall);
  CHECK(rep.iteration_time == tl.iteration_time + stall);
  CHECK(rep.timeline.iteration_time == tl.iteration_time);

  // Placement metrics include the pair route: adjacent 2x2 regions sit two
  // hops apart and add one boundary link to the total.
  const PlacementCost pc =
      global_cost(strat.placement, {2.0 * 4 * boundary_full}, strat.alloc,
                  {static_cast<double>(pair_iter)});
  CHECK(rep.placement_cost == pc.cost);
  CHECK(rep.avg_pair_dist == 2.0);
  CHECK(rep.total_hops == 2);
}

TEST_CASE("iteration evaluation rejects inconsistent strategies") {
  const ModelConfig model = nano_model();
  const WaferConfig wafer = mesh_wafer();
  const CostParams params;
  const auto ops = build_operator_graph(model, 1);
  const TpSplit split = make_split(2, 2, 1, 1, 2, 2);
  const TpSplit strip = make_split(1, 4, 1, 1, 4, 1);
  const PerfTable table = table_over(wafer, ops, {split, strip}, params);

  TrainingWorkload wl;
  wl.model = model;
  wl.microbatch_size = 1;
  wl.num_microbatches = 4;

  const MeshGrid grid{4, 4, wafer.d2d_bandwidth};
  StrategyConfig good;
  good.tp = 4;
  good.pp = 2;
  good.split = split;
  good.placement = serpentine_placement(2, 2, 2, grid);
  good.recomp.store_mask = {0xFFu, 0u};

  StrategyConfig bad = good;
  bad.placement = serpentine_placement(3, 2, 2, grid);
  CHECK_THROWS_AS(evaluate_iteration(wafer, wl, bad, table, params, 4.0), SpecError);

  bad = good;
  bad.recomp.store_mask = {0xFFu};
  CHECK_THROWS_AS(evaluate_iteration(wafer, wl, bad, table, params, 4.0), SpecError);

  bad = good;
  bad.split = make_split(2, 1, 2, 1, 1, 1);
  CHECK_THROWS_AS(evaluate_iteration(wafer, wl, bad, table, params, 4.0), SpecError);

  bad = good;
  bad.alloc = {{0, 7, 100}};
  CHECK_THROWS_AS(evaluate_iteration(wafer, wl, bad, table, params, 4.0), SpecError);

  bad = good;
  bad.tp = 0;
  CHECK_THROWS_AS(evaluate_iteration(wafer, wl, bad, table, params, 4.0), SpecError);

  // A folded collective ring is visible at the report level.
  StrategyConfig folded = good;
  folded.split = strip;
  folded.placement = serpentine_placement(2, 1, 4, grid);
  const EvaluationReport rep =
      evaluate_iteration(wafer, wl, folded, table, params, 4.0);
  CHECK(rep.ring_fallback);

  // A wafer whose DRAM cannot even hold the fixed state fails the memory
  // check no matter what the recompute mask keeps.
  WaferConfig small = wafer;
  small.dram.capacity_bytes = 256 * KiB;
  const PerfTable small_table = table_over(small, ops, {split}, params);
  const Bytes fixed0 =
      (model_state_bytes(model, 4, 2) + boundary_activation_bytes(model, 1, 4) * 2) * 4;
  REQUIRE(fixed0 > small.die_dram_bytes() * 4);
  StrategyConfig bare = good;
  bare.recomp.store_mask = {0u, 0u};
  const EvaluationReport tight =
      evaluate_iteration(small, wl, bare, small_table, params, 4.0);
  CHECK_FALSE(tight.memory_ok);
}

TEST_CASE("single-stage evaluation has no boundary traffic or placement cost") {
  const ModelConfig model = nano_model();
  const WaferConfig wafer = mesh_wafer();
  const CostParams params;
  const auto ops = build_operator_graph(model, 1);
  const TpSplit split = make_split(2, 2, 1, 1, 2, 2);
  const PerfTable table = table_over(wafer, ops, {split}, params);

  TrainingWorkload wl;
  wl.model = model;
  wl.microbatch_size = 1;
  wl.num_microbatches = 4;

  StrategyConfig strat;
  strat.tp = 4;
  strat.pp = 1;
  strat.split = split;
  strat.placement =
      hand_placement(4, 4, wafer.d2d_bandwidth, 2, 2, {{0, 0, 2, 2}});
  strat.recomp.store_mask = {0u};

  const EvaluationReport rep = evaluate_iteration(wafer, wl, strat, table, params, 4.0);
  CHECK(rep.stages[0].layers == 4);
  CHECK(rep.links.tasks.empty());
  CHECK(rep.link_utilization == 0.0);
  CHECK(rep.placement_cost == 0.0);
  CHECK(rep.total_hops == 0);
  CHECK(rep.iteration_time == rep.timeline.iteration_time);
  CHECK(rep.t_max ==
        rep.stages[0].fwd + rep.stages[0].recompute + rep.stages[0].bwd);
}

TEST_CASE("closed-form baseline sums compute, recompute, access and traffic") {
  const ModelConfig model = nano_model();
  const WaferConfig wafer = mesh_wafer();
  const CostParams params;
  const auto ops = build_operator_graph(model, 1);

  TrainingWorkload wl;
  wl.model = model;
  wl.microbatch_size = 1;
  wl.num_microbatches = 8;

  double fwd_layer = 0, bwd_layer = 0;
  for (const auto& op : ops) {
    fwd_layer += op.fwd_flops;
    bwd_layer += op.bwd_flops;
  }
  const double f_iter = 8.0 * 4 * fwd_layer;
  const double b_iter = 8.0 * 4 * bwd_layer;

  // Plenty of DRAM: no stage converts checkpoints into recomputation.
  const Bytes state = model_state_bytes(model, 2, 2);
  const Bytes boundary = boundary_activation_bytes(model, 1, 2);
  for (int t = 0; t < 2; ++t) {
    const int live = peak_live_microbatches(2, t);
    const Bytes headroom = wafer.die_dram_bytes() - (state + boundary * live);
    REQUIRE(headroom >= checkpoint_bytes_per_stage(ops, 2, 2, live));
  }

  const BaselineCost out = analytic_baseline(wafer, wl, 2, 2, kDefaultEta, params);
  CHECK(out.tp == 2);
  CHECK(out.pp == 2);
  CHECK(out.c_recomp == 0.0);
  CHECK(out.recompute_fraction == 0.0);

  const double bubble = static_cast<double>(8 + 2 - 1) / 8;
  const double pool = wafer.die_flops() * params.utilization * 2 * 2;
  const double dram_bw = wafer.die_dram_bandwidth() * 2 * 2;
  CHECK(out.c_comp == bubble * (f_iter + b_iter) / pool);
  CHECK(out.c_access == bubble * ((f_iter + b_iter + 0.0) / kDefaultEta) / dram_bw);

  const double bsh = 1.0 * model.seq_len * model.hidden_size * kActElemBytes;
  const double ring_steps = 2.0 * (2 - 1);
  const double ring_beta = 2.0 * (2 - 1) / 2 * bsh / wafer.d2d_bandwidth;
  const double collective =
      8.0 * 4 * 4.0 * (ring_steps * wafer.d2d_latency + ring_beta);
  const double pipeline =
      8.0 * (2 - 1) * 2.0 * (wafer.d2d_latency + bsh / wafer.d2d_bandwidth);
  CHECK(out.c_comm == collective + pipeline);
  CHECK(out.total == out.c_comp + out.c_recomp + out.c_access + out.c_comm);

  // One device, one stage: no collectives, no pipeline hand-off.
  const BaselineCost solo = analytic_baseline(wafer, wl, 1, 1, kDefaultEta, params);
  CHECK(solo.c_comm == 0.0);
  CHECK(solo.c_comp == (f_iter + b_iter) / (wafer.die_flops() * params.utilization));

  CHECK_THROWS_AS(analytic_baseline(wafer, wl, 0, 1, kDefaultEta, params), SpecError);
  CHECK_THROWS_AS(analytic_baseline(wafer, wl, 1, 0, kDefaultEta, params), SpecError);
  CHECK_THROWS_AS(analytic_baseline(wafer, wl, 1, 1, 0.0, params), SpecError);
}

TEST_CASE("baseline converts DRAM shortfall into recomputation pro rata") {
  const ModelConfig model = nano_model();
  const CostParams params;
  const auto ops = build_operator_graph(model, 1);

  TrainingWorkload wl;
  wl.model = model;
  wl.microbatch_size = 1;
  wl.num_microbatches = 8;

  // Zero headroom at tp=2, pp=1: DRAM holds exactly the fixed state, so the
  // whole checkpoint footprint replays and the fraction saturates at one.
  const Bytes fixed = model_state_bytes(model, 2, 1) + boundary_activation_bytes(model, 1, 2);
  REQUIRE(fixed % 2 == 0);
  WaferConfig snug = mesh_wafer();
  snug.dram.capacity_bytes = fixed / 2;
  REQUIRE(snug.die_dram_bytes() == fixed);

  double fwd_layer = 0;
  for (const auto& op : ops) fwd_layer += op.fwd_flops;

  const BaselineCost full = analytic_baseline(snug, wl, 2, 1, kDefaultEta, params);
  CHECK(full.recompute_fraction == 1.0);
  const double bubble = static_cast<double>(8 + 1 - 1) / 8;
  const double pool = snug.die_flops() * params.utilization * 2 * 1;
  CHECK(full.c_recomp == bubble * (1.0 * 8 * 4 * fwd_layer) / pool);
  CHECK(std::isfinite(full.total));

  // One byte less and the fixed state itself no longer fits.
  WaferConfig broke = snug;
  broke.dram.capacity_bytes = fixed / 2 - 1;
  const BaselineCost inf = analytic_baseline(broke, wl, 2, 1, kDefaultEta, params);
  CHECK(std::isinf(inf.total));
  CHECK(inf.recompute_fraction == 1.0);

  // Partial headroom replays a proportional share and costs strictly less
  // than the saturated case but more than the roomy one.
  const Bytes ckpt = checkpoint_bytes_per_stage(ops, 4, 2, 1);
  WaferConfig part = snug;
  part.dram.capacity_bytes = fixed / 2 + ckpt / 4;
  const BaselineCost mid = analytic_baseline(part, wl, 2, 1, kDefaultEta, params);
  const double r = std::clamp(
      1.0 - static_cast<double>(part.die_dram_bytes() - fixed) / static_cast<double>(ckpt),
      0.0, 1.0);
  CHECK(0.0 < mid.recompute_fraction);
  CHECK(mid.recompute_fraction < 1.0);
  CHECK(mid.recompute_fraction == r);
  CHECK(mid.c_recomp == bubble * (r * 8.0 * 4 * fwd_layer) / pool);
  CHECK(mid.total < full.total);
  const BaselineCost roomy = analytic_baseline(mesh_wafer(), wl, 2, 1, kDefaultEta, params);
  CHECK(roomy.total < mid.total);
}

TEST_CASE("tensor degrees must factor evenly over heads and hidden size") {
  const ModelConfig nano = nano_model();  // 4 heads, hidden 64
  CHECK(split_admissible(nano, 1));
  CHECK(split_admissible(nano, 2));
  CHECK_FALSE(split_admissible(nano, 3));
  CHECK(split_admissible(nano, 4));
  CHECK_FALSE(split_admissible(nano, 6));   // needs fh=2, fk=3 but 3 does not divide 64
  CHECK(split_admissible(nano, 8));
  CHECK_FALSE(split_admissible(nano, 10));
  CHECK_FALSE(split_admissible(nano, 12));
  CHECK(split_admissible(nano, 16));

  ModelConfig dense;
  dense.name = "dense-96head";
  dense.num_layers = 8;
  dense.hidden_size = 12288;
  dense.num_heads = 96;
  dense.seq_len = 2048;
  dense.vocab_size = 50000;
  CHECK(split_admissible(dense, 48));
  CHECK(split_admissible(dense, 96));
  CHECK_FALSE(split_admissible(dense, 7));
  CHECK_FALSE(split_admissible(dense, 14));  // 7 divides neither heads nor hidden

  ModelConfig prime;
  prime.name = "prime";
  prime.num_layers = 2;
  prime.hidden_size = 7;
  prime.num_heads = 7;
  prime.seq_len = 8;
  prime.vocab_size = 64;
  CHECK(split_admissible(prime, 1));
  for (int tp = 2; tp <= 16; ++tp) CHECK_FALSE(split_admissible(prime, tp));
}

TEST_CASE("baseline search scans the admissible degree grid for the cheapest point") {
  WaferConfig wafer = mesh_wafer();
  wafer.grid_x = 2;
  wafer.grid_y = 2;

  TrainingWorkload wl;
  wl.model = nano_model();
  wl.microbatch_size = 1;
  wl.num_microbatches = 4;

  // Independent enumeration: factor tp into rectangles that tile the mesh,
  // cap pp by slots, layers and microbatches, score every point.
  auto admissible = [&](int tp) {
    if (tp == 1) return true;
    if (tp % 2 != 0) return false;
    for (int fh = 1; fh <= tp; ++fh)
      if (tp % fh == 0 && wl.model.num_heads % fh == 0 &&
          wl.model.hidden_size % fh == 0 && wl.model.hidden_size % (tp / fh) == 0)
        return true;
    return false;
  };
  const CostParams params;
  BaselineCost want;
  want.total = std::numeric_limits<double>::infinity();
  int points = 0;
  for (int tp = 1; tp <= wafer.die_count(); ++tp) {
    if (!admissible(tp)) continue;
    int slots = 0;
    for (int w = 1; w <= tp; ++w) {
      if (tp % w != 0) continue;
      const int h = tp / w;
      if (wafer.grid_x % w != 0 || wafer.grid_y % h != 0) continue;
      slots = std::max(slots, (wafer.grid_x / w) * (wafer.grid_y / h));
    }
    const int max_pp = std::min({slots, wl.model.num_layers, wl.num_microbatches});
    for (int pp = 1; pp <= max_pp; ++pp) {
      const BaselineCost c = analytic_baseline(wafer, wl, tp, pp, kDefaultEta, params);
      ++points;
      if (c.total < want.total) want = c;
    }
  }
  REQUIRE(points > 4);

  const BaselineCost best = baseline_search(wafer, wl, kDefaultEta, params);
  CHECK(best.total == want.total);
  CHECK(best.tp == want.tp);
  CHECK(best.pp == want.pp);

  // A model with no even factoring pins the search to tp=1.
  ModelConfig prime;
  prime.name = "prime";
  prime.num_layers = 2;
  prime.hidden_size = 7;
  prime.num_heads = 7;
  prime.seq_len = 8;
  prime.vocab_size = 64;
  TrainingWorkload pw;
  pw.model = prime;
  pw.microbatch_size = 1;
  pw.num_microbatches = 4;
  const BaselineCost pinned = baseline_search(wafer, pw, kDefaultEta, params);
  CHECK(pinned.tp == 1);
  CHECK(pinned.pp >= 1);
  CHECK(pinned.pp <= 2);
  CHECK(pinned.total ==
        std::min(analytic_baseline(wafer, pw, 1, 1, kDefaultEta, params).total,
                 analytic_baseline(wafer, pw, 1, 2, kDefaultEta, params).total));
}
