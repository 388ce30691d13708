#include "wdse/recomp.hpp"

#include <algorithm>
#include <limits>
#include <string>

namespace wdse {

namespace {

int quanta_for(Bytes bytes, Bytes quantum) {
  return static_cast<int>(ceil_div(bytes, quantum));
}

}  // namespace

RecompProfile recomp_profile(const std::vector<StageMemItem>& items, Bytes quantum) {
  if (quantum <= 0) throw SpecError("memory quantum must be positive");
  if (items.size() > 31) throw SpecError("too many checkpoint classes per stage");
  RecompProfile prof;
  prof.quantum = quantum;

  int total_q = 0;
  for (const auto& it : items) total_q += quanta_for(it.bytes, quantum);

  // 0/1 knapsack over quanta; include an item only on strict improvement so
  // the chosen subset is deterministic.
  const double kNeg = -1.0;
  std::vector<double> best(total_q + 1, 0.0);
  std::vector<std::uint32_t> mask(total_q + 1, 0);
  for (std::size_t i = 0; i < items.size(); ++i) {
    const int w = quanta_for(items[i].bytes, quantum);
    const double v = items[i].fwd_time;
    if (v < 0) throw SpecError("negative forward time");
    for (int q = total_q; q >= w; --q) {
      const double cand = best[q - w] + v;
      if (cand > best[q]) {
        best[q] = cand;
        mask[q] = mask[q - w] | (1u << i);
      }
    }
    (void)kNeg;
  }
  prof.saved = std::move(best);
  prof.store_mask = std::move(mask);
  return prof;
}

RecompPlan plan_recompute(const std::vector<StageMemModel>& stages, Bytes quantum) {
  const int pp = static_cast<int>(stages.size());
  if (pp < 1) throw SpecError("need at least one stage");
  if (quantum <= 0) throw SpecError("memory quantum must be positive");

  std::vector<RecompProfile> prof;
  prof.reserve(pp);
  std::vector<int> headroom_q(pp);
  Bytes fixed_total = 0, capacity_total = 0;
  for (int t = 0; t < pp; ++t) {
    prof.push_back(recomp_profile(stages[t].items, quantum));
    const Bytes head = stages[t].capacity - stages[t].fixed_bytes;
    headroom_q[t] = head > 0 ? static_cast<int>(head / quantum) : 0;
    fixed_total += stages[t].fixed_bytes;
    capacity_total += stages[t].capacity;
  }
  if (fixed_total > capacity_total)
    throw InfeasibleError("model state alone exceeds wafer DRAM by " +
                          std::to_string(fixed_total - capacity_total) + " bytes");

  // suffix_budget[t]: quanta stages t..pp-1 may collectively claim.
  std::vector<int> suffix_budget(pp + 1, 0);
  for (int t = pp - 1; t >= 0; --t) suffix_budget[t] = suffix_budget[t + 1] + headroom_q[t];

  // T[t][m): minimal achievable max stage time over stages t..pp-1 given m
  // quanta of shared budget.  Non-increasing in m, so clamping an over-large
  // remainder to the suffix budget is exact.
  std::vector<std::vector<Seconds>> T(pp + 1);
  std::vector<std::vector<int>> choice(pp);
  T[pp].assign(1, 0.0);
  for (int t = pp - 1; t >= 0; --t) {
    const int mb = suffix_budget[t];
    const int mb_next = suffix_budget[t + 1];
    const int claim_max = prof[t].max_quanta();
    T[t].assign(mb + 1, std::numeric_limits<double>::infinity());
    choice[t].assign(mb + 1, 0);
    for (int m = 0; m <= mb; ++m) {
      for (int mt = 0; mt <= std::min(m, claim_max); ++mt) {
        const int rest = std::min(m - mt, mb_next);
        const Seconds here =
            stages[t].bwd_time + 2.0 * stages[t].fwd_time - prof[t].saved[mt];
        const Seconds v = std::max(here, T[t + 1][rest]);
        if (v < T[t][m]) {
          T[t][m] = v;
          choice[t][m] = mt;
        }
      }
    }
  }

  RecompPlan plan;
  plan.quantum = quantum;
  plan.store_mask.resize(pp);
  plan.stored_bytes.resize(pp);
  plan.demand_bytes.resize(pp);
  plan.stage_time.resize(pp);
  plan.recompute_time.resize(pp);
  int remaining = suffix_budget[0];
  for (int t = 0; t < pp; ++t) {
    const int mt = choice[t][remaining];
    remaining = std::min(remaining - mt, suffix_budget[t + 1]);
    plan.store_mask[t] = prof[t].store_mask[mt];
    Bytes stored = 0;
    Seconds saved = 0;
    for (std::size_t i = 0; i < stages[t].items.size(); ++i) {
      if (plan.store_mask[t] & (1u << i)) {
        stored += stages[t].items[i].bytes;
        saved += stages[t].items[i].fwd_time;
      }
    }
    plan.stored_bytes[t] = stored;
    plan.demand_bytes[t] = stages[t].fixed_bytes + stored;
    plan.recompute_time[t] = stages[t].fwd_time - saved;
    plan.stage_time[t] = stages[t].bwd_time + 2.0 * stages[t].fwd_time - saved;
    plan.t_max = std::max(plan.t_max, plan.stage_time[t]);
  }
  return plan;
}

SenderHelperSplit find_senders_helpers(const std::vector<Bytes>& demand,
                                       const std::vector<Bytes>& capacity) {
  if (demand.size() != capacity.size()) throw SpecError("demand/capacity size mismatch");
  SenderHelperSplit split;
  for (std::size_t t = 0; t < demand.size(); ++t) {
    const Bytes over = demand[t] - capacity[t];
    if (over > 0)
      split.senders.push_back({static_cast<int>(t), over});
    else
      split.helpers.push_back({static_cast<int>(t), -over});
  }
  auto by_bytes_desc = [](const StageOverflow& a, const StageOverflow& b) {
    if (a.bytes != b.bytes) return a.bytes > b.bytes;
    return a.stage < b.stage;
  };
  std::sort(split.senders.begin(), split.senders.end(), by_bytes_desc);
  std::sort(split.helpers.begin(), split.helpers.end(), by_bytes_desc);
  return split;
}

std::vector<MemPair> pair_memory(const SenderHelperSplit& split) {
  Bytes total_over = 0, total_free = 0;
  for (const auto& s : split.senders) total_over += s.bytes;
  for (const auto& h : split.helpers) total_free += h.bytes;
  if (total_over > total_free)
    throw InfeasibleError("checkpoint overflow exceeds helper DRAM by " +
                          std::to_string(total_over - total_free) + " bytes");

  std::vector<StageOverflow> helpers = split.helpers;
  std::vector<MemPair> pairs;
  for (const auto& sender : split.senders) {
    Bytes need = sender.bytes;
    while (need > 0) {
      auto best = helpers.end();
      for (auto it = helpers.begin(); it != helpers.end(); ++it) {
        if (it->bytes <= 0) continue;
        if (best == helpers.end() || it->bytes > best->bytes ||
            (it->bytes == best->bytes && it->stage < best->stage))
          best = it;
      }
      if (best == helpers.end())
        throw InfeasibleError("helper capacity exhausted while pairing");
      const Bytes amount = std::min(need, best->bytes);
      pairs.push_back({sender.stage, best->stage, amount});
      best->bytes -= amount;
      need -= amount;
    }
  }
  return pairs;
}

}  // namespace wdse
