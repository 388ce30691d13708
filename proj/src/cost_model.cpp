#include "wdse/cost_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "json.hpp"

namespace wdse {

const char* to_string(DataflowKind d) {
  switch (d) {
    case DataflowKind::kOutputStationary: return "output_stationary";
    case DataflowKind::kWeightStationary: return "weight_stationary";
    case DataflowKind::kInputStationary: return "input_stationary";
    case DataflowKind::kRowStationary: return "row_stationary";
  }
  return "unknown";
}

long long ema_tile_side(Bytes sram_bytes, Bytes elem_bytes) {
  long long t = 1;
  while (3 * (2 * t) * (2 * t) * elem_bytes <= sram_bytes) t *= 2;
  return t;
}

long long ema_elements_for_dataflow(long long m, long long k, long long n,
                                    DataflowKind dataflow, Bytes sram_bytes,
                                    Bytes elem_bytes) {
  if (m <= 0 || k <= 0 || n <= 0) return 0;
  const long long footprint = m * k + k * n + m * n;
  if (footprint * elem_bytes <= sram_bytes) return footprint;

  const long long t = ema_tile_side(sram_bytes, elem_bytes);
  const long long ni = ceil_div(m, t);
  const long long nj = ceil_div(n, t);
  const long long nk = ceil_div(k, t);
  switch (dataflow) {
    case DataflowKind::kOutputStationary:
      return m * k * nj + k * n * ni + m * n;
    case DataflowKind::kWeightStationary:
      return m * k * nj + k * n + m * n * (2 * nk - 1);
    case DataflowKind::kInputStationary:
      return m * k + k * n * ni + m * n * (2 * nk - 1);
    case DataflowKind::kRowStationary:
      throw SpecError("row-stationary dataflow is only defined for convolutions");
  }
  return 0;
}

Bytes ema_for_dataflow(long long m, long long k, long long n, DataflowKind dataflow,
                       Bytes sram_bytes, Bytes elem_bytes) {
  return ema_elements_for_dataflow(m, k, n, dataflow, sram_bytes, elem_bytes) * elem_bytes;
}

std::vector<DataflowKind> admissible_dataflows(OperatorKind kind) {
  if (is_gemm(kind))
    return {DataflowKind::kOutputStationary, DataflowKind::kWeightStationary,
            DataflowKind::kInputStationary};
  return {DataflowKind::kOutputStationary};
}

namespace {

Flops shape_fwd_flops(const OpShape& op) {
  switch (op.kind) {
    case OperatorKind::kQkvGemm:
    case OperatorKind::kProjGemm:
    case OperatorKind::kMlpUpGemm:
    case OperatorKind::kMlpDownGemm:
      return 2.0 * static_cast<double>(op.m) * static_cast<double>(op.k) *
             static_cast<double>(op.n);
    case OperatorKind::kFlashAttention:
      return 4.0 * static_cast<double>(op.m) * static_cast<double>(op.k) *
             static_cast<double>(op.n);
    case OperatorKind::kLayerNormAttn:
    case OperatorKind::kLayerNormMlp:
      return kLayerNormFlopsPerElem * static_cast<double>(op.elements);
    case OperatorKind::kActivationFn:
      return kActivationFlopsPerElem * static_cast<double>(op.elements);
  }
  return 0;
}

Flops shape_bwd_flops(const OpShape& op) {
  const double factor =
      op.kind == OperatorKind::kFlashAttention ? kFlashBwdFactor : 2.0;
  return factor * shape_fwd_flops(op);
}

Bytes shape_ema_bytes(const OpShape& op, DataflowKind dataflow, Bytes core_sram,
                      Bytes elem_bytes) {
  switch (op.kind) {
    case OperatorKind::kQkvGemm:
    case OperatorKind::kProjGemm:
    case OperatorKind::kMlpUpGemm:
    case OperatorKind::kMlpDownGemm:
      return ema_for_dataflow(op.m, op.k, op.n, dataflow, core_sram, elem_bytes);
    case OperatorKind::kFlashAttention:
      // Q in + O out + K,V in; the s*s score tile never leaves SRAM.
      return (2 * op.m * op.k + 2 * op.kv_elements) * elem_bytes;
    case OperatorKind::kLayerNormAttn:
    case OperatorKind::kLayerNormMlp:
    case OperatorKind::kActivationFn:
      return 2 * op.elements * elem_bytes;
  }
  return 0;
}

}  // namespace

DataflowKind select_dataflow(const OpShape& op, const WaferConfig& wafer,
                             const CostParams& params) {
  const Bytes core_sram = wafer.die.core.sram_bytes;
  DataflowKind best = DataflowKind::kOutputStationary;
  Bytes best_ema = std::numeric_limits<Bytes>::max();
  for (DataflowKind d : admissible_dataflows(op.kind)) {
    const Bytes ema = shape_ema_bytes(op, d, core_sram, params.elem_bytes);
    if (ema < best_ema) {
      best_ema = ema;
      best = d;
    }
  }
  return best;
}

OpCost op_latency(const OpShape& op, const WaferConfig& wafer, const CostParams& params) {
  OpCost c;
  c.dataflow = select_dataflow(op, wafer, params);
  c.fwd_flops = shape_fwd_flops(op);
  c.bwd_flops = shape_bwd_flops(op);
  c.fwd_ema_bytes =
      shape_ema_bytes(op, c.dataflow, wafer.die.core.sram_bytes, params.elem_bytes);
  c.bwd_ema_bytes = static_cast<Bytes>(params.bwd_ema_factor * c.fwd_ema_bytes);

  const double derated = wafer.die_flops() * params.utilization;
  const double dram_bw = wafer.die_dram_bandwidth();
  auto roofline = [&](Flops flops, Bytes ema) -> Seconds {
    const double t_comp = derated > 0 ? flops / derated : 0.0;
    double t_mem = 0.0;
    if (ema > 0) {
      if (dram_bw <= 0) return std::numeric_limits<double>::infinity();
      t_mem = static_cast<double>(ema) / dram_bw;
    }
    return std::max(t_comp, t_mem);
  };
  c.fwd_latency = roofline(c.fwd_flops, c.fwd_ema_bytes);
  c.bwd_latency = roofline(c.bwd_flops, c.bwd_ema_bytes);
  return c;
}

Seconds allreduce_time(int tp, Bytes tensor_bytes, double bandwidth, Seconds alpha) {
  if (tp <= 1) return 0.0;
  const double beta = 2.0 * (tp - 1) / static_cast<double>(tp) *
                      static_cast<double>(tensor_bytes);
  return alpha + beta / bandwidth;
}

std::string die_cost_key(const WaferConfig& wafer, const CostParams& params) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "f%.17g_s%lld_b%.17g_u%.17g_e%lld",
                wafer.die_flops(), static_cast<long long>(wafer.die.core.sram_bytes),
                wafer.die_dram_bandwidth(), params.utilization,
                static_cast<long long>(params.elem_bytes));
  return buf;
}

std::string PerfTable::encode(const std::string& die_key, const OpShape& shape) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "|%d_%lld_%lld_%lld_%lld_%lld",
                static_cast<int>(shape.kind), shape.m, shape.k, shape.n,
                shape.elements, shape.kv_elements);
  return die_key + buf;
}

void PerfTable::insert(const std::string& die_key, const OpShape& shape,
                       const OpCost& cost) {
  const std::string key = encode(die_key, shape);
  if (entries_.emplace(key, cost).second) insertion_order_.push_back(key);
}

bool PerfTable::contains(const std::string& die_key, const OpShape& shape) const {
  return entries_.count(encode(die_key, shape)) > 0;
}

const OpCost& PerfTable::lookup(const std::string& die_key, const OpShape& shape) const {
  auto it = entries_.find(encode(die_key, shape));
  if (it == entries_.end())
    throw std::runtime_error("perf table miss for key " + encode(die_key, shape));
  return it->second;
}

std::uint64_t PerfTable::content_hash() const {
  std::vector<std::string> keys = insertion_order_;
  std::sort(keys.begin(), keys.end());
  std::uint64_t h = fnv1a("perf_table_v1");
  for (const auto& k : keys) {
    h = fnv1a(k, h);
    const OpCost& c = entries_.at(k);
    const double vals[4] = {c.fwd_latency, c.bwd_latency,
                            static_cast<double>(c.fwd_ema_bytes),
                            static_cast<double>(c.bwd_ema_bytes)};
    h = fnv1a(vals, sizeof(vals), h);
  }
  return h;
}

std::string PerfTable::serialize() const {
  nlohmann::ordered_json root;
  root["format"] = "wdse-perf-table-v1";
  auto& items = root["entries"];
  items = nlohmann::ordered_json::array();
  for (const auto& key : insertion_order_) {
    const OpCost& c = entries_.at(key);
    nlohmann::ordered_json e;
    e["key"] = key;
    e["fwd_latency"] = c.fwd_latency;
    e["bwd_latency"] = c.bwd_latency;
    e["fwd_flops"] = c.fwd_flops;
    e["bwd_flops"] = c.bwd_flops;
    e["fwd_ema_bytes"] = c.fwd_ema_bytes;
    e["bwd_ema_bytes"] = c.bwd_ema_bytes;
    e["dataflow"] = static_cast<int>(c.dataflow);
    items.push_back(std::move(e));
  }
  return root.dump(1);
}

PerfTable PerfTable::deserialize(const std::string& text) {
  PerfTable t;
  const auto root = nlohmann::json::parse(text);
  if (root.value("format", "") != "wdse-perf-table-v1")
    throw SpecError("unrecognized perf table format");
  for (const auto& e : root.at("entries")) {
    OpCost c;
    c.fwd_latency = e.at("fwd_latency").get<double>();
    c.bwd_latency = e.at("bwd_latency").get<double>();
    c.fwd_flops = e.at("fwd_flops").get<double>();
    c.bwd_flops = e.at("bwd_flops").get<double>();
    c.fwd_ema_bytes = e.at("fwd_ema_bytes").get<Bytes>();
    c.bwd_ema_bytes = e.at("bwd_ema_bytes").get<Bytes>();
    c.dataflow = static_cast<DataflowKind>(e.at("dataflow").get<int>());
    const std::string key = e.at("key").get<std::string>();
    if (t.entries_.emplace(key, c).second) t.insertion_order_.push_back(key);
  }
  return t;
}

void build_perf_table(PerfTable& table, const std::vector<WaferConfig>& wafers,
                      const std::vector<OpShape>& shapes, const CostParams& params) {
  for (const auto& wafer : wafers) {
    const std::string key = die_cost_key(wafer, params);
    for (const auto& shape : shapes) {
      if (!table.contains(key, shape)) table.insert(key, shape, op_latency(shape, wafer, params));
    }
  }
}

}  // namespace wdse
