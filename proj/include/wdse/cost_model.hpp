#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "wdse/hw_model.hpp"
#include "wdse/units.hpp"
#include "wdse/workload.hpp"

namespace wdse {

enum class DataflowKind { kOutputStationary, kWeightStationary, kInputStationary, kRowStationary };

const char* to_string(DataflowKind d);

// --- Tiled external memory access (EMA) model -------------------------------
//
// GEMM C[M,N] = A[M,K] * B[K,N] runs as a three-level blocked loop nest with
// square tiles of side T, where T is the largest power of two satisfying
// 3*T^2 * elem_bytes <= sram_bytes (one A, one B, one C tile resident).
// With nI = ceil(M/T), nJ = ceil(N/T), nK = ceil(K/T), the element traffic is
//
//   output-stationary  (ij loop, k inner; C accumulates on-array):
//       A: M*K*nJ     B: K*N*nI     C: M*N
//   weight-stationary  (kj loop, i inner; B tile resident):
//       A: M*K*nJ     B: K*N        C: M*N*(2*nK - 1)
//   input-stationary   (ik loop, j inner; A tile resident):
//       A: M*K        B: K*N*nI     C: M*N*(2*nK - 1)
//
// C partials are written on the first K pass and read+written on later ones.
// A problem whose full footprint M*K + K*N + M*N fits in SRAM needs no tiling
// and touches every element exactly once under every dataflow.
// Row-stationary is reserved for convolutions and is inadmissible here.

long long ema_tile_side(Bytes sram_bytes, Bytes elem_bytes = kActElemBytes);

long long ema_elements_for_dataflow(long long m, long long k, long long n,
                                    DataflowKind dataflow, Bytes sram_bytes,
                                    Bytes elem_bytes = kActElemBytes);

Bytes ema_for_dataflow(long long m, long long k, long long n, DataflowKind dataflow,
                       Bytes sram_bytes, Bytes elem_bytes = kActElemBytes);

// Tunables of the analytical execution model.
struct CostParams {
  double utilization = 0.5;       // fraction of peak FLOPS a die sustains
  Seconds alpha_link = 1e-6;      // fixed collective startup latency
  double bwd_ema_factor = 2.0;    // backward touches roughly twice the bytes
  Bytes elem_bytes = kActElemBytes;
};

// Shard of one operator as executed on a single die.
struct OpShape {
  OperatorKind kind;
  long long m = 0, k = 0, n = 0;
  long long elements = 0;     // elementwise ops
  long long kv_elements = 0;  // fused attention K/V footprint
  bool operator==(const OpShape&) const = default;
};

struct OpCost {
  Seconds fwd_latency = 0;
  Seconds bwd_latency = 0;
  Flops fwd_flops = 0;
  Flops bwd_flops = 0;
  Bytes fwd_ema_bytes = 0;
  Bytes bwd_ema_bytes = 0;
  DataflowKind dataflow = DataflowKind::kOutputStationary;
};

// Admissible dataflows for an operator shard; GEMMs choose among the three
// stationary schemes, all other operators stream through output-stationary.
std::vector<DataflowKind> admissible_dataflows(OperatorKind kind);

// Lowest-latency dataflow; EMA decides since compute time is dataflow
// independent.  Ties resolve in OS < WS < IS declaration order.
DataflowKind select_dataflow(const OpShape& op, const WaferConfig& wafer,
                             const CostParams& params);

// Roofline latency of one operator shard on one die: compute time at derated
// peak vs. EMA bytes over the die's DRAM bandwidth, whichever dominates.
OpCost op_latency(const OpShape& op, const WaferConfig& wafer, const CostParams& params);

// Ring all-reduce cost: alpha + (2*(tp-1)/tp * tensor_bytes) / bandwidth.
// tp == 1 costs exactly zero.
Seconds allreduce_time(int tp, Bytes tensor_bytes, double bandwidth, Seconds alpha);

// --- Precomputed operator cost table ----------------------------------------
//
// Keys combine the die identity (derated FLOPS, core SRAM, DRAM bandwidth)
// with the operator shard.  Misses are hard errors so silent fallbacks to
// a different cost model cannot skew a search.
std::string die_cost_key(const WaferConfig& wafer, const CostParams& params);

class PerfTable {
 public:
  void insert(const std::string& die_key, const OpShape& shape, const OpCost& cost);
  bool contains(const std::string& die_key, const OpShape& shape) const;
  const OpCost& lookup(const std::string& die_key, const OpShape& shape) const;
  std::size_t size() const { return entries_.size(); }

  // Content hash of the covered keys and costs, for cache validation.
  std::uint64_t content_hash() const;

  std::string serialize() const;                 // JSON text
  static PerfTable deserialize(const std::string& text);

 private:
  static std::string encode(const std::string& die_key, const OpShape& shape);
  std::unordered_map<std::string, OpCost> entries_;
  std::vector<std::string> insertion_order_;
};

// Computes and inserts costs for every shape on every wafer, skipping
// already-present entries.
void build_perf_table(PerfTable& table, const std::vector<WaferConfig>& wafers,
                      const std::vector<OpShape>& shapes, const CostParams& params);

}  // namespace wdse
