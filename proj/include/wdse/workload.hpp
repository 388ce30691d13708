#pragma once

#include <string>
#include <vector>

#include "wdse/units.hpp"

namespace wdse {

// Dense decoder-only transformer description.  moe_experts > 1 marks a
// mixture-of-experts graph, which this toolkit does not model.
struct ModelConfig {
  std::string name;
  int num_layers = 0;
  long long hidden_size = 0;
  int num_heads = 0;
  long long seq_len = 0;
  long long vocab_size = 0;
  double param_count = 0;  // 0 requests derivation from the dims above
  int moe_experts = 1;
};

// Parameter count for the canonical dense layer stack plus tied input and
// output embeddings: L*(12*H^2 + 13*H) + 2*V*H.
double derive_param_count(const ModelConfig& m);

enum class OperatorKind {
  kLayerNormAttn,
  kQkvGemm,
  kFlashAttention,
  kProjGemm,
  kLayerNormMlp,
  kMlpUpGemm,
  kActivationFn,
  kMlpDownGemm,
};

const char* to_string(OperatorKind k);
inline constexpr int kNumOperatorKinds = 8;

bool is_gemm(OperatorKind k);

// One operator of one transformer layer at microbatch granularity, before
// any tensor-parallel sharding.  GEMMs carry (m,k,n); elementwise ops carry
// elements; FlashAttention carries query rows m, head width k, context n and
// the key/value footprint in kv_elements.
struct OperatorNode {
  OperatorKind kind;
  Flops fwd_flops = 0;
  Flops bwd_flops = 0;
  Bytes checkpoint_bytes = 0;  // input activation retained for backward
  bool tp_comm_after = false;  // all-reduce follows under tensor parallelism
  long long m = 0, k = 0, n = 0;
  long long elements = 0;
  long long kv_elements = 0;
};

// Elementwise FLOP weights; stated here once so the cost model and the
// operator graph agree.
inline constexpr double kLayerNormFlopsPerElem = 5.0;
inline constexpr double kActivationFlopsPerElem = 8.0;
// FlashAttention backward replays the forward matmuls.
inline constexpr double kFlashBwdFactor = 2.5;

// The eight operators of one layer for one microbatch.  microbatch == 0
// yields a structurally valid all-zero graph.
std::vector<OperatorNode> build_operator_graph(const ModelConfig& m, long long microbatch);

// Per-die optimizer + weight state under a tp*pp device grid, aligned up.
Bytes model_state_bytes(const ModelConfig& m, int tp, int pp);

// Bytes of the stage-boundary input activation one microbatch pins per die;
// kept even under full recomputation.
Bytes boundary_activation_bytes(const ModelConfig& m, long long microbatch, int tp);

// Sum of stored checkpoints for one stage: per-operator bytes shrink by the
// tensor-parallel degree, scale by layer count and live microbatches.
Bytes checkpoint_bytes_per_stage(const std::vector<OperatorNode>& layer_ops,
                                 int layers_in_stage, int tp, int live_microbatches);

struct TrainingWorkload {
  ModelConfig model;
  long long microbatch_size = 1;
  int num_microbatches = 1;

  double params() const {
    return model.param_count > 0 ? model.param_count : derive_param_count(model);
  }
  Bytes model_state_total() const {
    return align_up(static_cast<Bytes>(params() * kBytesPerParam));
  }
};

// Layers assigned to stage `stage` when num_layers splits as evenly as
// possible across pp stages (earlier stages take the remainder).
int layers_in_stage(int num_layers, int pp, int stage);

// Built-in model presets: "llama2-30b", "llama3-70b", "gpt-175b".
ModelConfig model_preset(const std::string& name);
std::vector<std::string> model_preset_names();

}  // namespace wdse
