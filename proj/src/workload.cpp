#include "wdse/workload.hpp"

#include <stdexcept>

namespace wdse {

const char* to_string(OperatorKind k) {
  switch (k) {
    case OperatorKind::kLayerNormAttn: return "layernorm_attn";
    case OperatorKind::kQkvGemm: return "qkv_gemm";
    case OperatorKind::kFlashAttention: return "flash_attention";
    case OperatorKind::kProjGemm: return "proj_gemm";
    case OperatorKind::kLayerNormMlp: return "layernorm_mlp";
    case OperatorKind::kMlpUpGemm: return "mlp_up_gemm";
    case OperatorKind::kActivationFn: return "activation_fn";
    case OperatorKind::kMlpDownGemm: return "mlp_down_gemm";
  }
  return "unknown";
}

bool is_gemm(OperatorKind k) {
  return k == OperatorKind::kQkvGemm || k == OperatorKind::kProjGemm ||
         k == OperatorKind::kMlpUpGemm || k == OperatorKind::kMlpDownGemm;
}

double derive_param_count(const ModelConfig& m) {
  const double h = static_cast<double>(m.hidden_size);
  const double layer = 12.0 * h * h + 13.0 * h;
  return m.num_layers * layer + 2.0 * static_cast<double>(m.vocab_size) * h;
}

namespace {

OperatorNode gemm_node(OperatorKind kind, long long m, long long k, long long n,
                       Bytes checkpoint, bool comm_after) {
  OperatorNode op;
  op.kind = kind;
  op.m = m;
  op.k = k;
  op.n = n;
  op.fwd_flops = 2.0 * static_cast<double>(m) * static_cast<double>(k) * static_cast<double>(n);
  op.bwd_flops = 2.0 * op.fwd_flops;
  op.checkpoint_bytes = checkpoint;
  op.tp_comm_after = comm_after;
  return op;
}

OperatorNode elementwise_node(OperatorKind kind, long long elements,
                              double flops_per_elem, Bytes checkpoint) {
  OperatorNode op;
  op.kind = kind;
  op.elements = elements;
  op.fwd_flops = flops_per_elem * static_cast<double>(elements);
  op.bwd_flops = 2.0 * op.fwd_flops;
  op.checkpoint_bytes = checkpoint;
  return op;
}

}  // namespace

std::vector<OperatorNode> build_operator_graph(const ModelConfig& m, long long microbatch) {
  if (m.moe_experts > 1)
    throw SpecError("unsupported model: mixture-of-experts graphs are not modeled (" +
                    m.name + ")");
  if (m.num_layers < 1 || m.hidden_size < 1 || m.seq_len < 1 || m.num_heads < 1)
    throw SpecError("model dims must be positive: " + m.name);
  if (m.hidden_size % m.num_heads != 0)
    throw SpecError("hidden_size must divide evenly across heads: " + m.name);
  if (microbatch < 0) throw SpecError("negative microbatch size");

  const long long b = microbatch;
  const long long s = m.seq_len;
  const long long h = m.hidden_size;
  const long long rows = b * s;
  const Bytes bsh_bytes = static_cast<Bytes>(rows) * h * kActElemBytes;

  std::vector<OperatorNode> ops;
  ops.reserve(kNumOperatorKinds);

  ops.push_back(elementwise_node(OperatorKind::kLayerNormAttn, rows * h,
                                 kLayerNormFlopsPerElem, bsh_bytes));
  ops.push_back(gemm_node(OperatorKind::kQkvGemm, rows, h, 3 * h, bsh_bytes, false));

  // Fused attention keeps Q, K, V plus one FP32 softmax statistic per query
  // row per head; the s*s score matrix is never materialized.
  OperatorNode flash;
  flash.kind = OperatorKind::kFlashAttention;
  flash.m = rows;
  flash.k = h;
  flash.n = s;
  flash.kv_elements = rows * h;
  flash.fwd_flops = 4.0 * static_cast<double>(rows) * static_cast<double>(s) *
                    static_cast<double>(h);
  flash.bwd_flops = kFlashBwdFactor * flash.fwd_flops;
  flash.checkpoint_bytes = 3 * bsh_bytes + static_cast<Bytes>(b) * m.num_heads * s * 4;
  ops.push_back(flash);

  ops.push_back(gemm_node(OperatorKind::kProjGemm, rows, h, h, bsh_bytes, true));
  ops.push_back(elementwise_node(OperatorKind::kLayerNormMlp, rows * h,
                                 kLayerNormFlopsPerElem, bsh_bytes));
  ops.push_back(gemm_node(OperatorKind::kMlpUpGemm, rows, h, 4 * h, bsh_bytes, false));
  ops.push_back(elementwise_node(OperatorKind::kActivationFn, rows * 4 * h,
                                 kActivationFlopsPerElem, 4 * bsh_bytes));
  ops.push_back(gemm_node(OperatorKind::kMlpDownGemm, rows, 4 * h, h, 4 * bsh_bytes, true));
  return ops;
}

Bytes model_state_bytes(const ModelConfig& m, int tp, int pp) {
  if (tp < 1 || pp < 1) throw SpecError("tp and pp must be positive");
  const double params =
      m.param_count > 0 ? m.param_count : derive_param_count(m);
  const double per_die = params * kBytesPerParam / (static_cast<double>(tp) * pp);
  return align_up(static_cast<Bytes>(per_die + 0.999999));
}

Bytes boundary_activation_bytes(const ModelConfig& m, long long microbatch, int tp) {
  const Bytes full = static_cast<Bytes>(microbatch) * m.seq_len * m.hidden_size *
                     kActElemBytes;
  return align_up(ceil_div(full, static_cast<Bytes>(tp)));
}

Bytes checkpoint_bytes_per_stage(const std::vector<OperatorNode>& layer_ops,
                                 int layers_in_stage, int tp, int live_microbatches) {
  Bytes total = 0;
  for (const auto& op : layer_ops)
    total += ceil_div(op.checkpoint_bytes, static_cast<Bytes>(tp));
  return total * layers_in_stage * live_microbatches;
}

int layers_in_stage(int num_layers, int pp, int stage) {
  if (pp < 1 || stage < 0 || stage >= pp) throw SpecError("bad stage index");
  return num_layers / pp + (stage < num_layers % pp ? 1 : 0);
}

ModelConfig model_preset(const std::string& name) {
  ModelConfig m;
  m.name = name;
  if (name == "llama2-30b") {
    m.num_layers = 60;
    m.hidden_size = 6656;
    m.num_heads = 52;
    m.seq_len = 4096;
    m.vocab_size = 32000;
    m.param_count = 30e9;
  } else if (name == "llama3-70b") {
    m.num_layers = 80;
    m.hidden_size = 8192;
    m.num_heads = 64;
    m.seq_len = 8192;
    m.vocab_size = 128256;
    m.param_count = 70e9;
  } else if (name == "gpt-175b") {
    m.num_layers = 96;
    m.hidden_size = 12288;
    m.num_heads = 96;
    m.seq_len = 2048;
    m.vocab_size = 50257;
    m.param_count = 175e9;
  } else {
    throw SpecError("unknown model preset: " + name);
  }
  return m;
}

std::vector<std::string> model_preset_names() {
  return {"llama2-30b", "llama3-70b", "gpt-175b"};
}

}  // namespace wdse
