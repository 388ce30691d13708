#include <vector>

#include "doctest.h"
#include "wdse/workload.hpp"

using namespace wdse;

namespace {

ModelConfig toy_model() {
  ModelConfig m;
  m.name = "toy";
  m.num_layers = 4;
  m.hidden_size = 8192;
  m.num_heads = 64;
  m.seq_len = 2048;
  m.vocab_size = 32000;
  return m;
}

}  // namespace

TEST_CASE("operator graph has the eight layer operators in execution order") {
  const auto ops = build_operator_graph(toy_model(), 1);
  REQUIRE(ops.size() == 8);
  CHECK(ops[0].kind == OperatorKind::kLayerNormAttn);
  CHECK(ops[1].kind == OperatorKind::kQkvGemm);
  CHECK(ops[2].kind == OperatorKind::kFlashAttention);
  CHECK(ops[3].kind == OperatorKind::kProjGemm);
  CHECK(ops[4].kind == OperatorKind::kLayerNormMlp);
  CHECK(ops[5].kind == OperatorKind::kMlpUpGemm);
  CHECK(ops[6].kind == OperatorKind::kActivationFn);
  CHECK(ops[7].kind == OperatorKind::kMlpDownGemm);

  // Only the block-final row-parallel GEMMs reduce across tensor peers.
  for (int i = 0; i < 8; ++i) CHECK(ops[i].tp_comm_after == (i == 3 || i == 7));
  for (const auto& op : ops) CHECK(op.checkpoint_bytes > 0);
}

TEST_CASE("QKV forward FLOPs at B=1 S=2048 H=8192") {
  // 2 * (B*S) * H * 3H = 2 * 2048 * 8192 * 24576, exact in double.
  const auto ops = build_operator_graph(toy_model(), 1);
  CHECK(ops[1].fwd_flops == 824633720832.0);
  CHECK(ops[1].bwd_flops == 2.0 * 824633720832.0);
  CHECK(ops[1].m == 2048);
  CHECK(ops[1].k == 8192);
  CHECK(ops[1].n == 3 * 8192);
}

TEST_CASE("GEMM flops scale linearly with microbatch") {
  const auto one = build_operator_graph(toy_model(), 1);
  const auto four = build_operator_graph(toy_model(), 4);
  for (std::size_t i = 0; i < one.size(); ++i) {
    CHECK(four[i].fwd_flops == 4.0 * one[i].fwd_flops);
    CHECK(four[i].checkpoint_bytes == 4 * one[i].checkpoint_bytes);
  }
}

TEST_CASE("flash attention flops and backward factors") {
  const auto ops = build_operator_graph(toy_model(), 2);
  const auto& fa = ops[2];
  // 4 * B*S * S * H: one S x S score GEMM and one S x H value GEMM, fused.
  CHECK(fa.fwd_flops == 4.0 * (2 * 2048.0) * 2048.0 * 8192.0);
  CHECK(fa.bwd_flops == kFlashBwdFactor * fa.fwd_flops);
  for (const auto& op : ops)
    if (is_gemm(op.kind)) CHECK(op.bwd_flops == 2.0 * op.fwd_flops);
}

TEST_CASE("mixture-of-experts graphs are rejected") {
  ModelConfig m = toy_model();
  m.moe_experts = 8;
  CHECK_THROWS_AS(build_operator_graph(m, 1), SpecError);
}

TEST_CASE("derived parameter count follows the closed form") {
  const ModelConfig m = toy_model();
  const double expect =
      m.num_layers * (12.0 * m.hidden_size * m.hidden_size + 13.0 * m.hidden_size) +
      2.0 * m.vocab_size * m.hidden_size;
  CHECK(derive_param_count(m) == expect);

  TrainingWorkload w;
  w.model = m;
  CHECK(w.params() == expect);
  w.model.param_count = 1e9;
  CHECK(w.params() == 1e9);
}

TEST_CASE("model state divides across the device grid and aligns up") {
  ModelConfig m = toy_model();
  m.param_count = 1e9;
  const Bytes total = model_state_bytes(m, 1, 1);
  CHECK(total == align_up(static_cast<Bytes>(16e9)));
  const Bytes split = model_state_bytes(m, 4, 2);
  CHECK(split % kAllocAlign == 0);
  CHECK(split >= total / 8);
  CHECK(split <= total / 8 + kAllocAlign);
}

TEST_CASE("boundary activation bytes shard by tp") {
  const ModelConfig m = toy_model();
  const Bytes raw = static_cast<Bytes>(m.seq_len) * m.hidden_size * kActElemBytes;
  CHECK(boundary_activation_bytes(m, 1, 1) == align_up(raw));
  CHECK(boundary_activation_bytes(m, 1, 4) ==
        align_up(ceil_div(raw, static_cast<Bytes>(4))));
}

TEST_CASE("stage checkpoint bytes scale with layers and live microbatches") {
  const auto ops = build_operator_graph(toy_model(), 1);
  const Bytes one = checkpoint_bytes_per_stage(ops, 1, 1, 1);
  Bytes expect = 0;
  for (const auto& op : ops) expect += ceil_div(op.checkpoint_bytes, static_cast<Bytes>(1));
  CHECK(one == expect);
  CHECK(checkpoint_bytes_per_stage(ops, 3, 1, 2) == 6 * one);

  // Sharding each operator rounds up, so the total never loses bytes.
  const Bytes sharded = checkpoint_bytes_per_stage(ops, 1, 8, 1);
  CHECK(sharded >= one / 8);
}

TEST_CASE("layer split gives the remainder to earlier stages") {
  CHECK(layers_in_stage(60, 8, 0) == 8);
  CHECK(layers_in_stage(60, 8, 3) == 8);
  CHECK(layers_in_stage(60, 8, 4) == 7);
  CHECK(layers_in_stage(60, 8, 7) == 7);
  int sum = 0;
  for (int s = 0; s < 7; ++s) sum += layers_in_stage(96, 7, s);
  CHECK(sum == 96);
  CHECK(layers_in_stage(4, 4, 2) == 1);
}

TEST_CASE("model presets carry the published shapes") {
  const auto names = model_preset_names();
  REQUIRE(names.size() == 3);
  for (const auto& n : names) CHECK_NOTHROW(model_preset(n));

  const auto llama30 = model_preset("llama2-30b");
  CHECK(llama30.num_layers == 60);
  CHECK(llama30.hidden_size == 6656);
  CHECK(llama30.num_heads == 52);
  CHECK(llama30.param_count == 30e9);

  const auto gpt = model_preset("gpt-175b");
  CHECK(gpt.num_layers == 96);
  CHECK(gpt.hidden_size == 12288);
  CHECK(gpt.num_heads == 96);
  CHECK(gpt.seq_len == 2048);
  CHECK(gpt.param_count == 175e9);

  CHECK_THROWS_AS(model_preset("bert-base"), SpecError);
}
