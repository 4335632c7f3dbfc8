#include <gtest/gtest.h>

#include <random>

#include "moesim/cost_model.hpp"
#include "moesim/run_config.hpp"
#include "test_support.hpp"

using namespace moesim;

TEST(Roofline, RidgePoint) {
  HardwareSpec h = fx::toy_hardware();
  h.peak_flops = 1.979e15;
  h.peak_hbm_bw = 6.7e12;
  EXPECT_NEAR(ridge_point(h), 295.373, 1e-3);
}

TEST(Roofline, MoeCostHandComputed) {
  const ModelSpec m = fx::toy_model(8);
  const KernelCost k = moe_cost(m, 4, 0.5, 8);
  EXPECT_EQ(k.kind, KernelKind::MoEFFN);
  EXPECT_DOUBLE_EQ(k.expert_bytes, 0.5 * 16 * 1000 * 8);
  EXPECT_DOUBLE_EQ(k.hbm_bytes, 64000.0 + 4 * 4 * 2 * 2 * 8);
  EXPECT_DOUBLE_EQ(k.flops, 4 * 2 * 100.0 * 8);
  const HardwareSpec h = fx::toy_hardware();
  // memory: 64512 / (1e6 * 0.5); compute: 6400 / (1e6 * 0.5)
  EXPECT_DOUBLE_EQ(kernel_time(k, h), 64512.0 / 5e5);
  EXPECT_THROW(moe_cost(m, 4, 1.5, 8), ValidationError);
  EXPECT_THROW(moe_cost(m, 4, 0.5, 9), ValidationError);
}

TEST(Roofline, ComputeBoundKernel) {
  const HardwareSpec h = fx::toy_hardware();
  const KernelCost k{KernelKind::Other, 1.0e6, 10.0, 0.0};
  EXPECT_DOUBLE_EQ(kernel_time(k, h), 1.0e6 / 5e5);
}

TEST(Roofline, AttentionAndDense) {
  const ModelSpec m = fx::toy_model(8);
  // 4 new tokens after 6 cached, half the layers: 10 * 4 * (6 + 2) * 0.5
  const KernelCost a = prefill_attention_cost(m, 4, 6, 4);
  EXPECT_DOUBLE_EQ(a.flops, 160.0);
  EXPECT_DOUBLE_EQ(a.hbm_bytes, 10 * 80.0 * 0.5);
  const KernelCost d = decode_attention_cost(m, 3, 30);
  EXPECT_DOUBLE_EQ(d.flops, 300.0);
  EXPECT_DOUBLE_EQ(d.hbm_bytes, 33 * 80.0);
  const KernelCost p = dense_cost(m, 5, 2);
  EXPECT_DOUBLE_EQ(p.hbm_bytes, 1000.0);
  EXPECT_DOUBLE_EQ(p.flops, 5 * 2 * 2.0 * 500 / 2);
}

TEST(CostIteration, GroupsLayersByRoutedTokens) {
  const ModelSpec m = fx::toy_model(8);
  const HardwareSpec h = fx::toy_hardware();
  CoverageFunction cov(UniformAnalytic{}, m.top_k, m.num_experts);
  BatchWork w;
  w.decode_batch = 2;
  w.decode_kv_tokens = 10;
  w.prefill.push_back({4, 0, 0, 4});  // layers 0..3 see 6 tokens, 4..7 see 2
  const IterationCost c = cost_iteration(m, h, w, cov);

  double expert = 0.0;
  for (const auto& [tokens, layers] : {std::pair{2u, 4u}, std::pair{6u, 4u}})
    expert += moe_cost(m, tokens, expected_coverage_uniform(tokens, 2, 16), layers).expert_bytes;
  EXPECT_DOUBLE_EQ(c.expert_load_bytes, expert);

  int moe = 0, dense = 0;
  for (const auto& k : c.kernels) {
    moe += k.kind == KernelKind::MoEFFN;
    dense += k.kind == KernelKind::DenseProj;
  }
  EXPECT_EQ(moe, 2);
  EXPECT_EQ(dense, 2);
  EXPECT_DOUBLE_EQ(c.runtime_s, iteration_runtime(c.kernels, h));
}

TEST(CostIteration, HeadOnlyForLogitTokens) {
  ModelSpec m = fx::toy_model(4);
  m.head_bytes = 4000.0;
  const HardwareSpec h = fx::toy_hardware();
  CoverageFunction cov(UniformAnalytic{}, m.top_k, m.num_experts);
  BatchWork w;
  w.prefill.push_back({8, 0, 0, 4});
  const auto mid = cost_iteration(m, h, w, cov);
  w.completing_prefills = 1;
  const auto last = cost_iteration(m, h, w, cov);
  EXPECT_DOUBLE_EQ(last.total_hbm_bytes - mid.total_hbm_bytes, 4000.0);
}

TEST(Energy, ComponentsSumBitExactly) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, 1e12);
  const HardwareSpec h = fx::toy_hardware();
  for (int i = 0; i < 5000; ++i) {
    std::vector<KernelCost> ks = {{KernelKind::MoEFFN, u(gen), u(gen), 0.0},
                                  {KernelKind::DenseProj, u(gen), u(gen), 0.0}};
    const double t = iteration_runtime(ks, h);
    const EnergyBreakdown e = iteration_energy(ks, t, h);
    ASSERT_EQ(e.total_j, e.static_j + e.compute_j + e.memory_j);
    ASSERT_EQ(e.static_j, h.static_power_w * t);
  }
}

class ChunkBenchFixture : public ::testing::Test {
 protected:
  ModelSpec model = load_model_spec(fx::config_path("qwen30b.toml"));
  HardwareSpec hw = load_hardware_spec(fx::config_path("h100x2.toml"));

  ChunkProfile profile(std::uint64_t chunk) {
    CoverageFunction cov(measured_coverage_table(), model.top_k, model.num_experts);
    return chunk_prefill_profile(model, hw, 8192, chunk, cov);
  }
};

TEST_F(ChunkBenchFixture, SinglePassLoadsCoverageTimesAllExperts) {
  const double total = total_expert_bytes(model);
  for (const std::uint64_t c : {8192u, 10000u}) {
    const ChunkProfile p = profile(c);
    EXPECT_EQ(p.num_chunks, 1u);
    EXPECT_DOUBLE_EQ(p.expert_load_bytes, 0.98 * total);
  }
}

TEST_F(ChunkBenchFixture, LoadRoughlyInverseInChunkSize) {
  const ChunkProfile p512 = profile(512), p4096 = profile(4096), p8192 = profile(8192);
  EXPECT_GT(p512.expert_load_bytes, p4096.expert_load_bytes);
  EXPECT_GT(p4096.expert_load_bytes, p8192.expert_load_bytes);
  // Every chunk of >= 512 tokens sees the same clamped coverage.
  EXPECT_NEAR(p512.expert_load_bytes / p8192.expert_load_bytes, 16.0, 1e-9);
  EXPECT_NEAR(p4096.expert_load_bytes / p8192.expert_load_bytes, 2.0, 1e-9);
}

TEST_F(ChunkBenchFixture, ChunkOfOneIsMaximal) {
  const ChunkProfile p1 = profile(1);
  EXPECT_EQ(p1.num_chunks, 8192u);
  for (const std::uint64_t c : {2u, 64u, 512u, 8192u})
    EXPECT_GT(p1.expert_load_bytes, profile(c).expert_load_bytes);
}
