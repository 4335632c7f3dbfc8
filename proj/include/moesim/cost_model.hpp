// Roofline cost model: per-kernel flops and off-chip bytes, iteration runtime
// as the sum of per-kernel roofline times, and the static/compute/memory
// energy split.

#pragma once

#include <cstdint>
#include <vector>

#include "moesim/core_types.hpp"
#include "moesim/coverage.hpp"

namespace moesim {

enum class KernelKind { AttentionPrefill, AttentionDecode, DenseProj, MoEFFN, Other };

const char* to_string(KernelKind kind);

struct KernelCost {
  KernelKind kind = KernelKind::Other;
  double flops = 0.0;
  double hbm_bytes = 0.0;
  // Portion of hbm_bytes that is expert weights (MoE kernels only).
  double expert_bytes = 0.0;
};

struct EnergyBreakdown {
  double static_j = 0.0;
  double compute_j = 0.0;
  double memory_j = 0.0;
  double total_j = 0.0;  // static_j + compute_j + memory_j, in that order

  bool operator==(const EnergyBreakdown&) const = default;
};

struct IterationCost {
  std::vector<KernelCost> kernels;
  double runtime_s = 0.0;
  EnergyBreakdown energy;
  double expert_load_bytes = 0.0;
  double total_hbm_bytes = 0.0;
  double total_flops = 0.0;
};

/// peak_flops / peak_hbm_bw, in ops per byte.
double ridge_point(const HardwareSpec& hw);

KernelCost moe_cost(const ModelSpec& model, std::uint64_t routed_tokens, double coverage,
                    std::uint32_t layers_in_scope);

/// Prefill of `new_tokens` on top of `context_len` already-cached tokens,
/// restricted to `layers_in_scope` layers. Reads the cached prefix KV and
/// writes the new tokens' KV.
KernelCost prefill_attention_cost(const ModelSpec& model, std::uint64_t new_tokens,
                                  std::uint64_t context_len, std::uint32_t layers_in_scope);

/// One decode token for each of `batch` requests whose resident KV totals
/// `kv_tokens` tokens. Covers every layer.
KernelCost decode_attention_cost(const ModelSpec& model, std::uint64_t batch,
                                 std::uint64_t kv_tokens);

/// Non-expert projections: weights read once per layer in scope, flops linear
/// in tokens.
KernelCost dense_cost(const ModelSpec& model, std::uint64_t tokens, std::uint32_t layers_in_scope);

/// Embedding/LM head, applied to the tokens that produce logits this iteration.
KernelCost head_cost(const ModelSpec& model, std::uint64_t tokens);

double kernel_time(const KernelCost& kernel, const HardwareSpec& hw);
double iteration_runtime(const std::vector<KernelCost>& kernels, const HardwareSpec& hw);
EnergyBreakdown iteration_energy(const std::vector<KernelCost>& kernels, double runtime_s,
                                 const HardwareSpec& hw);

/// Prefill work on a contiguous layer range [first_layer, last_layer).
struct PrefillSlice {
  std::uint64_t new_tokens = 0;
  std::uint64_t context_len = 0;
  std::uint32_t first_layer = 0;
  std::uint32_t last_layer = 0;
};

/// Everything one iteration executes, in cost-model terms.
struct BatchWork {
  std::uint64_t decode_batch = 0;
  std::uint64_t decode_kv_tokens = 0;
  std::vector<PrefillSlice> prefill;
  // Requests whose prefill completes this iteration (they produce logits).
  std::uint64_t completing_prefills = 0;
};

/// Builds the kernel list for one iteration and prices it. MoE and dense
/// kernels are formed per run of layers that see the same routed-token count,
/// with coverage evaluated on that count.
IterationCost cost_iteration(const ModelSpec& model, const HardwareSpec& hw,
                             const BatchWork& work, CoverageFunction& coverage);

/// Prefill of one `input_len` prompt alone, cut into chunks of `chunk_size`
/// tokens that each traverse every layer.
struct ChunkProfile {
  std::uint64_t chunk_size = 0;
  std::uint64_t num_chunks = 0;
  double expert_load_bytes = 0.0;
  double total_hbm_bytes = 0.0;
  double runtime_s = 0.0;
  // Summed roofline time per KernelKind, indexed by the enum value.
  double kernel_runtime_s[5] = {};
};

ChunkProfile chunk_prefill_profile(const ModelSpec& model, const HardwareSpec& hw,
                                   std::uint64_t input_len, std::uint64_t chunk_size,
                                   CoverageFunction& coverage);

}  // namespace moesim
