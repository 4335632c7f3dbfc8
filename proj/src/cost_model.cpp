#include "moesim/cost_model.hpp"

#include <algorithm>
#include <map>

namespace moesim {

const char* to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::AttentionPrefill: return "attention_prefill";
    case KernelKind::AttentionDecode: return "attention_decode";
    case KernelKind::DenseProj: return "dense";
    case KernelKind::MoEFFN: return "moe";
    case KernelKind::Other: return "other";
  }
  return "?";
}

double ridge_point(const HardwareSpec& hw) { return hw.peak_flops / hw.peak_hbm_bw; }

KernelCost moe_cost(const ModelSpec& model, std::uint64_t routed_tokens, double coverage,
                    std::uint32_t layers_in_scope) {
  if (!(coverage >= 0.0 && coverage <= 1.0)) throw ValidationError("moe_cost: coverage out of [0,1]");
  if (layers_in_scope < 1 || layers_in_scope > model.num_layers)
    throw ValidationError("moe_cost: layers_in_scope out of range");
  const double layers = layers_in_scope;
  const double tokens = static_cast<double>(routed_tokens);
  KernelCost k;
  k.kind = KernelKind::MoEFFN;
  k.expert_bytes = coverage * model.num_experts * model.bytes_per_expert * layers;
  const double activations = tokens * model.hidden_dim * model.dtype_bytes * 2.0 * layers;
  k.hbm_bytes = k.expert_bytes + activations;
  k.flops = tokens * model.top_k * model.flops_per_token_per_expert * layers;
  return k;
}

KernelCost prefill_attention_cost(const ModelSpec& model, std::uint64_t new_tokens,
                                  std::uint64_t context_len, std::uint32_t layers_in_scope) {
  const double frac = static_cast<double>(layers_in_scope) / model.num_layers;
  const double n = static_cast<double>(new_tokens);
  const double ctx = static_cast<double>(context_len);
  KernelCost k;
  k.kind = KernelKind::AttentionPrefill;
  if (new_tokens == 0) return k;
  // Causal attention: token i of the slice sees ctx + i positions.
  k.flops = model.attn_flops_per_token_per_ctx * n * (ctx + n / 2.0) * frac;
  k.hbm_bytes = (n + ctx) * model.kv_bytes_per_token * frac;
  return k;
}

KernelCost decode_attention_cost(const ModelSpec& model, std::uint64_t batch,
                                 std::uint64_t kv_tokens) {
  KernelCost k;
  k.kind = KernelKind::AttentionDecode;
  const double kv = static_cast<double>(kv_tokens);
  k.flops = model.attn_flops_per_token_per_ctx * kv;
  k.hbm_bytes = (kv + static_cast<double>(batch)) * model.kv_bytes_per_token;
  return k;
}

KernelCost dense_cost(const ModelSpec& model, std::uint64_t tokens, std::uint32_t layers_in_scope) {
  const double layers = layers_in_scope;
  KernelCost k;
  k.kind = KernelKind::DenseProj;
  k.hbm_bytes = model.dense_bytes_per_layer * layers;
  // Two ops (multiply, add) per weight per token.
  k.flops = static_cast<double>(tokens) * layers * 2.0 * model.dense_bytes_per_layer /
            model.dtype_bytes;
  return k;
}

KernelCost head_cost(const ModelSpec& model, std::uint64_t tokens) {
  KernelCost k;
  k.kind = KernelKind::Other;
  k.hbm_bytes = model.head_bytes;
  k.flops = static_cast<double>(tokens) * 2.0 * model.head_bytes / model.dtype_bytes;
  return k;
}

double kernel_time(const KernelCost& kernel, const HardwareSpec& hw) {
  const double compute = kernel.flops / (hw.peak_flops * hw.mfu);
  const double memory = kernel.hbm_bytes / (hw.peak_hbm_bw * hw.mbu);
  return std::max(compute, memory);
}

double iteration_runtime(const std::vector<KernelCost>& kernels, const HardwareSpec& hw) {
  double t = 0.0;
  for (const auto& k : kernels) t += kernel_time(k, hw);
  return t;
}

EnergyBreakdown iteration_energy(const std::vector<KernelCost>& kernels, double runtime_s,
                                 const HardwareSpec& hw) {
  double flops = 0.0, bytes = 0.0;
  for (const auto& k : kernels) {
    flops += k.flops;
    bytes += k.hbm_bytes;
  }
  EnergyBreakdown e;
  e.static_j = hw.static_power_w * runtime_s;
  e.compute_j = flops * hw.energy_per_flop_j;
  e.memory_j = bytes * hw.energy_per_hbm_byte_j;
  e.total_j = e.static_j + e.compute_j + e.memory_j;
  return e;
}

IterationCost cost_iteration(const ModelSpec& model, const HardwareSpec& hw,
                             const BatchWork& work, CoverageFunction& coverage) {
  IterationCost out;
  if (work.decode_batch > 0)
    out.kernels.push_back(decode_attention_cost(model, work.decode_batch, work.decode_kv_tokens));

  // Difference array of routed tokens per layer.
  std::vector<std::int64_t> delta(model.num_layers + 1, 0);
  KernelCost prefill_attn{KernelKind::AttentionPrefill};
  for (const auto& s : work.prefill) {
    if (s.first_layer >= s.last_layer || s.last_layer > model.num_layers)
      throw ValidationError("prefill slice has an invalid layer range");
    const auto a =
        prefill_attention_cost(model, s.new_tokens, s.context_len, s.last_layer - s.first_layer);
    prefill_attn.flops += a.flops;
    prefill_attn.hbm_bytes += a.hbm_bytes;
    delta[s.first_layer] += static_cast<std::int64_t>(s.new_tokens);
    delta[s.last_layer] -= static_cast<std::int64_t>(s.new_tokens);
  }
  if (!work.prefill.empty()) out.kernels.push_back(prefill_attn);

  std::map<std::uint64_t, std::uint32_t> layers_by_tokens;
  std::int64_t running = 0;
  for (std::uint32_t l = 0; l < model.num_layers; ++l) {
    running += delta[l];
    const auto tokens = work.decode_batch + static_cast<std::uint64_t>(running);
    if (tokens > 0) ++layers_by_tokens[tokens];
  }
  for (const auto& [tokens, layers] : layers_by_tokens) {
    out.kernels.push_back(dense_cost(model, tokens, layers));
    out.kernels.push_back(moe_cost(model, tokens, coverage(tokens), layers));
  }

  const auto logits_tokens = work.decode_batch + work.completing_prefills;
  if (model.head_bytes > 0.0 && logits_tokens > 0)
    out.kernels.push_back(head_cost(model, logits_tokens));

  for (const auto& k : out.kernels) {
    out.expert_load_bytes += k.expert_bytes;
    out.total_hbm_bytes += k.hbm_bytes;
    out.total_flops += k.flops;
  }
  out.runtime_s = iteration_runtime(out.kernels, hw);
  out.energy = iteration_energy(out.kernels, out.runtime_s, hw);
  return out;
}

ChunkProfile chunk_prefill_profile(const ModelSpec& model, const HardwareSpec& hw,
                                   std::uint64_t input_len, std::uint64_t chunk_size,
                                   CoverageFunction& coverage) {
  if (input_len == 0 || chunk_size == 0)
    throw ValidationError("chunk_prefill_profile: input_len and chunk_size must be >= 1");
  ChunkProfile p;
  p.chunk_size = chunk_size;
  for (std::uint64_t done = 0; done < input_len;) {
    const std::uint64_t n = std::min(chunk_size, input_len - done);
    BatchWork work;
    work.prefill.push_back({n, done, 0, model.num_layers});
    done += n;
    work.completing_prefills = done == input_len ? 1 : 0;
    const IterationCost cost = cost_iteration(model, hw, work, coverage);
    ++p.num_chunks;
    p.expert_load_bytes += cost.expert_load_bytes;
    p.total_hbm_bytes += cost.total_hbm_bytes;
    p.runtime_s += cost.runtime_s;
    for (const auto& k : cost.kernels)
      p.kernel_runtime_s[static_cast<int>(k.kind)] += kernel_time(k, hw);
  }
  return p;
}

}  // namespace moesim
