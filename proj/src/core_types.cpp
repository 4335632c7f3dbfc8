#include "moesim/core_types.hpp"

#include <cmath>

namespace moesim {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(what);
}

void require_positive(double v, const std::string& field) {
  require(std::isfinite(v) && v > 0.0, field + " must be > 0");
}

}  // namespace

const char* to_string(Phase phase) {
  switch (phase) {
    case Phase::Queued: return "queued";
    case Phase::Prefilling: return "prefilling";
    case Phase::Decoding: return "decoding";
    case Phase::Finished: return "finished";
  }
  return "?";
}

const char* to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::Chunked: return "chunked";
    case PolicyKind::Layered: return "layered";
    case PolicyKind::Hybrid: return "hybrid";
  }
  return "?";
}

PolicyKind parse_policy(const std::string& text) {
  if (text == "chunked") return PolicyKind::Chunked;
  if (text == "layered") return PolicyKind::Layered;
  if (text == "hybrid") return PolicyKind::Hybrid;
  throw ValidationError("scheduler.policy: unknown policy '" + text +
                        "' (expected chunked, layered or hybrid)");
}

const ModelSpec& validate_model(const ModelSpec& spec) {
  require(spec.num_layers >= 1, "num_layers must be >= 1");
  require(spec.num_experts >= 1, "num_experts must be >= 1");
  require(spec.top_k >= 1 && spec.top_k <= spec.num_experts,
          "top_k out of range: need 1 <= top_k <= num_experts");
  require_positive(spec.bytes_per_expert, "bytes_per_expert");
  require_positive(spec.dense_bytes_per_layer, "dense_bytes_per_layer");
  require_positive(spec.flops_per_token_per_expert, "flops_per_token_per_expert");
  require_positive(spec.attn_flops_per_token_per_ctx, "attn_flops_per_token_per_ctx");
  require_positive(spec.kv_bytes_per_token, "kv_bytes_per_token");
  require(spec.hidden_dim >= 1, "hidden_dim must be > 0");
  require(spec.dtype_bytes >= 1, "dtype_bytes must be > 0");
  require(std::isfinite(spec.head_bytes) && spec.head_bytes >= 0.0,
          "head_bytes must be >= 0");
  return spec;
}

const HardwareSpec& validate_hardware(const HardwareSpec& hw) {
  require_positive(hw.peak_flops, "peak_flops");
  require_positive(hw.peak_hbm_bw, "peak_hbm_bw");
  require_positive(hw.mfu, "mfu");
  require_positive(hw.mbu, "mbu");
  require(hw.mfu <= 1.0, "mfu must be <= 1");
  require(hw.mbu <= 1.0, "mbu must be <= 1");
  require_positive(hw.static_power_w, "static_power_w");
  require_positive(hw.energy_per_flop_j, "energy_per_flop_j");
  require_positive(hw.energy_per_hbm_byte_j, "energy_per_hbm_byte_j");
  require_positive(hw.kv_capacity_bytes, "kv_capacity_bytes");
  return hw;
}

const SloSpec& validate_slo(const SloSpec& slo) {
  require_positive(slo.ttft_slo_s, "ttft_slo_s");
  require_positive(slo.tbt_slo_s, "tbt_slo_s");
  return slo;
}

const SchedulerConfig& validate_scheduler(const SchedulerConfig& cfg) {
  require(cfg.chunk_size >= 1, "chunk_size must be >= 1");
  require(cfg.group_token_target >= 1, "group_token_target must be >= 1");
  return cfg;
}

double total_expert_bytes(const ModelSpec& spec) {
  return static_cast<double>(spec.num_layers) * static_cast<double>(spec.num_experts) *
         spec.bytes_per_expert;
}

}  // namespace moesim
