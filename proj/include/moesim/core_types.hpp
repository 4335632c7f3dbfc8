// Domain types shared by the cost model, schedulers and the simulation engine.

#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace moesim {

using RequestId = std::uint64_t;

/// Raised when a spec or config violates one of its invariants. The message
/// names the offending field.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Architecture parameters of a decoder-only MoE model. All byte and flop
/// quantities are at the configured dtype width.
struct ModelSpec {
  std::string name = "model";
  std::uint32_t num_layers = 0;
  std::uint32_t num_experts = 0;
  std::uint32_t top_k = 0;
  double bytes_per_expert = 0.0;            // one expert, one layer
  double dense_bytes_per_layer = 0.0;       // attention projections, router, norms
  double flops_per_token_per_expert = 0.0;  // one token through one expert FFN
  double attn_flops_per_token_per_ctx = 0.0;  // summed over all layers
  double kv_bytes_per_token = 0.0;          // summed over all layers
  std::uint32_t hidden_dim = 0;
  std::uint32_t dtype_bytes = 2;
  // Embedding/LM-head weights read once per iteration. Zero disables the term.
  double head_bytes = 0.0;
};

struct HardwareSpec {
  std::string name = "hardware";
  double peak_flops = 0.0;   // ops/s
  double peak_hbm_bw = 0.0;  // bytes/s
  double mfu = 0.6;
  double mbu = 0.8;
  double static_power_w = 0.0;
  double energy_per_flop_j = 0.0;
  double energy_per_hbm_byte_j = 0.0;
  double kv_capacity_bytes = 0.0;
};

struct SloSpec {
  double ttft_slo_s = 0.0;
  double tbt_slo_s = 0.0;
};

enum class Phase { Queued, Prefilling, Decoding, Finished };

const char* to_string(Phase phase);

/// One serving request and its lifecycle state.
///
/// `token_emit_times_s` holds the timestamps of decode-emitted tokens; the
/// first token (sampled at the end of prefill) is tracked separately in
/// `first_token_s`. A request is finished once `output_len` decode tokens have
/// been emitted.
struct Request {
  RequestId id = 0;
  double arrival_s = 0.0;
  std::uint32_t input_len = 0;
  std::uint32_t output_len = 0;

  Phase phase = Phase::Queued;
  // Tokens that have traversed every layer.
  std::uint32_t prefilled_tokens = 0;
  // (token x layer) pairs processed so far; reaches input_len * num_layers.
  std::uint64_t prefilled_token_layers = 0;
  std::optional<double> admitted_s;
  std::optional<double> first_token_s;
  std::vector<double> token_emit_times_s;

  std::uint32_t tokens_emitted() const {
    return static_cast<std::uint32_t>(token_emit_times_s.size());
  }
  bool finished() const { return phase == Phase::Finished; }
};

enum class PolicyKind { Chunked, Layered, Hybrid };

const char* to_string(PolicyKind kind);
PolicyKind parse_policy(const std::string& text);

/// Scheduling policy. Chunked ignores `group_token_target`; layered ignores
/// `chunk_size`.
struct SchedulerConfig {
  PolicyKind policy = PolicyKind::Chunked;
  std::uint32_t chunk_size = 512;
  std::uint32_t group_token_target = 512;
};

const ModelSpec& validate_model(const ModelSpec& spec);
const HardwareSpec& validate_hardware(const HardwareSpec& hw);
const SloSpec& validate_slo(const SloSpec& slo);
const SchedulerConfig& validate_scheduler(const SchedulerConfig& cfg);

/// num_layers x num_experts x bytes_per_expert.
double total_expert_bytes(const ModelSpec& spec);

}  // namespace moesim
