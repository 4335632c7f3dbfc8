// Expert activation models: the fraction of an MoE layer's experts touched by
// a batch of routed tokens, and how many tokens each activated expert sees.

#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <variant>
#include <vector>

#include "moesim/workload.hpp"

namespace moesim {

struct UniformAnalytic {};

/// Measured (batch size -> coverage fraction) curve. Batch sizes strictly
/// increasing, coverage nondecreasing and within [0, 1].
struct EmpiricalTable {
  std::vector<std::pair<std::uint64_t, double>> points;
};

/// Monte Carlo routing with expert popularity proportional to
/// (rank + 1)^-skew_exponent. Skew 0 is uniform routing.
struct Sampled {
  double skew_exponent = 0.0;
  std::uint64_t seed = 0;
};

using CoverageModel = std::variant<UniformAnalytic, EmpiricalTable, Sampled>;

struct ActivationResult {
  double coverage_fraction = 0.0;
  double experts_activated = 0.0;
  double tokens_per_active_expert = 0.0;
};

/// Coverage measured on a Qwen-class model (128 experts, top-8) serving
/// ShareGPT-shaped traffic; the last entry stands for ">= 512".
EmpiricalTable measured_coverage_table();

void validate_table(const EmpiricalTable& table);
void validate_coverage_model(const CoverageModel& model);

/// 1 - (1 - k/E)^B under independent uniform top-k routing.
double expected_coverage_uniform(std::uint64_t routed_tokens, std::uint32_t top_k,
                                 std::uint32_t num_experts);

/// Exact at tabulated batch sizes, log-linear in B between entries, clamped
/// to the end points outside the table. Zero tokens activate nothing.
double coverage_from_table(std::uint64_t routed_tokens, const EmpiricalTable& table);

/// One routing draw: each of `routed_tokens` tokens picks `top_k` distinct
/// experts. Returns the union size over E and B*k over the union size.
ActivationResult sample_activation(std::uint64_t routed_tokens, std::uint32_t top_k,
                                   std::uint32_t num_experts, double skew_exponent, Rng& rng);

/// Mean coverage of `trials` independent draws.
double mean_sampled_coverage(std::uint64_t routed_tokens, std::uint32_t top_k,
                             std::uint32_t num_experts, double skew_exponent,
                             std::uint64_t trials, std::uint64_t seed);

/// Skew exponent whose sampled mean coverage at `routed_tokens` matches
/// `target`, found by bisection with common random numbers.
double calibrate_skew(std::uint64_t routed_tokens, std::uint32_t top_k, std::uint32_t num_experts,
                      double target, std::uint64_t trials, std::uint64_t seed);

struct TableFit {
  double skew_exponent = 0.0;
  double max_abs_error = 0.0;  // worst |sampled - table| over the table entries
};

/// Skew exponent minimizing the worst-case gap between the sampled mean
/// coverage and every table entry (golden-section search on [0, 4]).
TableFit calibrate_skew_to_table(const EmpiricalTable& table, std::uint32_t top_k,
                                 std::uint32_t num_experts, std::uint64_t trials,
                                 std::uint64_t seed);

/// B * k / E.
double tokens_per_expert(std::uint64_t routed_tokens, std::uint32_t top_k,
                         std::uint32_t num_experts);

/// Stateful evaluator used by the engine; holds the RNG for the sampled model.
class CoverageFunction {
 public:
  CoverageFunction(CoverageModel model, std::uint32_t top_k, std::uint32_t num_experts);

  double operator()(std::uint64_t routed_tokens);
  const CoverageModel& model() const { return model_; }

 private:
  CoverageModel model_;
  std::uint32_t top_k_;
  std::uint32_t num_experts_;
  Rng rng_;
};

/// `batch_size,coverage_fraction` CSV with a header line.
EmpiricalTable load_coverage_table(const std::filesystem::path& path);

}  // namespace moesim
