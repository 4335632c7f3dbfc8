// Aggregation of iteration and request records into latency, SLO, traffic
// and energy statistics.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "moesim/core_types.hpp"
#include "moesim/engine.hpp"

namespace moesim {

/// first_token_s - arrival_s. Throws std::invalid_argument before the first token.
double ttft(const Request& request);

/// Gaps between consecutive tokens, starting with first token -> first decode
/// token. Empty when only the first token exists.
std::vector<double> tbt_samples(const Request& request);

/// Nearest-rank percentile: sorted[ceil(p/100 * n) - 1], p in (0, 100].
double percentile(std::span<const double> samples, double p);

struct SloAttainment {
  double overall = 1.0;
  double ttft = 1.0;
  double tbt = 1.0;
  bool vacuous = false;  // no requests; every fraction reported as 1.0
};

/// A request attains the SLO iff TTFT <= ttft_slo and every TBT sample <= tbt_slo.
SloAttainment slo_attainment(std::span<const Request> requests, const SloSpec& slo);

/// Total energy over the sum of prompt and emitted tokens.
double energy_per_token(double total_energy_j, std::span<const Request> requests);

double expert_load_total(std::span<const IterationRecord> records);

struct TimelinePoint {
  double time_s = 0.0;                // bucket end
  std::uint64_t cumulative_tokens = 0;  // tokens emitted at or before time_s
};

/// Cumulative emitted tokens sampled at every `bucket_s` up to the last emission.
std::vector<TimelinePoint> token_timeline(std::span<const Request> requests, double bucket_s);

struct RunSummary {
  std::uint64_t num_requests = 0;
  std::uint64_t num_iterations = 0;
  double makespan_s = 0.0;
  double ttft_mean_s = 0.0;
  double ttft_p99_s = 0.0;
  double tbt_mean_s = 0.0;
  double tbt_p99_s = 0.0;
  double e2e_latency_mean_s = 0.0;
  double slo_attainment_fraction = 1.0;
  double ttft_attainment_fraction = 1.0;
  double tbt_attainment_fraction = 1.0;
  double total_expert_load_bytes = 0.0;
  double expert_load_per_request_bytes = 0.0;
  double total_hbm_bytes = 0.0;
  double energy_total_j = 0.0;
  double energy_static_j = 0.0;
  double energy_compute_j = 0.0;
  double energy_memory_j = 0.0;
  double energy_per_token_j = 0.0;
  double mean_decode_batch = 0.0;
};

RunSummary summarize(const RunResult& result, const SloSpec& slo);

}  // namespace moesim
