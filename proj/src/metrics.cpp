#include "moesim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace moesim {

double ttft(const Request& request) {
  if (!request.first_token_s)
    throw std::invalid_argument("ttft: request " + std::to_string(request.id) +
                                " has not produced its first token");
  return *request.first_token_s - request.arrival_s;
}

std::vector<double> tbt_samples(const Request& request) {
  std::vector<double> out;
  if (!request.first_token_s) return out;
  double prev = *request.first_token_s;
  out.reserve(request.token_emit_times_s.size());
  for (const double t : request.token_emit_times_s) {
    out.push_back(t - prev);
    prev = t;
  }
  return out;
}

double percentile(std::span<const double> samples, double p) {
  if (samples.empty()) throw std::invalid_argument("percentile of an empty sample set");
  if (!(p > 0.0 && p <= 100.0)) throw std::invalid_argument("percentile: p must be in (0, 100]");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * n));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

SloAttainment slo_attainment(std::span<const Request> requests, const SloSpec& slo) {
  SloAttainment out;
  if (requests.empty()) {
    out.vacuous = true;
    return out;
  }
  std::size_t ok_all = 0, ok_ttft = 0, ok_tbt = 0;
  for (const auto& r : requests) {
    const bool ttft_ok = r.first_token_s && ttft(r) <= slo.ttft_slo_s;
    const auto gaps = tbt_samples(r);
    const bool tbt_ok =
        std::all_of(gaps.begin(), gaps.end(), [&](double g) { return g <= slo.tbt_slo_s; });
    ok_ttft += ttft_ok;
    ok_tbt += tbt_ok;
    ok_all += ttft_ok && tbt_ok;
  }
  const auto n = static_cast<double>(requests.size());
  out.overall = static_cast<double>(ok_all) / n;
  out.ttft = static_cast<double>(ok_ttft) / n;
  out.tbt = static_cast<double>(ok_tbt) / n;
  return out;
}

double energy_per_token(double total_energy_j, std::span<const Request> requests) {
  std::uint64_t tokens = 0;
  for (const auto& r : requests) tokens += std::uint64_t{r.input_len} + r.tokens_emitted();
  if (tokens == 0) throw std::invalid_argument("energy_per_token: no tokens");
  return total_energy_j / static_cast<double>(tokens);
}

double expert_load_total(std::span<const IterationRecord> records) {
  double total = 0.0;
  for (const auto& r : records) total += r.expert_load_bytes;
  return total;
}

std::vector<TimelinePoint> token_timeline(std::span<const Request> requests, double bucket_s) {
  if (!(bucket_s > 0.0)) throw std::invalid_argument("token_timeline: bucket_s must be > 0");
  std::vector<double> times;
  for (const auto& r : requests)
    times.insert(times.end(), r.token_emit_times_s.begin(), r.token_emit_times_s.end());
  std::sort(times.begin(), times.end());
  const double last = times.empty() ? 0.0 : times.back();
  const auto buckets = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(last / bucket_s)));
  std::vector<TimelinePoint> out(buckets);
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < buckets; ++i) {
    // The last bucket always closes at the final emission.
    const double end = i + 1 == buckets ? std::max(last, bucket_s * double(i + 1))
                                        : bucket_s * double(i + 1);
    while (cursor < times.size() && times[cursor] <= end) ++cursor;
    out[i] = {end, cursor};
  }
  return out;
}

RunSummary summarize(const RunResult& result, const SloSpec& slo) {
  RunSummary s;
  s.num_requests = result.requests.size();
  s.num_iterations = result.iterations.size();
  s.makespan_s = result.end_s;

  std::vector<double> ttfts, tbts;
  double e2e = 0.0;
  std::size_t completed = 0;
  for (const auto& r : result.requests) {
    if (r.first_token_s) ttfts.push_back(ttft(r));
    const auto gaps = tbt_samples(r);
    tbts.insert(tbts.end(), gaps.begin(), gaps.end());
    if (r.finished() && !r.token_emit_times_s.empty()) {
      e2e += r.token_emit_times_s.back() - r.arrival_s;
      ++completed;
    }
  }
  auto mean = [](const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
  };
  s.ttft_mean_s = mean(ttfts);
  s.ttft_p99_s = ttfts.empty() ? 0.0 : percentile(ttfts, 99.0);
  s.tbt_mean_s = mean(tbts);
  s.tbt_p99_s = tbts.empty() ? 0.0 : percentile(tbts, 99.0);
  s.e2e_latency_mean_s = completed == 0 ? 0.0 : e2e / double(completed);

  const auto att = slo_attainment(result.requests, slo);
  s.slo_attainment_fraction = att.overall;
  s.ttft_attainment_fraction = att.ttft;
  s.tbt_attainment_fraction = att.tbt;

  s.total_expert_load_bytes = expert_load_total(result.iterations);
  s.expert_load_per_request_bytes =
      s.num_requests == 0 ? 0.0 : s.total_expert_load_bytes / double(s.num_requests);
  double decode_sum = 0.0;
  for (const auto& rec : result.iterations) {
    s.total_hbm_bytes += rec.total_hbm_bytes;
    decode_sum += static_cast<double>(rec.decode_batch_size);
  }
  s.mean_decode_batch = s.num_iterations == 0 ? 0.0 : decode_sum / double(s.num_iterations);

  s.energy_total_j = result.energy.total_j;
  s.energy_static_j = result.energy.static_j;
  s.energy_compute_j = result.energy.compute_j;
  s.energy_memory_j = result.energy.memory_j;
  s.energy_per_token_j =
      result.requests.empty() ? 0.0 : energy_per_token(result.energy.total_j, result.requests);
  return s;
}

}  // namespace moesim
