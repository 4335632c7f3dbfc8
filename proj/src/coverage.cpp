#include "moesim/coverage.hpp"

#include <algorithm>
#include <bitset>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

namespace moesim {

namespace {

constexpr std::uint32_t kMaxExperts = 1024;

void check_routing(std::uint32_t top_k, std::uint32_t num_experts) {
  if (top_k < 1 || top_k > num_experts)
    throw ValidationError("coverage: need 1 <= top_k <= num_experts");
}

// Floyd's algorithm: k distinct uniform experts with k draws.
template <typename Set>
void route_uniform(std::uint32_t top_k, std::uint32_t num_experts, Rng& rng, Set& chosen) {
  Set token;
  for (std::uint32_t j = num_experts - top_k; j < num_experts; ++j) {
    const auto t = static_cast<std::uint32_t>(rng.below(j + 1));
    if (token.test(t)) {
      token.set(j);
    } else {
      token.set(t);
    }
  }
  chosen |= token;
}

// Successive weighted sampling without replacement.
template <typename Set>
void route_weighted(std::uint32_t top_k, const std::vector<double>& weights, double total,
                    Rng& rng, Set& chosen) {
  Set token;
  double remaining = total;
  for (std::uint32_t pick = 0; pick < top_k; ++pick) {
    double u = rng.uniform() * remaining;
    std::size_t idx = weights.size();
    for (std::size_t e = 0; e < weights.size(); ++e) {
      if (token.test(e)) continue;
      idx = e;
      if (u < weights[e]) break;
      u -= weights[e];
    }
    token.set(idx);
    remaining -= weights[idx];
  }
  chosen |= token;
}

}  // namespace

EmpiricalTable measured_coverage_table() {
  return EmpiricalTable{{{1, 0.0625},
                         {2, 0.117},
                         {4, 0.213},
                         {8, 0.290},
                         {16, 0.445},
                         {32, 0.547},
                         {64, 0.694},
                         {128, 0.863},
                         {256, 0.934},
                         {512, 0.98}}};
}

void validate_table(const EmpiricalTable& table) {
  if (table.points.empty()) throw ValidationError("coverage table is empty");
  for (std::size_t i = 0; i < table.points.size(); ++i) {
    const auto& [b, c] = table.points[i];
    if (b < 1) throw ValidationError("coverage table batch sizes must be >= 1");
    if (!(c >= 0.0 && c <= 1.0)) throw ValidationError("coverage table fractions must be in [0,1]");
    if (i > 0) {
      if (b <= table.points[i - 1].first)
        throw ValidationError("coverage table batch sizes must be strictly increasing");
      if (c < table.points[i - 1].second)
        throw ValidationError("coverage table fractions must be nondecreasing");
    }
  }
}

void validate_coverage_model(const CoverageModel& model) {
  if (const auto* t = std::get_if<EmpiricalTable>(&model)) validate_table(*t);
  if (const auto* s = std::get_if<Sampled>(&model)) {
    if (!(s->skew_exponent >= 0.0 && std::isfinite(s->skew_exponent)))
      throw ValidationError("coverage.skew_exponent must be >= 0");
  }
}

double expected_coverage_uniform(std::uint64_t routed_tokens, std::uint32_t top_k,
                                 std::uint32_t num_experts) {
  check_routing(top_k, num_experts);
  if (routed_tokens == 0) return 0.0;
  const double miss = 1.0 - static_cast<double>(top_k) / static_cast<double>(num_experts);
  return 1.0 - std::pow(miss, static_cast<double>(routed_tokens));
}

double coverage_from_table(std::uint64_t routed_tokens, const EmpiricalTable& table) {
  validate_table(table);
  if (routed_tokens == 0) return 0.0;
  const auto& pts = table.points;
  if (routed_tokens <= pts.front().first) return pts.front().second;
  if (routed_tokens >= pts.back().first) return pts.back().second;
  const auto hi = std::lower_bound(pts.begin(), pts.end(), routed_tokens,
                                   [](const auto& p, std::uint64_t b) { return p.first < b; });
  if (hi->first == routed_tokens) return hi->second;
  const auto lo = std::prev(hi);
  const double t = (std::log(static_cast<double>(routed_tokens)) - std::log(double(lo->first))) /
                   (std::log(double(hi->first)) - std::log(double(lo->first)));
  return lo->second + t * (hi->second - lo->second);
}

ActivationResult sample_activation(std::uint64_t routed_tokens, std::uint32_t top_k,
                                   std::uint32_t num_experts, double skew_exponent, Rng& rng) {
  check_routing(top_k, num_experts);
  if (num_experts > kMaxExperts) throw ValidationError("coverage: at most 1024 experts supported");
  if (routed_tokens == 0) return {};

  std::bitset<kMaxExperts> chosen;
  if (skew_exponent == 0.0) {
    for (std::uint64_t t = 0; t < routed_tokens && chosen.count() < num_experts; ++t)
      route_uniform(top_k, num_experts, rng, chosen);
  } else {
    std::vector<double> weights(num_experts);
    double total = 0.0;
    for (std::uint32_t r = 0; r < num_experts; ++r) {
      weights[r] = std::pow(static_cast<double>(r + 1), -skew_exponent);
      total += weights[r];
    }
    for (std::uint64_t t = 0; t < routed_tokens && chosen.count() < num_experts; ++t)
      route_weighted(top_k, weights, total, rng, chosen);
  }

  ActivationResult out;
  out.experts_activated = static_cast<double>(chosen.count());
  out.coverage_fraction = out.experts_activated / static_cast<double>(num_experts);
  out.tokens_per_active_expert =
      static_cast<double>(routed_tokens) * static_cast<double>(top_k) / out.experts_activated;
  return out;
}

double mean_sampled_coverage(std::uint64_t routed_tokens, std::uint32_t top_k,
                             std::uint32_t num_experts, double skew_exponent,
                             std::uint64_t trials, std::uint64_t seed) {
  Rng rng(seed);
  double sum = 0.0;
  for (std::uint64_t i = 0; i < trials; ++i)
    sum += sample_activation(routed_tokens, top_k, num_experts, skew_exponent, rng)
               .coverage_fraction;
  return trials == 0 ? 0.0 : sum / static_cast<double>(trials);
}

double calibrate_skew(std::uint64_t routed_tokens, std::uint32_t top_k, std::uint32_t num_experts,
                      double target, std::uint64_t trials, std::uint64_t seed) {
  auto at = [&](double s) {
    return mean_sampled_coverage(routed_tokens, top_k, num_experts, s, trials, seed);
  };
  double lo = 0.0;
  if (at(lo) <= target) return lo;
  double hi = 1.0;
  while (at(hi) > target && hi < 64.0) hi *= 2.0;
  for (int i = 0; i < 40; ++i) {
    const double mid = 0.5 * (lo + hi);
    (at(mid) > target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

TableFit calibrate_skew_to_table(const EmpiricalTable& table, std::uint32_t top_k,
                                 std::uint32_t num_experts, std::uint64_t trials,
                                 std::uint64_t seed) {
  validate_table(table);
  auto worst = [&](double s) {
    double err = 0.0;
    for (const auto& [b, target] : table.points)
      err = std::max(err, std::abs(mean_sampled_coverage(b, top_k, num_experts, s, trials, seed) -
                                   target));
    return err;
  };
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double lo = 0.0, hi = 4.0;
  double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
  double f1 = worst(x1), f2 = worst(x2);
  for (int i = 0; i < 24; ++i) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - phi * (hi - lo);
      f1 = worst(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + phi * (hi - lo);
      f2 = worst(x2);
    }
  }
  const double best = 0.5 * (lo + hi);
  return {best, worst(best)};
}

double tokens_per_expert(std::uint64_t routed_tokens, std::uint32_t top_k,
                         std::uint32_t num_experts) {
  check_routing(top_k, num_experts);
  return static_cast<double>(routed_tokens) * static_cast<double>(top_k) /
         static_cast<double>(num_experts);
}

CoverageFunction::CoverageFunction(CoverageModel model, std::uint32_t top_k,
                                   std::uint32_t num_experts)
    : model_(std::move(model)), top_k_(top_k), num_experts_(num_experts), rng_(0) {
  check_routing(top_k, num_experts);
  validate_coverage_model(model_);
  if (const auto* s = std::get_if<Sampled>(&model_)) rng_ = Rng(s->seed);
}

double CoverageFunction::operator()(std::uint64_t routed_tokens) {
  return std::visit(
      [&](const auto& m) -> double {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, UniformAnalytic>) {
          return expected_coverage_uniform(routed_tokens, top_k_, num_experts_);
        } else if constexpr (std::is_same_v<T, EmpiricalTable>) {
          return coverage_from_table(routed_tokens, m);
        } else {
          return sample_activation(routed_tokens, top_k_, num_experts_, m.skew_exponent, rng_)
              .coverage_fraction;
        }
      },
      model_);
}

EmpiricalTable load_coverage_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open coverage table: " + path.string());
  EmpiricalTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1 && line == "batch_size,coverage_fraction") continue;
    const auto comma = line.find(',');
    std::uint64_t b = 0;
    double c = 0.0;
    const char* end = line.data() + line.size();
    const bool ok =
        comma != std::string::npos &&
        std::from_chars(line.data(), line.data() + comma, b).ptr == line.data() + comma &&
        std::from_chars(line.data() + comma + 1, end, c).ptr == end;
    if (!ok)
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": expected batch_size,coverage_fraction");
    table.points.emplace_back(b, c);
  }
  validate_table(table);
  return table;
}

}  // namespace moesim
