// Request stream generation (Poisson arrivals, dataset-shaped lengths) and
// the CSV trace format used to replay fixed request sets.

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "moesim/core_types.hpp"

namespace moesim {

inline constexpr std::uint32_t kMaxInputLen = 131072;
inline constexpr std::uint32_t kMaxOutputLen = 8192;

struct FixedLengths {
  std::uint32_t input = 1;
  std::uint32_t output = 1;
};

/// Two-parameter lognormal per axis, fitted to (mean, std) by moment matching.
struct LogNormalLengths {
  double in_mean = 0.0;
  double in_std = 0.0;
  double out_mean = 0.0;
  double out_std = 0.0;
};

struct EmpiricalLengths {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
};

using LengthDistribution = std::variant<FixedLengths, LogNormalLengths, EmpiricalLengths>;

struct WorkloadConfig {
  double request_rate_rps = 1.0;
  std::optional<double> duration_s;
  std::optional<std::uint64_t> num_requests;
  LengthDistribution lengths = FixedLengths{};
  std::uint64_t seed = 0;
};

void validate_lengths(const LengthDistribution& dist);
void validate_workload(const WorkloadConfig& cfg);

/// Portable uniform/normal draws on top of mt19937_64 so that streams do not
/// depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  /// Uniform in (0, 1].
  double uniform_open_low() { return 1.0 - uniform(); }
  double exponential(double rate) { return -std::log(uniform_open_low()) / rate; }
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_normal_;
};

/// (mu, sigma) of the underlying normal such that the lognormal has the
/// given mean and standard deviation.
std::pair<double, double> lognormal_params(double mean, double std_dev);
/// p-quantile implied by the moment-matched lognormal.
double lognormal_quantile(double mean, double std_dev, double p);

std::vector<double> generate_arrivals(const WorkloadConfig& cfg);

std::vector<std::pair<std::uint32_t, std::uint32_t>> sample_lengths(
    const LengthDistribution& dist, std::size_t n, std::uint64_t seed);

/// Arrivals and lengths combined into requests with ids 0..n-1.
std::vector<Request> generate_requests(const WorkloadConfig& cfg);

class TraceParseError : public std::runtime_error {
 public:
  TraceParseError(const std::string& path, std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Reads `id,arrival_s,input_len,output_len` rows (header line required when
/// the file is non-empty).
std::vector<Request> load_trace(const std::filesystem::path& path);
void export_trace(const std::vector<Request>& requests, const std::filesystem::path& path);

}  // namespace moesim
