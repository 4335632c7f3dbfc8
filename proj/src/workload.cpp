#include "moesim/workload.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace moesim {

namespace {

std::uint32_t clamp_len(double v, std::uint32_t hi) {
  const double r = std::round(v);
  if (!(r >= 1.0)) return 1;
  if (r >= static_cast<double>(hi)) return hi;
  return static_cast<std::uint32_t>(r);
}

// Separate streams for arrivals and lengths so changing one axis does not
// perturb the other.
constexpr std::uint64_t kLengthStream = 0x9E3779B97F4A7C15ull;

}  // namespace

double Rng::normal() {
  if (spare_normal_) {
    const double v = *spare_normal_;
    spare_normal_.reset();
    return v;
  }
  const double u1 = uniform_open_low();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_normal_ = r * std::sin(theta);
  return r * std::cos(theta);
}

std::uint64_t Rng::below(std::uint64_t n) {
  // Lemire-style rejection keeps the draw unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

void validate_lengths(const LengthDistribution& dist) {
  std::visit(
      [](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, FixedLengths>) {
          if (d.input < 1 || d.output < 1)
            throw ValidationError("workload fixed lengths must be >= 1");
        } else if constexpr (std::is_same_v<T, LogNormalLengths>) {
          if (!(d.in_mean > 0 && d.in_std > 0 && d.out_mean > 0 && d.out_std > 0))
            throw ValidationError("workload lognormal means/stds must be > 0");
        } else {
          if (d.pairs.empty()) throw ValidationError("workload empirical trace is empty");
          for (const auto& [in, out] : d.pairs)
            if (in < 1 || out < 1)
              throw ValidationError("workload empirical lengths must be >= 1");
        }
      },
      dist);
}

void validate_workload(const WorkloadConfig& cfg) {
  if (!(cfg.request_rate_rps > 0.0 && std::isfinite(cfg.request_rate_rps)))
    throw ValidationError("workload.request_rate must be > 0");
  if (cfg.duration_s.has_value() == cfg.num_requests.has_value())
    throw ValidationError("workload: exactly one of duration_s / num_requests must be set");
  if (cfg.duration_s && !(*cfg.duration_s > 0.0))
    throw ValidationError("workload.duration_s must be > 0");
  validate_lengths(cfg.lengths);
}

std::pair<double, double> lognormal_params(double mean, double std_dev) {
  const double sigma2 = std::log1p((std_dev * std_dev) / (mean * mean));
  return {std::log(mean) - 0.5 * sigma2, std::sqrt(sigma2)};
}

double lognormal_quantile(double mean, double std_dev, double p) {
  // Standard normal quantile by bisection on the CDF.
  double lo = -10.0, hi = 10.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double cdf = 0.5 * std::erfc(-mid / std::numbers::sqrt2);
    (cdf < p ? lo : hi) = mid;
  }
  const auto [mu, sigma] = lognormal_params(mean, std_dev);
  return std::exp(mu + sigma * 0.5 * (lo + hi));
}

std::vector<double> generate_arrivals(const WorkloadConfig& cfg) {
  validate_workload(cfg);
  Rng rng(cfg.seed);
  std::vector<double> out;
  double t = 0.0;
  if (cfg.num_requests) {
    out.reserve(*cfg.num_requests);
    for (std::uint64_t i = 0; i < *cfg.num_requests; ++i) {
      t += rng.exponential(cfg.request_rate_rps);
      out.push_back(t);
    }
  } else {
    for (;;) {
      t += rng.exponential(cfg.request_rate_rps);
      if (t >= *cfg.duration_s) break;
      out.push_back(t);
    }
  }
  return out;
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> sample_lengths(
    const LengthDistribution& dist, std::size_t n, std::uint64_t seed) {
  validate_lengths(dist);
  Rng rng(seed);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
  out.reserve(n);
  std::visit(
      [&](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, FixedLengths>) {
          out.assign(n, {d.input, d.output});
        } else if constexpr (std::is_same_v<T, LogNormalLengths>) {
          const auto [in_mu, in_sigma] = lognormal_params(d.in_mean, d.in_std);
          const auto [out_mu, out_sigma] = lognormal_params(d.out_mean, d.out_std);
          for (std::size_t i = 0; i < n; ++i) {
            const double in = std::exp(in_mu + in_sigma * rng.normal());
            const double o = std::exp(out_mu + out_sigma * rng.normal());
            out.emplace_back(clamp_len(in, kMaxInputLen), clamp_len(o, kMaxOutputLen));
          }
        } else {
          for (std::size_t i = 0; i < n; ++i) out.push_back(d.pairs[rng.below(d.pairs.size())]);
        }
      },
      dist);
  return out;
}

std::vector<Request> generate_requests(const WorkloadConfig& cfg) {
  const auto arrivals = generate_arrivals(cfg);
  const auto lengths = sample_lengths(cfg.lengths, arrivals.size(), cfg.seed ^ kLengthStream);
  std::vector<Request> out(arrivals.size());
  for (std::size_t i = 0; i < arrivals.size(); ++i) {
    out[i].id = i;
    out[i].arrival_s = arrivals[i];
    out[i].input_len = lengths[i].first;
    out[i].output_len = lengths[i].second;
  }
  return out;
}

TraceParseError::TraceParseError(const std::string& path, std::size_t line,
                                 const std::string& what)
    : std::runtime_error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}

namespace {

template <typename T>
bool parse_field(std::string_view text, T& out) {
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    parts.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

constexpr std::string_view kTraceHeader = "id,arrival_s,input_len,output_len";

}  // namespace

std::vector<Request> load_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file: " + path.string());
  std::vector<Request> out;
  std::string line;
  std::size_t lineno = 0;
  bool seen_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!seen_header) {
      if (line != kTraceHeader)
        throw TraceParseError(path.string(), lineno,
                              "expected header '" + std::string(kTraceHeader) + "'");
      seen_header = true;
      continue;
    }
    const auto parts = split_commas(line);
    if (parts.size() != 4)
      throw TraceParseError(path.string(), lineno, "expected 4 comma-separated fields");
    Request r;
    if (!parse_field(parts[0], r.id)) throw TraceParseError(path.string(), lineno, "bad id");
    if (!parse_field(parts[1], r.arrival_s) || !(r.arrival_s >= 0.0))
      throw TraceParseError(path.string(), lineno, "bad arrival_s");
    if (!parse_field(parts[2], r.input_len) || r.input_len < 1)
      throw TraceParseError(path.string(), lineno, "bad input_len");
    if (!parse_field(parts[3], r.output_len) || r.output_len < 1)
      throw TraceParseError(path.string(), lineno, "bad output_len");
    out.push_back(std::move(r));
  }
  return out;
}

void export_trace(const std::vector<Request>& requests, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trace file: " + path.string());
  out << kTraceHeader << '\n';
  char buf[64];
  for (const auto& r : requests) {
    std::snprintf(buf, sizeof buf, "%.17g", r.arrival_s);
    out << r.id << ',' << buf << ',' << r.input_len << ',' << r.output_len << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace moesim
