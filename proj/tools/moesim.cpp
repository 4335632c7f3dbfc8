// moesim: run, sweep and microbenchmark the MoE serving simulator.
//
// Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or
// arguments, 3 simulated-time horizon exceeded.

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "moesim/cost_model.hpp"
#include "moesim/coverage.hpp"
#include "moesim/report.hpp"
#include "moesim/run_config.hpp"

using namespace moesim;
namespace fs = std::filesystem;

namespace {

constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitHorizon = 3;

// MOESIM_LOG: 0/unset quiet, 1 (or "info") progress, 2 (or "debug") per run detail.
int log_level() {
  static const int level = [] {
    const char* v = std::getenv("MOESIM_LOG");
    if (!v) return 0;
    const std::string s(v);
    if (s == "info") return 1;
    if (s == "debug") return 2;
    return std::atoi(v);
  }();
  return level;
}

void log(int level, const std::string& msg) {
  static std::mutex mu;
  if (log_level() < level) return;
  std::lock_guard lock(mu);
  std::cerr << "[moesim] " << msg << '\n';
}

// Writes to `path`, or stdout when empty.
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::vector<std::uint64_t> parse_u64_list(const std::string& text, const std::string& flag) {
  std::vector<std::uint64_t> out;
  for (const auto& s : split_list(text)) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || s.front() == '-')
      throw ConfigError(flag + ": '" + s + "' is not a non-negative integer");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError(flag + ": empty list");
  return out;
}

std::string csv_text(const std::vector<std::string>& header,
                     const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream out;
  write_csv_line(out, header);
  for (const auto& r : rows) write_csv_line(out, r);
  return out.str();
}

struct RunOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string events;
  std::string format = "json";
};

int cmd_run(const RunOptions& o) {
  RunConfig cfg = load_run_config(o.config);
  if (o.seed) set_seed(cfg, *o.seed);
  log(1, "running " + o.config + " policy=" + to_string(cfg.scheduler.policy));
  const Experiment exp = run_experiment(cfg);
  const RunLabel label = label_of(cfg);

  std::string out_path = o.out;
  if (out_path.empty() && cfg.output.summary) out_path = cfg.output.summary->string();
  if (o.format == "csv")
    emit(out_path, csv_text(summary_csv_header(), {summary_csv_row(label, exp.summary)}));
  else
    emit(out_path, summary_json(label, exp.summary).dump(2) + "\n");

  std::string events = o.events;
  if (events.empty() && cfg.output.events) events = cfg.output.events->string();
  if (!events.empty()) {
    std::ostringstream ev, rq;
    write_event_csv(ev, exp.result.iterations);
    write_request_csv(rq, exp.result.requests);
    emit(events, ev.str());
    fs::path req_path = events;
    req_path.replace_filename(req_path.stem().string() + "_requests.csv");
    emit(req_path.string(), rq.str());
  }

  const auto& s = exp.summary;
  char line[256];
  std::snprintf(line, sizeof line,
                "%s: %llu requests, ttft p99 %.3f s, tbt p99 %.1f ms, slo %.1f%%, %.2f mJ/tok\n",
                label.policy.c_str(), static_cast<unsigned long long>(s.num_requests),
                s.ttft_p99_s, s.tbt_p99_s * 1e3, s.slo_attainment_fraction * 100.0,
                s.energy_per_token_j * 1e3);
  // Keep stdout machine-readable when the summary itself goes there.
  (out_path.empty() || out_path == "-" ? std::cerr : std::cout) << line;
  return 0;
}

struct SweepOptions {
  std::string config;
  std::string vary;
  std::string values;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "csv";
  unsigned jobs = 1;
};

int cmd_sweep(const SweepOptions& o) {
  if (!is_sweep_key(o.vary))
    throw ConfigError("--vary: unknown key '" + o.vary +
                      "' (expected request_rate, chunk_size, group_token_target or policy)");
  const auto values = split_list(o.values);
  if (values.empty()) throw ConfigError("--values: empty list");
  const RunConfig base = load_run_config(o.config);
  const std::uint64_t base_seed = o.seed.value_or(base.seed);

  std::vector<RunConfig> points;
  for (std::size_t i = 0; i < values.size(); ++i) {
    RunConfig cfg = base;
    apply_override(cfg, o.vary, values[i]);
    set_seed(cfg, base_seed + i);
    points.push_back(std::move(cfg));
  }

  std::vector<std::optional<RunSummary>> results(points.size());
  std::vector<std::exception_ptr> errors(points.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < points.size();) {
      try {
        log(1, o.vary + "=" + values[i] + " seed=" + std::to_string(points[i].seed));
        results[i] = run_experiment(points[i]).summary;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned jobs = std::max(1u, std::min<unsigned>(o.jobs, points.size()));
  std::vector<std::thread> pool;
  for (unsigned j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  if (o.format == "json") {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < points.size(); ++i)
      arr.push_back(summary_json(label_of(points[i]), *results[i]));
    emit(o.out, arr.dump(2) + "\n");
  } else {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < points.size(); ++i)
      rows.push_back(summary_csv_row(label_of(points[i]), *results[i]));
    emit(o.out, csv_text(summary_csv_header(), rows));
  }
  return 0;
}

struct CoverageOptions {
  std::string model;
  std::uint32_t experts = 128;
  std::uint32_t top_k = 8;
  std::string batch_sizes = "1,2,4,8,16,32,64,128,256,512";
  double skew = 0.0;
  std::uint64_t trials = 1000;
  bool calibrate = false;
  std::uint64_t seed = 0;
  std::string out;
  std::string format = "csv";
};

int cmd_coverage(const CoverageOptions& o) {
  std::uint32_t experts = o.experts, top_k = o.top_k;
  if (!o.model.empty()) {
    const ModelSpec m = load_model_spec(o.model);
    experts = m.num_experts;
    top_k = m.top_k;
  }
  const auto sizes = parse_u64_list(o.batch_sizes, "--batch-sizes");
  double skew = o.skew;
  const EmpiricalTable table = measured_coverage_table();
  if (o.calibrate) {
    const TableFit fit = calibrate_skew_to_table(table, top_k, experts, o.trials, o.seed);
    skew = fit.skew_exponent;
    log(1, "calibrated skew " + format_double(skew) + ", worst table gap " +
               format_double(fit.max_abs_error));
  }
  std::vector<std::vector<std::string>> rows;
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const std::uint64_t b : sizes) {
    const double analytic = expected_coverage_uniform(b, top_k, experts);
    const double sampled = mean_sampled_coverage(b, top_k, experts, skew, o.trials, o.seed);
    const double measured = coverage_from_table(b, table);
    rows.push_back({std::to_string(b), format_double(analytic), format_double(sampled),
                    format_double(measured), format_double(skew)});
    arr.push_back({{"batch_size", b},
                   {"analytic", analytic},
                   {"sampled", sampled},
                   {"table", measured},
                   {"skew", skew}});
  }
  if (o.format == "json")
    emit(o.out, arr.dump(2) + "\n");
  else
    emit(o.out, csv_text({"batch_size", "analytic", "sampled", "table", "skew"}, rows));
  return 0;
}

struct BenchOptions {
  std::string model;
  std::string hw;
  std::uint64_t input_len = 8192;
  std::string chunk_sizes = "512,1024,2048,4096,8192";
  std::string out;
  std::string format = "csv";
};

int cmd_chunk_bench(const BenchOptions& o) {
  const ModelSpec model = load_model_spec(o.model);
  const HardwareSpec hw = load_hardware_spec(o.hw);
  if (o.input_len == 0) throw ConfigError("--input-len must be >= 1");
  const auto sizes = parse_u64_list(o.chunk_sizes, "--chunk-sizes");
  std::vector<std::string> header = {"chunk_size", "num_chunks", "moe_bytes", "hbm_bytes",
                                     "runtime_s"};
  const KernelKind kinds[] = {KernelKind::AttentionPrefill, KernelKind::AttentionDecode,
                              KernelKind::DenseProj, KernelKind::MoEFFN, KernelKind::Other};
  for (const auto k : kinds) header.push_back(std::string(to_string(k)) + "_s");

  std::vector<std::vector<std::string>> rows;
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const std::uint64_t c : sizes) {
    if (c == 0) throw ConfigError("--chunk-sizes: chunk size must be >= 1");
    CoverageFunction cov(measured_coverage_table(), model.top_k, model.num_experts);
    const ChunkProfile p = chunk_prefill_profile(model, hw, o.input_len, c, cov);
    std::vector<std::string> row = {std::to_string(c), std::to_string(p.num_chunks),
                                    format_double(p.expert_load_bytes),
                                    format_double(p.total_hbm_bytes), format_double(p.runtime_s)};
    nlohmann::ordered_json j = {{"chunk_size", c},
                                {"num_chunks", p.num_chunks},
                                {"moe_bytes", p.expert_load_bytes},
                                {"hbm_bytes", p.total_hbm_bytes},
                                {"runtime_s", p.runtime_s}};
    for (const auto k : kinds) {
      const double t = p.kernel_runtime_s[static_cast<int>(k)];
      row.push_back(format_double(t));
      j[std::string(to_string(k)) + "_s"] = t;
    }
    rows.push_back(std::move(row));
    arr.push_back(std::move(j));
  }
  if (o.format == "json")
    emit(o.out, arr.dump(2) + "\n");
  else
    emit(o.out, csv_text(header, rows));
  return 0;
}

int cmd_validate(const std::string& path) {
  const RunConfig cfg = load_run_config(path);
  const auto requests = materialize_requests(cfg);
  std::cout << path << ": ok (" << cfg.model.name << " on " << cfg.hardware.name << ", "
            << to_string(cfg.scheduler.policy) << ", " << requests.size() << " requests)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discrete-event simulator of MoE LLM serving with chunked, layered and hybrid "
               "prefill scheduling"};
  app.require_subcommand(1);
  const std::vector<std::string> formats = {"csv", "json"};

  RunOptions run_opts;
  auto* run = app.add_subcommand("run", "Run one simulation and write its summary");
  run->add_option("config", run_opts.config, "Run config (TOML or JSON)")->required();
  run->add_option("--seed", run_opts.seed, "Override the config seed");
  run->add_option("--out", run_opts.out, "Summary output path (default: [output] or stdout)");
  run->add_option("--emit-events", run_opts.events,
                  "Write the per-iteration event CSV here (plus <stem>_requests.csv)");
  run->add_option("--format", run_opts.format, "Summary format")
      ->check(CLI::IsMember(formats))
      ->default_val("json");

  SweepOptions sweep_opts;
  auto* sweep = app.add_subcommand("sweep", "Run one simulation per value of a config key");
  sweep->add_option("config", sweep_opts.config, "Base run config")->required();
  sweep->add_option("--vary", sweep_opts.vary,
                    "Key to vary: request_rate, chunk_size, group_token_target or policy")
      ->required();
  sweep->add_option("--values", sweep_opts.values, "Comma-separated values")->required();
  sweep->add_option("--seed", sweep_opts.seed, "Base seed; point i uses seed + i");
  sweep->add_option("--out", sweep_opts.out, "Output path (default stdout)");
  sweep->add_option("--format", sweep_opts.format, "Output format")
      ->check(CLI::IsMember(formats))
      ->default_val("csv");
  sweep->add_option("--jobs", sweep_opts.jobs, "Points simulated concurrently")
      ->check(CLI::PositiveNumber)
      ->default_val(1);

  CoverageOptions cov_opts;
  auto* cov = app.add_subcommand("coverage", "Tabulate analytic, sampled and measured coverage");
  cov->add_option("--model", cov_opts.model, "Model config; overrides --experts/--top-k");
  cov->add_option("--experts", cov_opts.experts, "Experts per layer")->default_val(128);
  cov->add_option("--top-k", cov_opts.top_k, "Experts per token")->default_val(8);
  cov->add_option("--batch-sizes", cov_opts.batch_sizes, "Comma-separated routed-token counts");
  cov->add_option("--skew", cov_opts.skew, "Popularity skew exponent of the sampler")
      ->check(CLI::NonNegativeNumber)
      ->default_val(0.0);
  cov->add_option("--trials", cov_opts.trials, "Monte Carlo draws per batch size")
      ->default_val(1000);
  cov->add_flag("--calibrate", cov_opts.calibrate,
                "Fit the skew to the measured table before sampling");
  cov->add_option("--seed", cov_opts.seed, "Sampler seed")->default_val(0);
  cov->add_option("--out", cov_opts.out, "Output path (default stdout)");
  cov->add_option("--format", cov_opts.format, "Output format")
      ->check(CLI::IsMember(formats))
      ->default_val("csv");

  BenchOptions bench_opts;
  auto* bench = app.add_subcommand("chunk-bench", "Prefill cost of one prompt per chunk size");
  bench->add_option("--model", bench_opts.model, "Model config")->required();
  bench->add_option("--hw", bench_opts.hw, "Hardware config")->required();
  bench->add_option("--input-len", bench_opts.input_len, "Prompt length")->default_val(8192);
  bench->add_option("--chunk-sizes", bench_opts.chunk_sizes, "Comma-separated chunk sizes");
  bench->add_option("--out", bench_opts.out, "Output path (default stdout)");
  bench->add_option("--format", bench_opts.format, "Output format")
      ->check(CLI::IsMember(formats))
      ->default_val("csv");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "Check a run config and its workload");
  validate->add_option("config", validate_path, "Run config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return cmd_run(run_opts);
    if (*sweep) return cmd_sweep(sweep_opts);
    if (*cov) return cmd_coverage(cov_opts);
    if (*bench) return cmd_chunk_bench(bench_opts);
    if (*validate) return cmd_validate(validate_path);
  } catch (const ConfigError& e) {
    std::cerr << "moesim: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ValidationError& e) {
    std::cerr << "moesim: " << e.what() << '\n';
    return kExitConfig;
  } catch (const TraceParseError& e) {
    std::cerr << "moesim: " << e.what() << '\n';
    return kExitConfig;
  } catch (const HorizonAbort& e) {
    std::cerr << "moesim: " << e.what() << '\n';
    return kExitHorizon;
  } catch (const std::exception& e) {
    std::cerr << "moesim: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
