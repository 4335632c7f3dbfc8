// Run configuration files: TOML (sections [model], [hardware], [workload],
// [scheduler], [coverage], [slo], [engine], [output]) or the same structure
// as JSON.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "moesim/core_types.hpp"
#include "moesim/coverage.hpp"
#include "moesim/engine.hpp"
#include "moesim/metrics.hpp"
#include "moesim/workload.hpp"

namespace moesim {

/// Invalid or incomplete configuration. The message is qualified with the
/// config path and the offending section or key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OutputPaths {
  std::optional<std::filesystem::path> summary;
  std::optional<std::filesystem::path> events;
};

struct RunConfig {
  std::filesystem::path source;
  std::uint64_t seed = 0;
  ModelSpec model;
  HardwareSpec hardware;
  WorkloadConfig workload;
  // When set, requests are replayed from this trace instead of generated.
  std::optional<std::filesystem::path> trace;
  SchedulerConfig scheduler;
  CoverageModel coverage = measured_coverage_table();
  SloSpec slo;
  EngineOptions engine;
  OutputPaths output;
};

RunConfig load_run_config(const std::filesystem::path& path);

/// Model spec from a standalone file holding a [model] section (or a full
/// run config).
ModelSpec load_model_spec(const std::filesystem::path& path);
HardwareSpec load_hardware_spec(const std::filesystem::path& path);

/// Applies `seed` everywhere randomness is drawn (workload, sampled coverage).
void set_seed(RunConfig& cfg, std::uint64_t seed);

/// Sweepable keys: request_rate, chunk_size, group_token_target, policy.
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);
bool is_sweep_key(const std::string& key);

std::vector<Request> materialize_requests(const RunConfig& cfg);

struct Experiment {
  RunResult result;
  RunSummary summary;
};

Experiment run_experiment(const RunConfig& cfg, const IterationObserver& observer = {});

}  // namespace moesim
