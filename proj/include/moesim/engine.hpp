// Discrete-event simulation loop: one event per model iteration.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "moesim/core_types.hpp"
#include "moesim/cost_model.hpp"
#include "moesim/coverage.hpp"
#include "moesim/scheduler.hpp"

namespace moesim {

struct IterationRecord {
  std::uint64_t index = 0;
  double start_s = 0.0;
  double runtime_s = 0.0;
  EnergyBreakdown energy;
  double expert_load_bytes = 0.0;
  double total_hbm_bytes = 0.0;
  double total_flops = 0.0;
  // Flops attributable to decode tokens; identical across policies for a trace.
  double decode_flops = 0.0;
  std::uint64_t decode_batch_size = 0;
  std::uint64_t decode_kv_tokens = 0;
  std::uint64_t prefill_tokens = 0;
  std::uint64_t prefill_token_layers = 0;
  std::optional<std::uint32_t> designated_group;
  double kv_used_bytes = 0.0;

  bool operator==(const IterationRecord&) const = default;
};

/// Raised when simulated time passes `max_sim_s`.
class HorizonAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EngineOptions {
  double max_sim_s = 1.0e6;
  // Idle until at least this time even if every request has finished.
  std::optional<double> horizon_s;
};

struct RunResult {
  std::vector<IterationRecord> iterations;
  std::vector<Request> requests;  // every request, in input order
  double end_s = 0.0;
  double idle_s = 0.0;
  EnergyBreakdown energy;  // iterations plus idle static power
};

/// Mutable state of one simulation run.
class SimState {
 public:
  SimState(const ModelSpec& model, const HardwareSpec& hw, std::vector<Request> requests);

  double clock_s() const { return clock_s_; }
  double kv_used_bytes() const;
  double kv_reserved_bytes() const;
  const std::vector<Request>& requests() const { return requests_; }
  const Request& request(RequestId id) const { return requests_.at(index_.at(id)); }
  const std::vector<RequestId>& decoding() const { return decoding_; }
  const std::vector<RequestId>& waiting() const { return waiting_; }
  bool has_pending_arrivals() const { return next_arrival_ < arrival_order_.size(); }
  double next_arrival_s() const;
  bool all_finished() const { return finished_ == requests_.size(); }

  /// Moves requests with arrival_s <= clock into the waiting queue.
  void admit_arrivals();
  /// Jumps the clock forward with the device idle; returns the idle time.
  double idle_until(double t);
  SchedulerView view() const;

  /// Applies one plan: prices it, advances the clock and performs every
  /// phase transition. Throws std::logic_error if the plan does not match the
  /// state.
  IterationRecord step(const BatchPlan& plan, CoverageFunction& coverage);

  std::uint64_t iterations() const { return iterations_; }

 private:
  Request& mut(RequestId id) { return requests_.at(index_.at(id)); }
  double kv_bytes(std::uint64_t token_layers) const;

  const ModelSpec* model_;
  const HardwareSpec* hw_;
  std::vector<Request> requests_;
  std::unordered_map<RequestId, std::size_t> index_;
  std::vector<std::size_t> arrival_order_;
  std::size_t next_arrival_ = 0;
  std::vector<RequestId> waiting_;
  std::vector<RequestId> decoding_;
  std::size_t finished_ = 0;
  double clock_s_ = 0.0;
  std::uint64_t kv_used_token_layers_ = 0;
  std::uint64_t kv_reserved_tokens_ = 0;
  std::uint64_t iterations_ = 0;
};

using IterationObserver =
    std::function<void(const BatchPlan&, const IterationRecord&, const SimState&)>;

/// Runs every request to completion. Throws ValidationError for inconsistent
/// configuration (before the first iteration) and HorizonAbort when the
/// simulated clock exceeds `opts.max_sim_s`.
RunResult run(const ModelSpec& model, const HardwareSpec& hw, const SchedulerConfig& sched,
              std::vector<Request> requests, const CoverageModel& coverage,
              const EngineOptions& opts = {}, const IterationObserver& observer = {});

}  // namespace moesim
