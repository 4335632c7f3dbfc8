// Iteration-level prefill schedulers.
//
// All three policies share one mechanism. Prompt tokens are cut into chunks
// along the token axis and each chunk walks the model's layer groups, one
// group per iteration:
//
//   * chunked: every request has a single group (all layers), so a chunk of up
//     to `chunk_size` tokens, possibly spanning several requests, finishes in
//     the iteration it is issued;
//   * layered: a cohort's whole prompt is one chunk that advances one layer
//     group per iteration, G(L) = max(1, ceil(L / group_token_target));
//   * hybrid: a cohort's prompt is cut into `chunk_size` chunks that pipeline
//     through the cohort's layer groups.
//
// Every request in the decode phase is part of every plan.

#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "moesim/core_types.hpp"

namespace moesim {

inline constexpr std::uint64_t kUnbounded = std::numeric_limits<std::uint64_t>::max();

/// Contiguous balanced partition of [0, num_layers).
struct GroupPlan {
  std::uint32_t num_groups = 1;
  std::vector<std::uint32_t> boundaries;  // num_groups + 1 entries, 0 .. num_layers

  std::uint32_t first_layer(std::uint32_t group) const { return boundaries.at(group); }
  std::uint32_t last_layer(std::uint32_t group) const { return boundaries.at(group + 1); }
  std::uint32_t size(std::uint32_t group) const { return last_layer(group) - first_layer(group); }
};

/// max(1, ceil(L / target)), capped at `num_layers`.
std::uint32_t compute_num_groups(std::uint64_t prompt_len, std::uint64_t group_token_target,
                                 std::uint32_t num_layers = std::numeric_limits<std::uint32_t>::max());

/// min(G, num_layers) groups whose sizes differ by at most one; the larger
/// groups come first.
GroupPlan partition_layers(std::uint32_t num_layers, std::uint32_t num_groups);

struct PrefillAssignment {
  RequestId id = 0;
  std::uint32_t token_begin = 0;
  std::uint32_t token_end = 0;
  std::uint32_t first_layer = 0;
  std::uint32_t last_layer = 0;

  bool operator==(const PrefillAssignment&) const = default;
};

struct BatchPlan {
  std::vector<RequestId> decode_ids;
  std::vector<PrefillAssignment> prefill;
  // Requests that enter prefill this iteration; the engine reserves their KV.
  std::vector<RequestId> admitted;
  // Set when G > 1 and exactly one layer group runs prefill.
  std::optional<std::uint32_t> designated_group;

  std::uint64_t prefill_tokens() const;
  bool empty() const { return decode_ids.empty() && prefill.empty(); }
  bool operator==(const BatchPlan&) const = default;
};

/// What a scheduler may observe about the system.
struct SchedulerView {
  // Requests in the decode phase, in the order they entered it.
  std::span<const RequestId> decoding;
  // Arrived requests whose prefill has not completed, FCFS.
  std::span<const RequestId> waiting;
  std::function<const Request&(RequestId)> lookup;
  std::uint32_t num_layers = 1;
  double kv_bytes_per_token = 0.0;
  double kv_free_bytes = 0.0;  // capacity minus reservations
};

/// Lifetime KV footprint reserved at admission: (input + output) tokens.
double kv_footprint_bytes(const Request& r, double kv_bytes_per_token);

class Scheduler {
 public:
  Scheduler(const SchedulerConfig& cfg, std::uint32_t num_layers);

  /// Plans the next iteration and commits the scheduler's own progress
  /// (cohort cursors); the engine must execute the returned plan.
  BatchPlan plan(const SchedulerView& view);

  PolicyKind policy() const { return policy_; }
  std::uint64_t chunk_budget() const { return chunk_budget_; }
  std::uint64_t group_token_target() const { return group_target_; }
  bool cohort_in_flight() const { return cohort_.has_value(); }

 private:
  struct Piece {
    RequestId id;
    std::uint32_t begin;
    std::uint32_t end;
  };
  struct Chunk {
    std::vector<Piece> pieces;
    std::uint32_t group = 0;
  };
  struct Cohort {
    std::vector<RequestId> members;
    std::vector<std::uint32_t> lengths;
    std::uint64_t total_tokens = 0;
    std::uint64_t issued_tokens = 0;
    GroupPlan groups;
    std::deque<Chunk> in_flight;
  };

  void start_cohort(const SchedulerView& view, BatchPlan& plan);
  void advance_cohort(BatchPlan& plan);
  void plan_stream(const SchedulerView& view, BatchPlan& plan);
  std::uint32_t groups_for(std::uint64_t prompt_len) const;

  PolicyKind policy_;
  std::uint64_t chunk_budget_;
  std::uint64_t group_target_;
  std::uint32_t num_layers_;
  std::optional<Cohort> cohort_;
};

}  // namespace moesim
