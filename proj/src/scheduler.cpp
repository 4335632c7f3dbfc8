#include "moesim/scheduler.hpp"

#include <algorithm>

namespace moesim {

namespace {

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return a / b + (a % b != 0); }

}  // namespace

std::uint32_t compute_num_groups(std::uint64_t prompt_len, std::uint64_t group_token_target,
                                 std::uint32_t num_layers) {
  if (group_token_target == 0) throw ValidationError("group_token_target must be >= 1");
  const std::uint64_t g = std::max<std::uint64_t>(1, ceil_div(prompt_len, group_token_target));
  return static_cast<std::uint32_t>(std::min<std::uint64_t>(g, std::max(1u, num_layers)));
}

GroupPlan partition_layers(std::uint32_t num_layers, std::uint32_t num_groups) {
  if (num_layers == 0 || num_groups == 0)
    throw ValidationError("partition_layers: need num_layers >= 1 and G >= 1");
  GroupPlan plan;
  plan.num_groups = std::min(num_groups, num_layers);
  const std::uint32_t base = num_layers / plan.num_groups;
  const std::uint32_t larger = num_layers % plan.num_groups;
  plan.boundaries.reserve(plan.num_groups + 1);
  plan.boundaries.push_back(0);
  for (std::uint32_t g = 0; g < plan.num_groups; ++g)
    plan.boundaries.push_back(plan.boundaries.back() + base + (g < larger ? 1 : 0));
  return plan;
}

std::uint64_t BatchPlan::prefill_tokens() const {
  std::uint64_t n = 0;
  for (const auto& a : prefill) n += a.token_end - a.token_begin;
  return n;
}

double kv_footprint_bytes(const Request& r, double kv_bytes_per_token) {
  return (static_cast<double>(r.input_len) + static_cast<double>(r.output_len)) *
         kv_bytes_per_token;
}

Scheduler::Scheduler(const SchedulerConfig& cfg, std::uint32_t num_layers)
    : policy_(cfg.policy), num_layers_(num_layers) {
  validate_scheduler(cfg);
  if (num_layers == 0) throw ValidationError("scheduler: num_layers must be >= 1");
  switch (cfg.policy) {
    case PolicyKind::Chunked:
      chunk_budget_ = cfg.chunk_size;
      group_target_ = kUnbounded;
      break;
    case PolicyKind::Layered:
      chunk_budget_ = kUnbounded;
      group_target_ = cfg.group_token_target;
      break;
    case PolicyKind::Hybrid:
      chunk_budget_ = cfg.chunk_size;
      group_target_ = cfg.group_token_target;
      break;
  }
}

std::uint32_t Scheduler::groups_for(std::uint64_t prompt_len) const {
  return compute_num_groups(prompt_len, group_target_, num_layers_);
}

BatchPlan Scheduler::plan(const SchedulerView& view) {
  BatchPlan plan;
  plan.decode_ids.assign(view.decoding.begin(), view.decoding.end());

  if (!cohort_ && !view.waiting.empty()) {
    const Request& head = view.lookup(view.waiting.front());
    if (head.prefilled_token_layers == 0 && groups_for(head.input_len) > 1) {
      start_cohort(view, plan);
    } else {
      plan_stream(view, plan);
    }
  }
  if (cohort_) advance_cohort(plan);
  return plan;
}

// Single-group prefill: fill up to `chunk_budget_` tokens FCFS across waiting
// requests, splitting the last one if needed. Stops at the first request that
// needs more than one layer group or does not fit in the KV budget.
void Scheduler::plan_stream(const SchedulerView& view, BatchPlan& plan) {
  std::uint64_t budget = chunk_budget_;
  double kv_free = view.kv_free_bytes;
  for (const RequestId id : view.waiting) {
    if (budget == 0) break;
    const Request& r = view.lookup(id);
    if (r.phase == Phase::Queued) {
      if (groups_for(r.input_len) > 1) break;
      const double need = kv_footprint_bytes(r, view.kv_bytes_per_token);
      if (need > kv_free) break;
      kv_free -= need;
      plan.admitted.push_back(id);
    }
    const std::uint32_t remaining = r.input_len - r.prefilled_tokens;
    const auto take = static_cast<std::uint32_t>(std::min<std::uint64_t>(remaining, budget));
    plan.prefill.push_back({id, r.prefilled_tokens, r.prefilled_tokens + take, 0, num_layers_});
    budget -= take;
  }
}

// Multi-group prefill: the head request plus any following whole requests
// that fit in G(head) * group_token_target tokens form one cohort.
void Scheduler::start_cohort(const SchedulerView& view, BatchPlan& plan) {
  const Request& head = view.lookup(view.waiting.front());
  double kv_free = view.kv_free_bytes;
  const double head_need = kv_footprint_bytes(head, view.kv_bytes_per_token);
  if (head_need > kv_free) return;

  const std::uint64_t raw_groups =
      std::max<std::uint64_t>(1, ceil_div(head.input_len, group_target_));
  const std::uint64_t merge_budget =
      raw_groups > kUnbounded / group_target_ ? kUnbounded : raw_groups * group_target_;

  Cohort c;
  std::uint32_t max_len = 0;
  for (const RequestId id : view.waiting) {
    const Request& r = view.lookup(id);
    if (r.phase != Phase::Queued) break;
    if (!c.members.empty()) {
      if (c.total_tokens + r.input_len > merge_budget) break;
    }
    const double need = kv_footprint_bytes(r, view.kv_bytes_per_token);
    if (need > kv_free) break;
    kv_free -= need;
    c.members.push_back(id);
    c.lengths.push_back(r.input_len);
    c.total_tokens += r.input_len;
    max_len = std::max(max_len, r.input_len);
    plan.admitted.push_back(id);
  }
  c.groups = partition_layers(num_layers_, groups_for(max_len));
  cohort_ = std::move(c);
}

void Scheduler::advance_cohort(BatchPlan& plan) {
  Cohort& c = *cohort_;

  // Issue the next chunk into group 0.
  if (c.issued_tokens < c.total_tokens) {
    std::uint64_t budget = std::min(chunk_budget_, c.total_tokens - c.issued_tokens);
    Chunk chunk;
    std::uint64_t offset = 0;
    for (std::size_t i = 0; i < c.members.size() && budget > 0; ++i) {
      const std::uint64_t len = c.lengths[i];
      if (c.issued_tokens >= offset + len) {
        offset += len;
        continue;
      }
      const auto begin = static_cast<std::uint32_t>(c.issued_tokens - offset);
      const auto take = static_cast<std::uint32_t>(std::min<std::uint64_t>(len - begin, budget));
      chunk.pieces.push_back({c.members[i], begin, begin + take});
      c.issued_tokens += take;
      budget -= take;
      offset += len;
    }
    c.in_flight.push_back(std::move(chunk));
  }

  // Oldest chunk (deepest group) first.
  for (const Chunk& chunk : c.in_flight) {
    for (const Piece& p : chunk.pieces)
      plan.prefill.push_back({p.id, p.begin, p.end, c.groups.first_layer(chunk.group),
                              c.groups.last_layer(chunk.group)});
  }
  if (c.groups.num_groups > 1 && c.in_flight.size() == 1)
    plan.designated_group = c.in_flight.front().group;

  for (Chunk& chunk : c.in_flight) ++chunk.group;
  while (!c.in_flight.empty() && c.in_flight.front().group >= c.groups.num_groups)
    c.in_flight.pop_front();
  if (c.in_flight.empty() && c.issued_tokens == c.total_tokens) cohort_.reset();
}

}  // namespace moesim
