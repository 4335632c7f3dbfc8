#include "moesim/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_set>

namespace moesim {

namespace {

void check(bool ok, const char* what) {
  if (!ok) throw std::logic_error(std::string("plan/state mismatch: ") + what);
}

}  // namespace

SimState::SimState(const ModelSpec& model, const HardwareSpec& hw, std::vector<Request> requests)
    : model_(&model), hw_(&hw), requests_(std::move(requests)) {
  for (std::size_t i = 0; i < requests_.size(); ++i) {
    Request& r = requests_[i];
    const std::string who = "request " + std::to_string(r.id);
    if (!index_.emplace(r.id, i).second) throw ValidationError(who + ": duplicate id");
    if (!(std::isfinite(r.arrival_s) && r.arrival_s >= 0.0))
      throw ValidationError(who + ": arrival_s must be >= 0");
    if (r.input_len < 1 || r.output_len < 1)
      throw ValidationError(who + ": input_len and output_len must be >= 1");
    if (kv_footprint_bytes(r, model.kv_bytes_per_token) > hw.kv_capacity_bytes)
      throw ValidationError(who + ": KV footprint exceeds hardware.kv_capacity_bytes");
    r.phase = Phase::Queued;
    r.prefilled_tokens = 0;
    r.prefilled_token_layers = 0;
    r.admitted_s.reset();
    r.first_token_s.reset();
    r.token_emit_times_s.clear();
  }
  arrival_order_.resize(requests_.size());
  std::iota(arrival_order_.begin(), arrival_order_.end(), std::size_t{0});
  std::stable_sort(arrival_order_.begin(), arrival_order_.end(), [&](std::size_t a, std::size_t b) {
    return requests_[a].arrival_s < requests_[b].arrival_s;
  });
}

double SimState::kv_bytes(std::uint64_t token_layers) const {
  return static_cast<double>(token_layers) * model_->kv_bytes_per_token / model_->num_layers;
}

double SimState::kv_used_bytes() const { return kv_bytes(kv_used_token_layers_); }

double SimState::kv_reserved_bytes() const {
  return static_cast<double>(kv_reserved_tokens_) * model_->kv_bytes_per_token;
}

double SimState::next_arrival_s() const {
  return requests_[arrival_order_.at(next_arrival_)].arrival_s;
}

void SimState::admit_arrivals() {
  while (has_pending_arrivals() && next_arrival_s() <= clock_s_)
    waiting_.push_back(requests_[arrival_order_[next_arrival_++]].id);
}

double SimState::idle_until(double t) {
  if (t <= clock_s_) return 0.0;
  const double idle = t - clock_s_;
  clock_s_ = t;
  return idle;
}

SchedulerView SimState::view() const {
  SchedulerView v;
  v.decoding = decoding_;
  v.waiting = waiting_;
  v.lookup = [this](RequestId id) -> const Request& { return request(id); };
  v.num_layers = model_->num_layers;
  v.kv_bytes_per_token = model_->kv_bytes_per_token;
  v.kv_free_bytes = hw_->kv_capacity_bytes - kv_reserved_bytes();
  return v;
}

IterationRecord SimState::step(const BatchPlan& plan, CoverageFunction& coverage) {
  const std::uint32_t layers = model_->num_layers;

  for (const RequestId id : plan.admitted) {
    Request& r = mut(id);
    check(r.phase == Phase::Queued, "admitted request is not queued");
    check(std::find(waiting_.begin(), waiting_.end(), id) != waiting_.end(),
          "admitted request has not arrived");
    r.phase = Phase::Prefilling;
    r.admitted_s = clock_s_;
    kv_reserved_tokens_ += std::uint64_t{r.input_len} + r.output_len;
  }
  check(kv_reserved_bytes() <= hw_->kv_capacity_bytes, "KV reservation exceeds capacity");

  BatchWork work;
  work.decode_batch = plan.decode_ids.size();
  std::unordered_set<RequestId> seen;
  for (const RequestId id : plan.decode_ids) {
    const Request& r = request(id);
    check(r.phase == Phase::Decoding, "decode id is not in the decode phase");
    check(seen.insert(id).second, "decode id listed twice");
    work.decode_kv_tokens += std::uint64_t{r.input_len} + r.tokens_emitted();
  }

  std::unordered_map<RequestId, std::uint64_t> added;
  std::uint64_t token_layers = 0;
  for (const auto& a : plan.prefill) {
    const Request& r = request(a.id);
    check(r.phase == Phase::Prefilling, "prefill assignment for a request not in prefill");
    check(a.token_begin < a.token_end && a.token_end <= r.input_len, "bad token slice");
    check(a.first_layer < a.last_layer && a.last_layer <= layers, "bad layer range");
    const std::uint64_t tl = std::uint64_t{a.token_end - a.token_begin} * (a.last_layer - a.first_layer);
    added[a.id] += tl;
    token_layers += tl;
    work.prefill.push_back({a.token_end - a.token_begin, a.token_begin, a.first_layer, a.last_layer});
  }
  for (const auto& [id, tl] : added) {
    const Request& r = request(id);
    const std::uint64_t full = std::uint64_t{r.input_len} * layers;
    check(r.prefilled_token_layers + tl <= full, "prefill exceeds prompt x layers");
    if (r.prefilled_token_layers + tl == full) ++work.completing_prefills;
  }

  const IterationCost cost = cost_iteration(*model_, *hw_, work, coverage);
  check(cost.runtime_s > 0.0, "empty iteration");

  IterationRecord rec;
  rec.index = iterations_++;
  rec.start_s = clock_s_;
  rec.runtime_s = cost.runtime_s;
  rec.energy = cost.energy;
  rec.expert_load_bytes = cost.expert_load_bytes;
  rec.total_hbm_bytes = cost.total_hbm_bytes;
  rec.total_flops = cost.total_flops;
  {
    const double d = static_cast<double>(work.decode_batch);
    const double per_token =
        static_cast<double>(layers) * (2.0 * model_->dense_bytes_per_layer / model_->dtype_bytes +
                                       model_->top_k * model_->flops_per_token_per_expert) +
        2.0 * model_->head_bytes / model_->dtype_bytes;
    rec.decode_flops = model_->attn_flops_per_token_per_ctx *
                           static_cast<double>(work.decode_kv_tokens) +
                       d * per_token;
  }
  rec.decode_batch_size = work.decode_batch;
  rec.decode_kv_tokens = work.decode_kv_tokens;
  rec.prefill_tokens = plan.prefill_tokens();
  rec.prefill_token_layers = token_layers;
  rec.designated_group = plan.designated_group;

  clock_s_ += cost.runtime_s;

  for (const RequestId id : plan.decode_ids) {
    Request& r = mut(id);
    r.token_emit_times_s.push_back(clock_s_);
    kv_used_token_layers_ += layers;
    if (r.tokens_emitted() == r.output_len) {
      r.phase = Phase::Finished;
      const std::uint64_t footprint = std::uint64_t{r.input_len} + r.output_len;
      kv_used_token_layers_ -= footprint * layers;
      kv_reserved_tokens_ -= footprint;
      ++finished_;
    }
  }
  std::erase_if(decoding_, [&](RequestId id) { return request(id).phase == Phase::Finished; });

  for (const auto& a : plan.prefill) {
    Request& r = mut(a.id);
    const std::uint64_t tl = std::uint64_t{a.token_end - a.token_begin} * (a.last_layer - a.first_layer);
    r.prefilled_token_layers += tl;
    kv_used_token_layers_ += tl;
    if (a.last_layer == layers) r.prefilled_tokens = std::max(r.prefilled_tokens, a.token_end);
  }
  for (const auto& a : plan.prefill) {
    Request& r = mut(a.id);
    if (r.phase == Phase::Prefilling &&
        r.prefilled_token_layers == std::uint64_t{r.input_len} * layers) {
      r.phase = Phase::Decoding;
      r.first_token_s = clock_s_;
      decoding_.push_back(r.id);
      waiting_.erase(std::find(waiting_.begin(), waiting_.end(), r.id));
    }
  }

  check(kv_used_bytes() <= hw_->kv_capacity_bytes, "KV usage exceeds capacity");
  rec.kv_used_bytes = kv_used_bytes();
  return rec;
}

RunResult run(const ModelSpec& model, const HardwareSpec& hw, const SchedulerConfig& sched_cfg,
              std::vector<Request> requests, const CoverageModel& coverage,
              const EngineOptions& opts, const IterationObserver& observer) {
  validate_model(model);
  validate_hardware(hw);
  validate_scheduler(sched_cfg);
  validate_coverage_model(coverage);
  if (!(opts.max_sim_s > 0.0)) throw ValidationError("engine.max_sim_s must be > 0");

  SimState state(model, hw, std::move(requests));
  Scheduler scheduler(sched_cfg, model.num_layers);
  CoverageFunction cov(coverage, model.top_k, model.num_experts);

  RunResult out;
  for (;;) {
    state.admit_arrivals();
    if (state.decoding().empty() && state.waiting().empty() && !scheduler.cohort_in_flight()) {
      if (!state.has_pending_arrivals()) break;
      out.idle_s += state.idle_until(state.next_arrival_s());
      continue;
    }
    const BatchPlan plan = scheduler.plan(state.view());
    if (plan.empty())
      throw std::logic_error("scheduler produced an empty plan with work outstanding");
    IterationRecord rec = state.step(plan, cov);
    if (observer) observer(plan, rec, state);
    out.iterations.push_back(rec);
    if (state.clock_s() > opts.max_sim_s)
      throw HorizonAbort("simulated time exceeded max_sim_s=" + std::to_string(opts.max_sim_s) +
                         " after " + std::to_string(state.iterations()) + " iterations with " +
                         std::to_string(state.waiting().size()) + " requests waiting");
  }
  if (opts.horizon_s) out.idle_s += state.idle_until(*opts.horizon_s);

  for (const auto& rec : out.iterations) {
    out.energy.static_j += rec.energy.static_j;
    out.energy.compute_j += rec.energy.compute_j;
    out.energy.memory_j += rec.energy.memory_j;
  }
  out.energy.static_j += hw.static_power_w * out.idle_s;
  out.energy.total_j = out.energy.static_j + out.energy.compute_j + out.energy.memory_j;
  out.end_s = state.clock_s();
  out.requests = state.requests();
  return out;
}

}  // namespace moesim
