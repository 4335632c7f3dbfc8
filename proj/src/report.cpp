#include "moesim/report.hpp"

#include <charconv>

namespace moesim {

namespace {

struct Field {
  const char* name;
  double RunSummary::*member;
};

constexpr Field kFields[] = {
    {"makespan_s", &RunSummary::makespan_s},
    {"ttft_mean_s", &RunSummary::ttft_mean_s},
    {"ttft_p99_s", &RunSummary::ttft_p99_s},
    {"tbt_mean_s", &RunSummary::tbt_mean_s},
    {"tbt_p99_s", &RunSummary::tbt_p99_s},
    {"e2e_latency_mean_s", &RunSummary::e2e_latency_mean_s},
    {"slo_attainment", &RunSummary::slo_attainment_fraction},
    {"ttft_attainment", &RunSummary::ttft_attainment_fraction},
    {"tbt_attainment", &RunSummary::tbt_attainment_fraction},
    {"expert_load_bytes", &RunSummary::total_expert_load_bytes},
    {"expert_load_per_request_bytes", &RunSummary::expert_load_per_request_bytes},
    {"hbm_bytes", &RunSummary::total_hbm_bytes},
    {"energy_total_j", &RunSummary::energy_total_j},
    {"energy_static_j", &RunSummary::energy_static_j},
    {"energy_compute_j", &RunSummary::energy_compute_j},
    {"energy_memory_j", &RunSummary::energy_memory_j},
    {"energy_per_token_j", &RunSummary::energy_per_token_j},
    {"mean_decode_batch", &RunSummary::mean_decode_batch},
};

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

RunLabel label_of(const RunConfig& cfg) {
  RunLabel l;
  l.model = cfg.model.name;
  l.hardware = cfg.hardware.name;
  l.policy = to_string(cfg.scheduler.policy);
  l.chunk_size = cfg.scheduler.chunk_size;
  l.group_token_target = cfg.scheduler.group_token_target;
  l.request_rate_rps = cfg.trace ? 0.0 : cfg.workload.request_rate_rps;
  l.seed = cfg.seed;
  return l;
}

nlohmann::ordered_json summary_json(const RunLabel& label, const RunSummary& s) {
  nlohmann::ordered_json j;
  j["model"] = label.model;
  j["hardware"] = label.hardware;
  j["policy"] = label.policy;
  j["chunk_size"] = label.chunk_size;
  j["group_token_target"] = label.group_token_target;
  j["request_rate"] = label.request_rate_rps;
  j["seed"] = label.seed;
  j["num_requests"] = s.num_requests;
  j["num_iterations"] = s.num_iterations;
  for (const auto& f : kFields) j[f.name] = s.*f.member;
  return j;
}

std::vector<std::string> summary_csv_header() {
  std::vector<std::string> h = {"model",        "hardware",    "policy",       "chunk_size",
                                "group_token_target", "request_rate", "seed", "num_requests",
                                "num_iterations"};
  for (const auto& f : kFields) h.emplace_back(f.name);
  return h;
}

std::vector<std::string> summary_csv_row(const RunLabel& label, const RunSummary& s) {
  std::vector<std::string> r = {label.model,
                                label.hardware,
                                label.policy,
                                std::to_string(label.chunk_size),
                                std::to_string(label.group_token_target),
                                format_double(label.request_rate_rps),
                                std::to_string(label.seed),
                                std::to_string(s.num_requests),
                                std::to_string(s.num_iterations)};
  for (const auto& f : kFields) r.push_back(format_double(s.*f.member));
  return r;
}

void write_csv_line(std::ostream& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out << ',';
    out << cells[i];
  }
  out << '\n';
}

void write_event_csv(std::ostream& out, const std::vector<IterationRecord>& iterations) {
  write_csv_line(out, {"index", "start_s", "runtime_s", "decode_batch_size", "decode_kv_tokens",
                       "prefill_tokens", "prefill_token_layers", "designated_group",
                       "expert_load_bytes", "hbm_bytes", "flops", "energy_static_j",
                       "energy_compute_j", "energy_memory_j", "energy_total_j", "kv_used_bytes"});
  for (const auto& r : iterations) {
    write_csv_line(out, {std::to_string(r.index), format_double(r.start_s),
                         format_double(r.runtime_s), std::to_string(r.decode_batch_size),
                         std::to_string(r.decode_kv_tokens), std::to_string(r.prefill_tokens),
                         std::to_string(r.prefill_token_layers),
                         r.designated_group ? std::to_string(*r.designated_group) : "",
                         format_double(r.expert_load_bytes), format_double(r.total_hbm_bytes),
                         format_double(r.total_flops), format_double(r.energy.static_j),
                         format_double(r.energy.compute_j), format_double(r.energy.memory_j),
                         format_double(r.energy.total_j), format_double(r.kv_used_bytes)});
  }
}

void write_request_csv(std::ostream& out, const std::vector<Request>& requests) {
  write_csv_line(out, {"id", "arrival_s", "input_len", "output_len", "admitted_s", "first_token_s",
                       "finish_s", "tokens_emitted"});
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& r : requests) {
    const std::optional<double> finish =
        r.finished() && !r.token_emit_times_s.empty()
            ? std::optional<double>(r.token_emit_times_s.back())
            : std::nullopt;
    write_csv_line(out, {std::to_string(r.id), format_double(r.arrival_s),
                         std::to_string(r.input_len), std::to_string(r.output_len),
                         opt(r.admitted_s), opt(r.first_token_s), opt(finish),
                         std::to_string(r.tokens_emitted())});
  }
}

}  // namespace moesim
