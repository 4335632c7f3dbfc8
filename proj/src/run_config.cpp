#include "moesim/run_config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>
#include <toml.hpp>

namespace moesim {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json from_toml(const toml::node& node);

json from_toml_table(const toml::table& table) {
  json out = json::object();
  for (const auto& [key, value] : table) out[std::string(key.str())] = from_toml(value);
  return out;
}

json from_toml(const toml::node& node) {
  if (const auto* t = node.as_table()) return from_toml_table(*t);
  if (const auto* a = node.as_array()) {
    json out = json::array();
    for (const auto& v : *a) out.push_back(from_toml(v));
    return out;
  }
  if (const auto* v = node.as_integer()) {
    if (v->get() >= 0) return static_cast<std::uint64_t>(v->get());
    return v->get();
  }
  if (const auto* v = node.as_floating_point()) return v->get();
  if (const auto* v = node.as_boolean()) return v->get();
  if (const auto* v = node.as_string()) return v->get();
  throw std::runtime_error("unsupported TOML value type");
}

json read_document(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  try {
    if (path.extension() == ".json") return json::parse(text);
    return from_toml_table(toml::parse(text, path.string()));
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << path.string() << ":" << e.source().begin.line << ": " << e.description();
    throw ConfigError(msg.str());
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

// Typed access to one section with unknown-key detection.
class Section {
 public:
  Section(const fs::path& path, std::string name, const json& body)
      : path_(path), name_(std::move(name)), body_(body) {
    if (!body_.is_object()) fail("", "must be a table");
  }

  bool has(const std::string& key) {
    used_.insert(key);
    return body_.contains(key);
  }

  double number(const std::string& key) {
    const json& v = need(key);
    if (!v.is_number()) fail(key, "must be a number");
    return v.get<double>();
  }
  double number(const std::string& key, double fallback) {
    return has(key) ? number(key) : fallback;
  }

  std::uint64_t integer(const std::string& key) {
    const json& v = need(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return v.get<std::uint64_t>();
    fail(key, "must be a non-negative integer");
  }
  std::uint32_t u32(const std::string& key) {
    const std::uint64_t v = integer(key);
    if (v > std::numeric_limits<std::uint32_t>::max()) fail(key, "out of range");
    return static_cast<std::uint32_t>(v);
  }
  std::uint32_t u32(const std::string& key, std::uint32_t fallback) {
    return has(key) ? u32(key) : fallback;
  }

  std::string string(const std::string& key) {
    const json& v = need(key);
    if (!v.is_string()) fail(key, "must be a string");
    return v.get<std::string>();
  }
  std::string string(const std::string& key, const std::string& fallback) {
    return has(key) ? string(key) : fallback;
  }

  fs::path file(const std::string& key) {
    fs::path p = string(key);
    if (p.is_relative()) p = path_.parent_path() / p;
    return p;
  }

  const json& raw(const std::string& key) { return need(key); }

  void finish() const {
    for (const auto& [key, _] : body_.items())
      if (!used_.count(key)) fail(key, "unknown key");
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    std::string where = name_;
    if (!key.empty()) where += where.empty() ? key : "." + key;
    throw ConfigError(path_.string() + ": " + where + ": " + what);
  }

 private:
  const json& need(const std::string& key) {
    used_.insert(key);
    if (!body_.contains(key)) fail(key, "missing required key");
    return body_.at(key);
  }

  fs::path path_;
  std::string name_;
  const json& body_;
  std::set<std::string> used_;
};

const json& section_body(const fs::path& path, const json& doc, const std::string& name) {
  if (!doc.contains(name)) throw ConfigError(path.string() + ": missing section [" + name + "]");
  return doc.at(name);
}

ModelSpec parse_model(Section& s) {
  ModelSpec m;
  m.name = s.string("name", m.name);
  m.num_layers = s.u32("num_layers");
  m.num_experts = s.u32("num_experts");
  m.top_k = s.u32("top_k");
  m.bytes_per_expert = s.number("bytes_per_expert");
  m.dense_bytes_per_layer = s.number("dense_bytes_per_layer");
  m.flops_per_token_per_expert = s.number("flops_per_token_per_expert");
  m.attn_flops_per_token_per_ctx = s.number("attn_flops_per_token_per_ctx");
  m.kv_bytes_per_token = s.number("kv_bytes_per_token");
  m.hidden_dim = s.u32("hidden_dim");
  m.dtype_bytes = s.u32("dtype_bytes", m.dtype_bytes);
  m.head_bytes = s.number("head_bytes", m.head_bytes);
  return m;
}

HardwareSpec parse_hardware(Section& s) {
  HardwareSpec h;
  h.name = s.string("name", h.name);
  h.peak_flops = s.number("peak_flops");
  h.peak_hbm_bw = s.number("peak_hbm_bw");
  h.mfu = s.number("mfu", h.mfu);
  h.mbu = s.number("mbu", h.mbu);
  h.static_power_w = s.number("static_power_w");
  h.energy_per_flop_j = s.number("energy_per_flop_j");
  h.energy_per_hbm_byte_j = s.number("energy_per_hbm_byte_j");
  h.kv_capacity_bytes = s.number("kv_capacity_bytes");
  return h;
}

template <class T>
T validated(const fs::path& path, const std::string& section, T value,
            const T& (*check)(const T&)) {
  try {
    check(value);
  } catch (const ValidationError& e) {
    throw ConfigError(path.string() + ": [" + section + "] " + e.what());
  }
  return value;
}

// A section that is either inline or `file = "..."` pointing at another config
// file holding the same section.
template <class T>
T parse_ref(const fs::path& path, const json& doc, const std::string& name,
            T (*parse)(Section&), const T& (*check)(const T&)) {
  Section s(path, name, section_body(path, doc, name));
  if (s.has("file")) {
    const fs::path other = s.file("file");
    s.finish();
    const json other_doc = read_document(other);
    return parse_ref(other, other_doc, name, parse, check);
  }
  T value = parse(s);
  s.finish();
  return validated(path, name, value, check);
}

LengthDistribution parse_lengths(Section& s) {
  const std::string kind = s.string("lengths", "lognormal");
  if (kind == "lognormal")
    return LogNormalLengths{s.number("input_mean"), s.number("input_std"), s.number("output_mean"),
                            s.number("output_std")};
  if (kind == "fixed") return FixedLengths{s.u32("input_len"), s.u32("output_len")};
  if (kind == "empirical") {
    EmpiricalLengths e;
    const json& pairs = s.raw("pairs");
    if (!pairs.is_array()) s.fail("pairs", "must be an array of [input, output] pairs");
    for (const auto& p : pairs) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_number_unsigned() ||
          !p[1].is_number_unsigned())
        s.fail("pairs", "each entry must be [input_len, output_len]");
      e.pairs.emplace_back(p[0].get<std::uint32_t>(), p[1].get<std::uint32_t>());
    }
    return e;
  }
  s.fail("lengths", "expected lognormal, fixed or empirical, got '" + kind + "'");
}

CoverageModel parse_coverage(Section& s) {
  const std::string kind = s.string("model", "table");
  if (kind == "uniform") return UniformAnalytic{};
  if (kind == "table") {
    if (s.has("table_file")) return load_coverage_table(s.file("table_file"));
    return measured_coverage_table();
  }
  if (kind == "sampled") return Sampled{s.number("skew", 0.0), 0};
  s.fail("model", "expected table, uniform or sampled, got '" + kind + "'");
}

std::uint64_t coverage_seed(std::uint64_t seed) { return seed ^ 0xC2B2AE3D27D4EB4FULL; }

}  // namespace

ModelSpec load_model_spec(const fs::path& path) {
  return parse_ref(path, read_document(path), "model", parse_model, validate_model);
}

HardwareSpec load_hardware_spec(const fs::path& path) {
  return parse_ref(path, read_document(path), "hardware", parse_hardware, validate_hardware);
}

RunConfig load_run_config(const fs::path& path) {
  const json doc = read_document(path);
  if (!doc.is_object()) throw ConfigError(path.string() + ": top level must be a table");
  static const std::set<std::string> known = {"seed",      "model",    "hardware", "workload",
                                              "scheduler", "coverage", "slo",      "engine",
                                              "output"};
  for (const auto& [key, _] : doc.items())
    if (!known.count(key)) throw ConfigError(path.string() + ": unknown top-level key '" + key + "'");

  RunConfig cfg;
  cfg.source = path;
  if (!doc.contains("seed")) throw ConfigError(path.string() + ": missing top-level key 'seed'");
  if (!doc.at("seed").is_number_unsigned())
    throw ConfigError(path.string() + ": seed must be a non-negative integer");

  cfg.model = parse_ref(path, doc, "model", parse_model, validate_model);
  cfg.hardware = parse_ref(path, doc, "hardware", parse_hardware, validate_hardware);

  {
    Section s(path, "workload", section_body(path, doc, "workload"));
    if (s.has("trace")) {
      cfg.trace = s.file("trace");
    } else {
      cfg.workload.request_rate_rps = s.number("request_rate");
      if (s.has("duration_s")) cfg.workload.duration_s = s.number("duration_s");
      if (s.has("num_requests")) cfg.workload.num_requests = s.integer("num_requests");
      cfg.workload.lengths = parse_lengths(s);
      try {
        validate_workload(cfg.workload);
      } catch (const ValidationError& e) {
        throw ConfigError(path.string() + ": [workload] " + e.what());
      }
    }
    s.finish();
  }
  {
    Section s(path, "scheduler", section_body(path, doc, "scheduler"));
    try {
      cfg.scheduler.policy = parse_policy(s.string("policy"));
    } catch (const ValidationError& e) {
      s.fail("policy", e.what());
    }
    cfg.scheduler.chunk_size = s.u32("chunk_size", cfg.scheduler.chunk_size);
    cfg.scheduler.group_token_target = s.u32("group_token_target", cfg.scheduler.group_token_target);
    s.finish();
    validated(path, "scheduler", cfg.scheduler, validate_scheduler);
  }
  {
    Section s(path, "coverage", section_body(path, doc, "coverage"));
    cfg.coverage = parse_coverage(s);
    s.finish();
    try {
      validate_coverage_model(cfg.coverage);
    } catch (const ValidationError& e) {
      throw ConfigError(path.string() + ": [coverage] " + e.what());
    }
  }
  {
    Section s(path, "slo", section_body(path, doc, "slo"));
    cfg.slo.ttft_slo_s = s.number("ttft_s");
    cfg.slo.tbt_slo_s = s.number("tbt_s");
    s.finish();
    validated(path, "slo", cfg.slo, validate_slo);
  }
  if (doc.contains("engine")) {
    Section s(path, "engine", doc.at("engine"));
    cfg.engine.max_sim_s = s.number("max_sim_s", cfg.engine.max_sim_s);
    s.finish();
    if (!(cfg.engine.max_sim_s > 0.0)) s.fail("max_sim_s", "must be > 0");
  }
  if (doc.contains("output")) {
    Section s(path, "output", doc.at("output"));
    if (s.has("summary")) cfg.output.summary = s.file("summary");
    if (s.has("events")) cfg.output.events = s.file("events");
    s.finish();
  }
  set_seed(cfg, doc.at("seed").get<std::uint64_t>());
  return cfg;
}

void set_seed(RunConfig& cfg, std::uint64_t seed) {
  cfg.seed = seed;
  cfg.workload.seed = seed;
  if (auto* s = std::get_if<Sampled>(&cfg.coverage)) s->seed = coverage_seed(seed);
}

bool is_sweep_key(const std::string& key) {
  return key == "request_rate" || key == "chunk_size" || key == "group_token_target" ||
         key == "policy";
}

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
  auto parse_number = [&]() {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != value.size() || value.empty())
      throw ConfigError("--vary " + key + ": '" + value + "' is not a number");
    return v;
  };
  auto parse_u32 = [&]() {
    const double v = parse_number();
    if (!(v >= 1.0 && v <= 4294967295.0) || v != std::floor(v))
      throw ConfigError("--vary " + key + ": '" + value + "' is not a positive integer");
    return static_cast<std::uint32_t>(v);
  };
  if (key == "request_rate") {
    if (cfg.trace) throw ConfigError("--vary request_rate: config replays a fixed trace");
    cfg.workload.request_rate_rps = parse_number();
    validate_workload(cfg.workload);
  } else if (key == "chunk_size") {
    cfg.scheduler.chunk_size = parse_u32();
  } else if (key == "group_token_target") {
    cfg.scheduler.group_token_target = parse_u32();
  } else if (key == "policy") {
    cfg.scheduler.policy = parse_policy(value);
  } else {
    throw ConfigError("unknown sweep key '" + key +
                      "' (expected request_rate, chunk_size, group_token_target or policy)");
  }
  validate_scheduler(cfg.scheduler);
}

std::vector<Request> materialize_requests(const RunConfig& cfg) {
  if (cfg.trace) return load_trace(*cfg.trace);
  return generate_requests(cfg.workload);
}

Experiment run_experiment(const RunConfig& cfg, const IterationObserver& observer) {
  EngineOptions opts = cfg.engine;
  if (!cfg.trace && cfg.workload.duration_s && !cfg.workload.num_requests)
    opts.horizon_s = *cfg.workload.duration_s;
  Experiment out;
  out.result = run(cfg.model, cfg.hardware, cfg.scheduler, materialize_requests(cfg), cfg.coverage,
                   opts, observer);
  out.summary = summarize(out.result, cfg.slo);
  return out;
}

}  // namespace moesim
