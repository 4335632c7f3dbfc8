#include <gtest/gtest.h>

#include <fstream>

#include "moesim/report.hpp"
#include "moesim/run_config.hpp"
#include "test_support.hpp"

using namespace moesim;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& text) {
  const fs::path dir = fs::temp_directory_path() / "moesim_cfg_test";
  fs::create_directories(dir);
  const fs::path p = dir / name;
  std::ofstream(p) << text;
  return p;
}

std::string refs() {
  const std::string cfg = fx::source_dir().string() + "/configs/";
  return "[model]\nfile = \"" + cfg + "qwen30b.toml\"\n[hardware]\nfile = \"" + cfg +
         "h100x2.toml\"\n";
}

const char* kBody = R"(
[workload]
request_rate = 2.0
num_requests = 10
lengths = "fixed"
input_len = 1000
output_len = 20

[scheduler]
policy = "hybrid"
chunk_size = 1024
group_token_target = 256

[coverage]
model = "uniform"

[slo]
ttft_s = 5.0
tbt_s = 0.1
)";

std::string error_of(const fs::path& p) {
  try {
    load_run_config(p);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(RunConfig, SampleConfigsLoad) {
  for (const auto& entry : fs::directory_iterator(fx::source_dir() / "configs")) {
    const std::string name = entry.path().filename().string();
    if (name.find('_') == std::string::npos) continue;  // model/hardware files
    const RunConfig cfg = load_run_config(entry.path());
    EXPECT_EQ(cfg.seed, 1u) << name;
    EXPECT_FALSE(materialize_requests(cfg).empty()) << name;
  }
  const RunConfig q = load_run_config(fx::config_path("qwen_arxiv_layered.toml"));
  EXPECT_EQ(q.model.num_experts, 128u);
  EXPECT_EQ(q.model.top_k, 8u);
  EXPECT_EQ(q.model.kv_bytes_per_token, 49152.0);
  EXPECT_EQ(q.scheduler.policy, PolicyKind::Layered);
  EXPECT_EQ(q.slo.ttft_slo_s, 10.0);
  EXPECT_EQ(q.slo.tbt_slo_s, 0.125);
}

TEST(RunConfig, InlineSectionsParse) {
  const auto p = write_temp("inline.toml", "seed = 9\n" + refs() + kBody);
  const RunConfig cfg = load_run_config(p);
  EXPECT_EQ(cfg.seed, 9u);
  EXPECT_EQ(cfg.workload.seed, 9u);
  EXPECT_EQ(cfg.scheduler.policy, PolicyKind::Hybrid);
  EXPECT_EQ(cfg.scheduler.chunk_size, 1024u);
  EXPECT_EQ(cfg.scheduler.group_token_target, 256u);
  EXPECT_TRUE(std::holds_alternative<UniformAnalytic>(cfg.coverage));
  const auto& fixed = std::get<FixedLengths>(cfg.workload.lengths);
  EXPECT_EQ(fixed.input, 1000u);
  EXPECT_EQ(materialize_requests(cfg).size(), 10u);
}

TEST(RunConfig, JsonMatchesToml) {
  const std::string cfg = fx::source_dir().string() + "/configs/";
  const auto j = write_temp("same.json", R"({
    "seed": 9,
    "model": {"file": ")" + cfg + R"(qwen30b.toml"},
    "hardware": {"file": ")" + cfg + R"(h100x2.toml"},
    "workload": {"request_rate": 2.0, "num_requests": 10, "lengths": "fixed",
                 "input_len": 1000, "output_len": 20},
    "scheduler": {"policy": "hybrid", "chunk_size": 1024, "group_token_target": 256},
    "coverage": {"model": "uniform"},
    "slo": {"ttft_s": 5.0, "tbt_s": 0.1}
  })");
  const auto t = write_temp("same.toml", "seed = 9\n" + refs() + kBody);
  const Experiment a = run_experiment(load_run_config(j));
  const Experiment b = run_experiment(load_run_config(t));
  EXPECT_EQ(a.result.iterations, b.result.iterations);
}

TEST(RunConfig, MissingSchedulerNamesSection) {
  std::string body = kBody;
  body.erase(body.find("[scheduler]"), body.find("[coverage]") - body.find("[scheduler]"));
  const auto p = write_temp("nosched.toml", "seed = 1\n" + refs() + body);
  const std::string err = error_of(p);
  EXPECT_NE(err.find("scheduler"), std::string::npos) << err;
  EXPECT_NE(err.find(p.string()), std::string::npos) << err;
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
  EXPECT_NE(error_of(write_temp("k.toml", "seed = 1\nextra = 2\n" + refs() + kBody)).find("extra"),
            std::string::npos);
  std::string body = kBody;
  body.replace(body.find("chunk_size = 1024"), 17, "chunk_sise = 1024");
  EXPECT_NE(error_of(write_temp("k2.toml", "seed = 1\n" + refs() + body)).find("chunk_sise"),
            std::string::npos);
  body = kBody;
  body.replace(body.find("\"hybrid\""), 8, "\"fifo\"");
  EXPECT_NE(error_of(write_temp("k3.toml", "seed = 1\n" + refs() + body)).find("policy"),
            std::string::npos);
  EXPECT_NE(error_of(write_temp("k4.toml", refs() + kBody)).find("seed"), std::string::npos);
  EXPECT_NE(error_of(write_temp("k5.toml", "seed = 1\n[model\n")).find("k5.toml"),
            std::string::npos);
}

TEST(RunConfig, ModelValidationSurfacesField) {
  const std::string model = R"(
[model]
num_layers = 4
num_experts = 128
top_k = 200
bytes_per_expert = 1.0
dense_bytes_per_layer = 1.0
flops_per_token_per_expert = 1.0
attn_flops_per_token_per_ctx = 1.0
kv_bytes_per_token = 1.0
hidden_dim = 8
)";
  const std::string cfg = fx::source_dir().string() + "/configs/";
  const auto p = write_temp("badmodel.toml", "seed = 1\n" + model + "[hardware]\nfile = \"" + cfg +
                                                 "h100x2.toml\"\n" + kBody);
  EXPECT_NE(error_of(p).find("top_k out of range"), std::string::npos);
}

TEST(RunConfig, OverridesAndSeeds) {
  RunConfig cfg = load_run_config(fx::config_path("qwen_arxiv_chunked.toml"));
  apply_override(cfg, "chunk_size", "2048");
  EXPECT_EQ(cfg.scheduler.chunk_size, 2048u);
  apply_override(cfg, "policy", "layered");
  EXPECT_EQ(cfg.scheduler.policy, PolicyKind::Layered);
  apply_override(cfg, "request_rate", "1.7");
  EXPECT_EQ(cfg.workload.request_rate_rps, 1.7);
  apply_override(cfg, "group_token_target", "1024");
  EXPECT_EQ(cfg.scheduler.group_token_target, 1024u);
  EXPECT_THROW(apply_override(cfg, "num_layers", "3"), ConfigError);
  EXPECT_THROW(apply_override(cfg, "chunk_size", "12x"), ConfigError);
  EXPECT_THROW(apply_override(cfg, "chunk_size", "0"), ConfigError);
  EXPECT_TRUE(is_sweep_key("request_rate"));
  EXPECT_FALSE(is_sweep_key("seed"));

  cfg.coverage = Sampled{0.5, 0};
  set_seed(cfg, 44);
  EXPECT_EQ(cfg.workload.seed, 44u);
  EXPECT_NE(std::get<Sampled>(cfg.coverage).seed, 0u);
}

TEST(Report, SummaryJsonHasEveryField) {
  RunConfig cfg = load_run_config(fx::config_path("qwen_sharegpt_layered.toml"));
  cfg.workload.num_requests = 20;
  const Experiment e = run_experiment(cfg);
  const auto j = summary_json(label_of(cfg), e.summary);
  const auto header = summary_csv_header();
  ASSERT_EQ(j.size(), header.size());
  std::size_t i = 0;
  for (const auto& [key, value] : j.items()) EXPECT_EQ(key, header[i++]);
  EXPECT_EQ(summary_csv_row(label_of(cfg), e.summary).size(), header.size());
  EXPECT_EQ(j["num_requests"], 20u);
  EXPECT_EQ(j["policy"], "layered");
}

TEST(Report, FormatDoubleRoundTrips) {
  for (const double v : {0.1, 1.0 / 3.0, 1e-300, 123456789.125, 0.0})
    EXPECT_EQ(std::stod(format_double(v)), v);
}
