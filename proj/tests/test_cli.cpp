// Drives the moesim executable end to end.

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "moesim/coverage.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using moesim::fx::config_path;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

fs::path scratch() {
  const fs::path d = fs::temp_directory_path() / "moesim_cli_test";
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome cli(const std::string& args) {
  const fs::path out = scratch() / "stdout.txt", err = scratch() / "stderr.txt";
  const std::string cmd = std::string(MOESIM_CLI) + " " + args + " >" + out.string() + " 2>" +
                          err.string();
  const int status = std::system(cmd.c_str());
  Outcome o;
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  o.out = slurp(out);
  o.err = slurp(err);
  return o;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> v;
  std::stringstream s(text);
  for (std::string l; std::getline(s, l);) v.push_back(l);
  return v;
}

}  // namespace

TEST(Cli, HelpDocumentsFlags) {
  const auto top = cli("--help");
  EXPECT_EQ(top.code, 0);
  for (const char* sub : {"run", "sweep", "coverage", "chunk-bench", "validate"})
    EXPECT_NE(top.out.find(sub), std::string::npos) << sub;
  const auto run = cli("run --help");
  EXPECT_EQ(run.code, 0);
  for (const char* flag : {"--seed", "--out", "--emit-events", "--format"})
    EXPECT_NE(run.out.find(flag), std::string::npos) << flag;
  const auto sweep = cli("sweep --help");
  for (const char* flag : {"--vary", "--values", "--jobs"})
    EXPECT_NE(sweep.out.find(flag), std::string::npos) << flag;
}

TEST(Cli, RunWritesFullSummaryDeterministically) {
  const fs::path a = scratch() / "a.json", b = scratch() / "b.json";
  const fs::path ea = scratch() / "ea.csv", eb = scratch() / "eb.csv";
  const std::string cfg = config_path("qwen_arxiv_layered.toml").string();
  const auto r1 = cli("run " + cfg + " --out " + a.string() + " --emit-events " + ea.string());
  ASSERT_EQ(r1.code, 0) << r1.err;
  EXPECT_NE(r1.out.find("layered"), std::string::npos);
  const auto r2 = cli("run " + cfg + " --out " + b.string() + " --emit-events " + eb.string());
  ASSERT_EQ(r2.code, 0) << r2.err;
  EXPECT_EQ(slurp(a), slurp(b));
  EXPECT_EQ(slurp(ea), slurp(eb));
  EXPECT_EQ(slurp(scratch() / "ea_requests.csv"), slurp(scratch() / "eb_requests.csv"));

  const auto j = nlohmann::json::parse(slurp(a));
  for (const char* key :
       {"num_requests", "num_iterations", "makespan_s", "ttft_mean_s", "ttft_p99_s", "tbt_mean_s",
        "tbt_p99_s", "e2e_latency_mean_s", "slo_attainment", "ttft_attainment", "tbt_attainment",
        "expert_load_bytes", "expert_load_per_request_bytes", "hbm_bytes", "energy_total_j",
        "energy_static_j", "energy_compute_j", "energy_memory_j", "energy_per_token_j",
        "mean_decode_batch"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j["num_requests"], 200);
  EXPECT_EQ(lines(slurp(ea)).size(), j["num_iterations"].get<std::size_t>() + 1);

  const auto r3 = cli("run " + cfg + " --seed 2 --format csv");
  ASSERT_EQ(r3.code, 0);
  EXPECT_EQ(lines(r3.out).size(), 2u);
}

TEST(Cli, ConfigErrorsExitTwoWithPath) {
  const fs::path bad = scratch() / "nosched.toml";
  std::ofstream(bad) << "seed = 1\n[model]\nfile = \"" << config_path("qwen30b.toml").string()
                     << "\"\n[hardware]\nfile = \"" << config_path("h100x2.toml").string()
                     << "\"\n[workload]\nrequest_rate = 1.0\nnum_requests = 2\n"
                        "lengths = \"fixed\"\ninput_len = 10\noutput_len = 2\n"
                        "[coverage]\nmodel = \"table\"\n[slo]\nttft_s = 1.0\ntbt_s = 0.1\n";
  const auto r = cli("run " + bad.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("scheduler"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find(bad.string()), std::string::npos) << r.err;
  EXPECT_EQ(cli("run " + (scratch() / "missing.toml").string()).code, 2);
}

TEST(Cli, HorizonAbortHasOwnExitCode) {
  const fs::path cfg = scratch() / "short.toml";
  std::ofstream(cfg) << "seed = 1\n[model]\nfile = \"" << config_path("qwen30b.toml").string()
                     << "\"\n[hardware]\nfile = \"" << config_path("h100x2.toml").string()
                     << "\"\n[workload]\nrequest_rate = 1.0\nnum_requests = 5\n"
                        "lengths = \"fixed\"\ninput_len = 1000\noutput_len = 200\n"
                        "[scheduler]\npolicy = \"chunked\"\n"
                        "[coverage]\nmodel = \"table\"\n[slo]\nttft_s = 1.0\ntbt_s = 0.1\n"
                        "[engine]\nmax_sim_s = 0.5\n";
  const auto r = cli("run " + cfg.string());
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("max_sim_s"), std::string::npos);
}

TEST(Cli, SweepRowsInInputOrderAndParallelMatchesSerial) {
  const std::string cfg = config_path("qwen_sharegpt_chunked.toml").string();
  const auto serial = cli("sweep " + cfg + " --vary chunk_size --values 2048,512,1024");
  ASSERT_EQ(serial.code, 0) << serial.err;
  const auto rows = lines(serial.out);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].rfind("model,hardware,policy,chunk_size", 0), 0u);
  EXPECT_NE(rows[1].find(",2048,"), std::string::npos);
  EXPECT_NE(rows[2].find(",512,"), std::string::npos);
  EXPECT_NE(rows[1].find(",1,"), std::string::npos);  // seed base + 0
  EXPECT_NE(rows[3].find(",3,"), std::string::npos);  // seed base + 2
  const auto parallel = cli("sweep " + cfg + " --vary chunk_size --values 2048,512,1024 --jobs 3");
  EXPECT_EQ(parallel.out, serial.out);
}

TEST(Cli, SweepRejectsEmptyListAndUnknownKey) {
  const std::string cfg = config_path("qwen_arxiv_chunked.toml").string();
  const auto empty = cli("sweep " + cfg + " --vary chunk_size --values ,");
  EXPECT_NE(empty.code, 0);
  EXPECT_NE(empty.err.find("empty"), std::string::npos);
  const auto unknown = cli("sweep " + cfg + " --vary num_layers --values 1,2");
  EXPECT_NE(unknown.code, 0);
  EXPECT_NE(unknown.err.find("num_layers"), std::string::npos);
}

TEST(Cli, CoverageTable) {
  const auto r = cli("coverage --batch-sizes 1,2,4,8,16,32,64,128,256,512 --trials 200");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines(r.out);
  ASSERT_EQ(rows.size(), 11u);
  EXPECT_EQ(rows[0], "batch_size,analytic,sampled,table,skew");
  EXPECT_EQ(rows[1].rfind("1,0.0625,0.0625,0.0625,", 0), 0u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto b = std::stoull(rows[i].substr(0, rows[i].find(',')));
    const double analytic = std::stod(rows[i].substr(rows[i].find(',') + 1));
    EXPECT_NEAR(analytic, moesim::expected_coverage_uniform(b, 8, 128), 1e-12);
  }
  const auto m = cli("coverage --model " + config_path("gptoss20b.toml").string() +
                     " --batch-sizes 1 --format json");
  ASSERT_EQ(m.code, 0);
  EXPECT_EQ(nlohmann::json::parse(m.out)[0]["analytic"], 0.125);
}

TEST(Cli, ChunkBench) {
  const auto r = cli("chunk-bench --model " + config_path("qwen30b.toml").string() + " --hw " +
                     config_path("h100x2.toml").string() + " --chunk-sizes 512,4096,8192");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines(r.out);
  ASSERT_EQ(rows.size(), 4u);
  auto moe = [&](std::size_t i) {
    std::stringstream s(rows[i]);
    std::string cell;
    for (int c = 0; c < 3; ++c) std::getline(s, cell, ',');
    return std::stod(cell);
  };
  EXPECT_GT(moe(1), moe(2));
  EXPECT_GT(moe(2), moe(3));
}

TEST(Cli, Validate) {
  const auto r = cli("validate " + config_path("gptoss_arxiv_layered.toml").string());
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("ok"), std::string::npos);
}
