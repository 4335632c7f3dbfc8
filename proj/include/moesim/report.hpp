// Serialization of run results: summary JSON, summary/sweep CSV rows and the
// per-iteration event log.

#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "moesim/engine.hpp"
#include "moesim/metrics.hpp"
#include "moesim/run_config.hpp"

namespace moesim {

/// Run identity written next to the metrics.
struct RunLabel {
  std::string model;
  std::string hardware;
  std::string policy;
  std::uint32_t chunk_size = 0;
  std::uint32_t group_token_target = 0;
  double request_rate_rps = 0.0;
  std::uint64_t seed = 0;
};

RunLabel label_of(const RunConfig& cfg);

nlohmann::ordered_json summary_json(const RunLabel& label, const RunSummary& summary);

/// Stable column order shared by `summary_csv_row`.
std::vector<std::string> summary_csv_header();
std::vector<std::string> summary_csv_row(const RunLabel& label, const RunSummary& summary);

/// Comma-joined line with a trailing newline.
void write_csv_line(std::ostream& out, const std::vector<std::string>& cells);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

void write_event_csv(std::ostream& out, const std::vector<IterationRecord>& iterations);
void write_request_csv(std::ostream& out, const std::vector<Request>& requests);

}  // namespace moesim
