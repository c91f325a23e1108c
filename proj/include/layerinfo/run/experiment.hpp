#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "layerinfo/eval/metrics.hpp"
#include "layerinfo/li/li_core.hpp"
#include "layerinfo/run/config.hpp"

namespace layerinfo::run {

// One per-example score as dumped to scores.csv.
struct ScoreRow {
  std::string example_id;
  std::string template_id;
  std::string method;
  bool answerable = false;
  double value = 0.0;
  bool flagged = false;
};

struct CalibrationResult {
  std::size_t train_size = 0;
  std::optional<double> weight;
  std::optional<double> bias;
  std::optional<double> ece;
  std::string reason;  // why the fields above are empty
};

struct MethodReport {
  std::string method;
  std::string template_id;
  std::size_t count = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::optional<double> auroc;
  std::map<std::string, eval::RejectionResult> rejection;  // keyed by fraction, e.g. "0.1"
  std::optional<eval::GroupMeans> groups;
  std::vector<CalibrationResult> calibration;
  eval::OverheadCounter cost;
  std::size_t reference_tokens = 0;  // one with-context pass per example
  std::optional<double> overhead_ratio;
  std::string insufficient;  // set when metrics are undefined
};

struct FailureRecord {
  std::string example_id;
  std::string template_id;
  std::string method;
  std::string reason;
};

struct EvalReport {
  nlohmann::json config;
  std::string config_hash;
  std::string model_id;
  int num_layers = 0;
  int vocab_size = 0;
  std::size_t examples_loaded = 0;
  std::size_t records_skipped = 0;
  std::size_t examples_used = 0;
  std::vector<FailureRecord> failures;  // flagged renderings and per-example errors
  std::vector<MethodReport> methods;
  std::vector<ScoreRow> scores;
  std::vector<li::LIProfile> profiles;
  std::map<std::string, bool> answerable;  // example id -> label
};

struct RunStats {
  std::size_t cache_hits = 0;
  std::size_t cache_misses = 0;
};

// Loads model and data, computes every requested score (cache first), the
// metrics per (method, template), and writes report.json, scores.csv and
// profiles.csv into config.output_dir.
EvalReport run_experiment(const RunConfig& config, RunStats* stats = nullptr);

// Summary JSON (metrics, counters, failures) with canonical key order.
nlohmann::json report_summary(const EvalReport& report);

void write_report(const EvalReport& report, const std::filesystem::path& dir);

// Rebuilds a report from a run directory's report.json and per-example dumps.
EvalReport load_report(const std::filesystem::path& dir);

// Metrics for one scored set, as in the report.
MethodReport evaluate_scores(const eval::ScoredSet& set, const RunConfig& config);

// Minimal RFC 4180 helpers used for the dumps.
std::string csv_field(const std::string& s);
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path);
std::string format_double(double v);

}  // namespace layerinfo::run
