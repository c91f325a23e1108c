// layerinfo: experiment runner for layer-wise usable information.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "layerinfo/data/datasets.hpp"
#include "layerinfo/error.hpp"
#include "layerinfo/eval/metrics.hpp"
#include "layerinfo/li/li_core.hpp"
#include "layerinfo/oracle/desk_oracle.hpp"
#include "layerinfo/run/config.hpp"
#include "layerinfo/run/experiment.hpp"
#include "layerinfo/run/figures.hpp"

namespace {

using namespace layerinfo;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct RunArgs {
  std::string config_path;
  std::string model, dataset, format, methods, layers, out, policy;
  std::vector<std::string> templates;
  std::vector<double> reject;
  std::optional<std::uint64_t> seed;
  std::optional<double> balance;
  std::optional<std::size_t> max_examples;
  bool no_cache = false;
};

int cmd_run(const RunArgs& a) {
  run::RunConfig cfg = a.config_path.empty() ? run::RunConfig{} : run::RunConfig::load(a.config_path);
  if (!a.model.empty()) cfg.model_id = a.model;
  if (!a.dataset.empty()) cfg.dataset_path = a.dataset;
  if (!a.format.empty()) cfg.dataset_format = a.format;
  if (!a.templates.empty()) {
    cfg.templates.clear();
    for (const auto& t : a.templates) cfg.templates.push_back(data::PromptTemplate::builtin(t));
  }
  if (!a.methods.empty()) cfg.methods = split_list(a.methods);
  if (!a.layers.empty()) {
    cfg.layers.clear();
    if (a.layers != "all") {
      for (const auto& l : split_list(a.layers)) cfg.layers.push_back(std::stoi(l));
    }
  }
  if (!a.policy.empty()) cfg.head_norm_policy = a.policy;
  if (!a.reject.empty()) cfg.reject_fractions = a.reject;
  if (a.seed) cfg.seed = *a.seed;
  if (a.balance) cfg.balance_ratio = *a.balance;
  if (a.max_examples) cfg.max_examples = *a.max_examples;
  if (!a.out.empty()) cfg.output_dir = a.out;
  if (a.no_cache) cfg.use_cache = false;

  run::RunStats stats;
  const auto report = run::run_experiment(cfg, &stats);
  spdlog::info("cache: {} hit(s), {} miss(es)", stats.cache_hits, stats.cache_misses);
  std::printf("%-18s %-14s %5s %8s %9s\n", "method", "template", "n", "AUROC", "delta");
  for (const auto& m : report.methods) {
    std::printf("%-18s %-14s %5zu %8s %9s\n", m.method.c_str(), m.template_id.c_str(), m.count,
                m.auroc ? std::to_string(*m.auroc).substr(0, 6).c_str() : "-",
                m.groups ? std::to_string(m.groups->delta).substr(0, 7).c_str() : "-");
  }
  std::printf("wrote %s/report.json\n", cfg.output_dir.c_str());
  return 0;
}

int cmd_report(const std::string& dir, const std::string& kinds, const std::string& out) {
  const auto report = run::load_report(dir);
  std::set<run::FigureKind> ks;
  for (const auto& k : split_list(kinds)) ks.insert(run::parse_figure_kind(k));
  for (const auto& p : run::emit_figures(report, ks, out.empty() ? std::filesystem::path(dir) / "figures" : std::filesystem::path(out))) {
    std::printf("%s\n", p.string().c_str());
  }
  return 0;
}

// Reads (value, label) pairs from a CSV with a header naming "value" and
// either "label" or "answerable"; an optional "method" column filters rows.
eval::ScoredSet read_scores(const std::string& path, const std::string& method, const std::string& tmpl) {
  const auto rows = run::read_csv(path);
  if (rows.empty()) throw LoadError(path + " is empty");
  auto col = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < rows[0].size(); ++i) {
      if (rows[0][i] == name) return static_cast<int>(i);
    }
    return -1;
  };
  const int v = col("value");
  const int l = col("label") >= 0 ? col("label") : col("answerable");
  const int m = col("method");
  const int t = col("template_id");
  const int id = col("example_id");
  if (v < 0 || l < 0) throw LoadError(path + " needs 'value' and 'label' (or 'answerable') columns");
  eval::ScoredSet set;
  set.method = method;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (!method.empty() && m >= 0 && row[static_cast<std::size_t>(m)] != method) continue;
    if (!tmpl.empty() && t >= 0 && row[static_cast<std::size_t>(t)] != tmpl) continue;
    set.items.push_back({id >= 0 ? row[static_cast<std::size_t>(id)] : std::to_string(r),
                         std::stod(row[static_cast<std::size_t>(v)]), row[static_cast<std::size_t>(l)] == "1"});
  }
  if (set.items.empty()) throw InsufficientData("no rows selected from " + path);
  return set;
}

int cmd_calibrate(const std::string& train, const std::string& test, const std::string& method,
                  const std::string& tmpl, int bins) {
  const auto cal = eval::fit_calibrator(read_scores(train, method, tmpl));
  const auto eval_set = read_scores(test, method, tmpl);
  std::vector<eval::ProbLabel> pl;
  for (const auto& it : eval_set.items) pl.push_back({cal.probability(it.value), it.label});
  std::printf("weight %.10g\nbias %.10g\ntrained_on %zu\nevaluated_on %zu\nece %.10g\n", cal.weight, cal.bias,
              cal.trained_on, pl.size(), eval::ece(pl, bins));
  return 0;
}

int cmd_oracle_check(int pairs, std::uint64_t seed, double tolerance) {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(seed);
  const std::string alphabet = "abcdefghijklmnopqrstuvwxyz ";
  auto text = [&](int n) {
    std::string s;
    for (int i = 0; i < n; ++i) s.push_back(alphabet[rng() % alphabet.size()]);
    return s;
  };
  double worst = 0.0;
  int checked = 0;
  for (int i = 0; i < pairs; ++i) {
    oracle::ToyModelSpec spec;
    spec.num_layers = 1 + static_cast<int>(rng() % 2);
    spec.seed = rng() % 1000;
    const auto policy = rng() % 2 ? model::HeadNormPolicy::raw_hidden : model::HeadNormPolicy::apply_final_norm;
    const auto m = oracle::build_toy_model(spec, policy);
    data::Example ex;
    ex.example_id = "pair" + std::to_string(i);
    ex.context = text(5 + static_cast<int>(rng() % 40));
    ex.question = text(1 + static_cast<int>(rng() % 12)) + "?";
    const auto pair = data::render_pair(ex, data::PromptTemplate::none(), m);
    const auto got = li::li_profile(m, pair);
    const auto want = oracle::brute_force_li(m, pair);
    for (std::size_t l = 0; l < got.i_layer.size(); ++l) {
      worst = std::max({worst, std::abs(got.i_layer[l] - want.i_layer[l]), std::abs(got.h_null[l] - want.h_null[l]),
                        std::abs(got.h_ctx[l] - want.h_ctx[l])});
    }
    worst = std::max(worst, std::abs(got.li_total - want.li_total));
    ++checked;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool ok = worst <= tolerance;
  std::printf("%s oracle agreement: %d pairs, max deviation %.3g bits/token (tolerance %.3g), %.2f s\n",
              ok ? "PASS" : "FAIL", checked, worst, tolerance, secs);
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layer-wise usable information experiments"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

  RunArgs ra;
  auto* run = app.add_subcommand("run", "Score a dataset and write report, dumps and cache");
  run->add_option("config", ra.config_path, "JSON run configuration");
  run->add_option("--model", ra.model, "model directory, tiny-lm or toy:L:V:W:seed");
  run->add_option("--dataset", ra.dataset, "dataset file");
  run->add_option("--format", ra.format, "coqa_like, quac_like, condaqa_like or generic_jsonl");
  run->add_option("--template", ra.templates, "none, open_ended, binary or certainty (repeatable)");
  run->add_option("--methods", ra.methods, "comma-separated methods");
  run->add_option("--reject", ra.reject, "rejection fractions")->delimiter(',');
  run->add_option("--layers", ra.layers, "\"all\" or comma-separated layer indices");
  run->add_option("--head-norm", ra.policy, "apply_final_norm or raw_hidden");
  run->add_option("--seed", ra.seed, "seed for balancing, demos and sampling");
  run->add_option("--balance", ra.balance, "answerable:unanswerable ratio (0 keeps all)");
  run->add_option("--max-examples", ra.max_examples, "cap on examples after balancing");
  run->add_option("--out", ra.out, "output directory");
  run->add_flag("--no-cache", ra.no_cache, "ignore and do not write the score cache");

  std::string report_dir, kinds = "distribution,per_layer,cumulative,bar_auroc", fig_out;
  auto* report = app.add_subcommand("report", "Emit figures from a run directory");
  report->add_option("run_dir", report_dir, "directory written by run")->required();
  report->add_option("--kinds", kinds, "comma-separated figure kinds");
  report->add_option("--out", fig_out, "figure directory (default <run_dir>/figures)");

  std::string train, test, method, tmpl;
  int bins = 10;
  auto* calibrate = app.add_subcommand("calibrate", "Fit a logistic calibrator and report ECE");
  calibrate->add_option("--train", train, "CSV of scores for fitting")->required();
  calibrate->add_option("--eval", test, "CSV of scores for evaluation")->required();
  calibrate->add_option("--method", method, "keep rows of this method only");
  calibrate->add_option("--template", tmpl, "keep rows of this template only");
  calibrate->add_option("--bins", bins, "ECE bins");

  int pairs = 100;
  std::uint64_t oracle_seed = 0;
  double tolerance = 1e-6;
  auto* oracle_cmd = app.add_subcommand("oracle-check", "Compare li-core against the brute-force oracle");
  oracle_cmd->add_option("--pairs", pairs, "number of random toy pairs");
  oracle_cmd->add_option("--seed", oracle_seed, "seed");
  oracle_cmd->add_option("--tolerance", tolerance, "bits/token");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));
  try {
    if (*run) return cmd_run(ra);
    if (*report) return cmd_report(report_dir, kinds, fig_out);
    if (*calibrate) return cmd_calibrate(train, test, method, tmpl, bins);
    if (*oracle_cmd) return cmd_oracle_check(pairs, oracle_seed, tolerance);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
