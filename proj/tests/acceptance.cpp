// Acceptance checks, one PASS/FAIL/SKIP line per criterion. Criteria 7 and 8
// need a real instruct model and a QuAC-style slice:
//   LAYERINFO_INSTRUCT_MODEL  model directory (config.json, safetensors, tokenizer.json)
//   LAYERINFO_QUAC            QuAC-style JSON file
// They are reported but never fail the run.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#include "layerinfo/baselines/baselines.hpp"
#include "layerinfo/data/datasets.hpp"
#include "layerinfo/eval/metrics.hpp"
#include "layerinfo/li/li_core.hpp"
#include "layerinfo/oracle/desk_oracle.hpp"
#include "layerinfo/run/experiment.hpp"

using namespace layerinfo;
namespace fs = std::filesystem;

namespace {

const fs::path kData = LAYERINFO_TEST_DATA;

int hard_failures = 0;
// Printed in criterion order once everything has run.
std::map<int, std::string> lines;

void report(int id, const std::string& name, bool ok, const std::string& detail, bool soft = false) {
  lines[id] = std::string(ok ? "PASS" : "FAIL") + " criterion " + std::to_string(id) + " " + name + ": " + detail +
              (soft ? " (soft gate)" : "");
  if (!ok && !soft) ++hard_failures;
}

void skip(int id, const std::string& name, const std::string& why) {
  lines[id] = "SKIP criterion " + std::to_string(id) + " " + name + ": " + why;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path workdir(const std::string& name) {
  const auto p = fs::current_path() / "acceptance_runs" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string random_text(std::mt19937_64& rng, int n) {
  static const std::string alphabet = "abcdefghijklmnopqrstuvwxyz   .,?";
  std::string s;
  for (int i = 0; i < n; ++i) s.push_back(alphabet[rng() % alphabet.size()]);
  return s;
}

std::vector<li::LIProfile> all_profiles;

void criterion1() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(0);
  const std::vector<data::PromptTemplate> templates = {data::PromptTemplate::none(), data::PromptTemplate::binary(),
                                                       data::PromptTemplate::open_ended(),
                                                       data::PromptTemplate::certainty()};
  double worst = 0.0;
  int pairs = 0;
  for (int i = 0; i < 100; ++i) {
    oracle::ToyModelSpec spec;
    spec.num_layers = 1 + static_cast<int>(rng() % 2);
    spec.vocab = 8 + static_cast<int>(rng() % 57);
    spec.width = 4 + 2 * static_cast<int>(rng() % 15);
    spec.seed = rng();
    const auto m = oracle::build_toy_model(spec);
    data::Example ex;
    ex.example_id = "pair" + std::to_string(i);
    ex.context = random_text(rng, 10 + static_cast<int>(rng() % 60));
    ex.question = random_text(rng, 4 + static_cast<int>(rng() % 20)) + "?";
    const auto outcome = data::try_render_pair(ex, templates[rng() % templates.size()], m);
    if (!outcome.pair) continue;
    const auto fast = li::li_profile(m, *outcome.pair);
    const auto slow = oracle::brute_force_li(m, *outcome.pair);
    for (std::size_t l = 0; l < fast.i_layer.size(); ++l) {
      worst = std::max({worst, std::abs(fast.i_layer[l] - slow.i_layer[l]), std::abs(fast.h_null[l] - slow.h_null[l]),
                        std::abs(fast.h_ctx[l] - slow.h_ctx[l])});
    }
    all_profiles.push_back(fast);
    ++pairs;
  }
  const double secs = seconds_since(start);
  report(1, "oracle equivalence", pairs == 100 && worst <= 1e-6 && secs < 60.0,
         std::to_string(pairs) + " pairs, max deviation " + fmt("%.3g bits/token, %.2f s", worst, secs));
}

std::vector<model::ModelHandle> fixture_models() {
  std::vector<model::ModelHandle> out = {model::load_model("tiny-lm")};
  for (const char* name : {"tiny-llama", "tiny-qwen2", "tiny-phi3", "tiny-gpt2"}) {
    out.push_back(model::load_model((kData / "models" / name).string()));
  }
  return out;
}

void criterion2() {
  const auto questions = data::load_dataset(kData / "datasets" / "coqa_like.json", data::DatasetFormat::coqa_like);
  std::size_t checked = 0, nonzero = 0;
  for (const auto& m : fixture_models()) {
    for (std::size_t i = 0; i < 20; ++i) {
      data::Example ex = questions[(i * 7) % questions.size()];
      ex.context.clear();
      for (const auto& t : {data::PromptTemplate::none(), data::PromptTemplate::binary()}) {
        const auto p = li::li_profile(m, data::render_pair(ex, t, m));
        for (double v : p.i_layer) nonzero += v != 0.0;
        nonzero += p.li_total != 0.0;
        all_profiles.push_back(p);
        ++checked;
      }
    }
  }
  report(2, "null identity", nonzero == 0,
         std::to_string(checked) + " empty-context profiles over 5 models, " + std::to_string(nonzero) +
             " nonzero values");
}

// Runs after criterion 6 so its profiles are included.
void criterion3() {
  std::size_t bad = 0;
  for (const auto& p : all_profiles) {
    if (li::cumulative_li(p, p.layer_ids.back()) != p.li_total) ++bad;
    if (li::pvi_at_layer(p, li::LayerChoice::last()) != p.i_layer.back()) ++bad;
  }
  report(3, "definitional sums", bad == 0 && !all_profiles.empty(),
         std::to_string(all_profiles.size()) + " profiles, " + std::to_string(bad) + " mismatches");
}

double pairwise_auroc(const std::vector<double>& v, const std::vector<int>& l) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (l[i] != 1) continue;
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (l[j] != 0) continue;
      pairs += 1.0;
      wins += v[i] > v[j] ? 1.0 : v[i] == v[j] ? 0.5 : 0.0;
    }
  }
  return wins / pairs;
}

void criterion4() {
  std::mt19937_64 rng(4);
  double worst = 0.0, worst_sym = 0.0, worst_mono = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 99;
    std::vector<double> v(n);
    std::vector<int> l(n), flipped(n);
    std::normal_distribution<double> g(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      v[i] = g(rng);
      l[i] = static_cast<int>(rng() % 2);
    }
    // Ties: copy a few values onto other positions.
    for (std::size_t t = 0; t < n / 4; ++t) v[rng() % n] = v[rng() % n];
    l[0] = 0;
    l[1] = 1;
    for (std::size_t i = 0; i < n; ++i) flipped[i] = 1 - l[i];
    std::vector<double> mono(n);
    for (std::size_t i = 0; i < n; ++i) mono[i] = 2.0 * v[i] * v[i] * v[i] + 5.0;
    const double a = eval::auroc(eval::ScoredSet::from(v, l));
    worst = std::max(worst, std::abs(a - pairwise_auroc(v, l)));
    worst_sym = std::max(worst_sym, std::abs(eval::auroc(eval::ScoredSet::from(v, flipped)) - (1.0 - a)));
    worst_mono = std::max(worst_mono, std::abs(eval::auroc(eval::ScoredSet::from(mono, l)) - a));
  }
  report(4, "AUROC correctness", worst <= 1e-12 && worst_sym <= 1e-12 && worst_mono <= 1e-12,
         "200 instances, max |sort - pairwise| " + fmt("%.3g, complement %.3g, monotone %.3g", worst, worst_sym, worst_mono));
}

void criterion5() {
  const std::vector<eval::ProbLabel> two = {{0.2, false}, {0.2, false}, {0.8, true}, {0.8, true}};
  const std::vector<eval::ProbLabel> perfect = {{0.0, false}, {0.0, false}, {1.0, true}};
  const double a = eval::ece(two, 10);
  const double b = eval::ece(perfect, 10);
  report(5, "ECE correctness", std::abs(a - 0.2) <= 1e-12 && b == 0.0, fmt("2-bin case %.17g, perfect %.17g", a, b));
}

void criterion6() {
  const auto dir = workdir("overhead");
  run::RunConfig cfg;
  cfg.model_id = (kData / "models" / "tiny-llama").string();
  cfg.dataset_path = (kData / "datasets" / "coqa_like.json").string();
  cfg.dataset_format = "coqa_like";
  cfg.methods = {"li"};
  cfg.output_dir = (dir / "run").string();
  cfg.use_cache = false;
  const auto r = run::run_experiment(cfg);
  all_profiles.insert(all_profiles.end(), r.profiles.begin(), r.profiles.end());

  // Slice statistics in model tokens.
  const auto m = model::load_model(cfg.model_id);
  const auto examples = data::load_dataset(cfg.dataset_path, data::DatasetFormat::coqa_like);
  double ctx = 0.0, q = 0.0;
  for (const auto& ex : examples) {
    ctx += static_cast<double>(model::tokenize(m, ex.context).size() - 1);
    q += static_cast<double>(model::tokenize(m, ex.question).size() - 1);
  }
  ctx /= static_cast<double>(examples.size());
  q /= static_cast<double>(examples.size());

  std::optional<double> ratio;
  for (const auto& mr : r.methods) {
    if (mr.method == "li") ratio = mr.overhead_ratio;
  }
  const bool slice_ok = ctx >= 100.0 && q <= 25.0;
  const bool ratio_ok = ratio && *ratio >= 1.01 && *ratio <= 1.20;

  // P(True) cost on the same slice.
  baselines::PTrueParams pp;
  pp.k = 10;
  std::vector<data::Example> demos(examples.begin(), examples.begin() + 10);
  std::size_t eleven = 0, scored = 0;
  for (std::size_t i = 10; i < 15; ++i) {
    const auto s = baselines::p_true(m, examples[i], demos, pp);
    eleven += s.cost.forward_passes == 11;
    ++scored;
  }
  report(6, "overhead model", slice_ok && ratio_ok && eleven == scored,
         fmt("mean context %.1f tokens, mean question %.1f tokens, LI token ratio %.4f", ctx, q, ratio.value_or(NAN)) +
             "; P(True) k=10 recorded 11 forward passes on " + std::to_string(eleven) + "/" + std::to_string(scored) +
             " examples");
}

void criteria7and8() {
  const char* model_dir = std::getenv("LAYERINFO_INSTRUCT_MODEL");
  const char* quac = std::getenv("LAYERINFO_QUAC");
  if (!model_dir || !quac) {
    const std::string why = "set LAYERINFO_INSTRUCT_MODEL and LAYERINFO_QUAC to run";
    skip(7, "directional prompt effect", why);
    skip(8, "separation direction", why);
    return;
  }
  const auto start = std::chrono::steady_clock::now();
  run::RunConfig cfg;
  cfg.model_id = model_dir;
  cfg.dataset_path = quac;
  cfg.dataset_format = "quac_like";
  cfg.methods = {"li"};
  cfg.templates = {data::PromptTemplate::none(), data::PromptTemplate::binary()};
  cfg.balance_ratio = 1.0;
  cfg.max_examples = 100;
  cfg.output_dir = (fs::current_path() / "acceptance_runs" / "instruct").string();
  const auto r = run::run_experiment(cfg);
  std::map<std::string, std::pair<double, std::size_t>> mean;
  for (const auto& s : r.scores) {
    if (s.method != "li" || s.flagged) continue;
    mean[s.template_id].first += s.value;
    mean[s.template_id].second += 1;
  }
  const double none = mean["none"].first / static_cast<double>(std::max<std::size_t>(1, mean["none"].second));
  const double binary = mean["binary"].first / static_cast<double>(std::max<std::size_t>(1, mean["binary"].second));
  const double secs = seconds_since(start);
  report(7, "directional prompt effect", binary > none,
         std::to_string(r.examples_used) + " examples, mean LI binary " + fmt("%.4f vs none %.4f, %.0f s", binary, none, secs),
         true);
  std::optional<double> delta;
  for (const auto& mr : r.methods) {
    if (mr.method == "li" && mr.template_id == "binary" && mr.groups) delta = mr.groups->delta;
  }
  report(8, "separation direction", delta && *delta >= 0.0,
         delta ? fmt("delta(ans - unans) under binary %.4f", *delta) : "delta undefined", true);
}

void criterion9() {
  const auto dir = workdir("determinism");
  run::RunConfig cfg;
  cfg.dataset_path = (kData / "datasets" / "quac_like.json").string();
  cfg.dataset_format = "quac_like";
  cfg.methods = {"li", "pvi_first", "pvi_last", "pred_entropy", "norm_entropy", "semantic_entropy", "p_true",
                 "answer_match", "verbalized_binary"};
  cfg.templates = {data::PromptTemplate::none(), data::PromptTemplate::binary()};
  cfg.p_true_k = 2;
  cfg.n_samples = 3;
  cfg.max_new_tokens = 6;
  cfg.max_examples = 10;
  cfg.balance_ratio = 1.0;
  cfg.calibration_sizes = {4};
  cfg.output_dir = (dir / "run").string();
  run::RunStats cold, warm;
  run::run_experiment(cfg, &cold);
  const fs::path out = cfg.output_dir;
  const std::string a = slurp(out / "report.json") + slurp(out / "scores.csv") + slurp(out / "profiles.csv");
  run::run_experiment(cfg, &warm);
  const std::string b = slurp(out / "report.json") + slurp(out / "scores.csv") + slurp(out / "profiles.csv");
  report(9, "determinism", a == b && warm.cache_misses == 0 && warm.cache_hits > 0,
         std::to_string(warm.cache_hits) + " warm cache hits, " + std::to_string(warm.cache_misses) +
             " misses, outputs " + (a == b ? "byte-identical" : "differ"));
}

template <typename F>
void guarded(int id, const std::string& name, F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    report(id, name, false, std::string("error: ") + e.what());
  }
}

}  // namespace

int main() {
  guarded(1, "oracle equivalence", criterion1);
  guarded(2, "null identity", criterion2);
  guarded(6, "overhead model", criterion6);
  guarded(3, "definitional sums", criterion3);
  guarded(4, "AUROC correctness", criterion4);
  guarded(5, "ECE correctness", criterion5);
  try {
    criteria7and8();
  } catch (const std::exception& e) {
    report(7, "directional prompt effect", false, std::string("error: ") + e.what(), true);
    report(8, "separation direction", false, "not run", true);
  }
  guarded(9, "determinism", criterion9);
  for (const auto& [id, line] : lines) std::cout << line << "\n";
  std::cout << (hard_failures == 0 ? "acceptance: all hard criteria pass" : "acceptance: hard criteria failed")
            << std::endl;
  return hard_failures == 0 ? 0 : 1;
}
