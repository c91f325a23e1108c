#include "layerinfo/run/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "layerinfo/baselines/baselines.hpp"
#include "layerinfo/data/datasets.hpp"
#include "layerinfo/error.hpp"
#include "layerinfo/run/cache.hpp"

namespace layerinfo::run {
namespace {

using json = nlohmann::json;
using baselines::Method;

constexpr const char* kPTrueTemplate = "p_true_frame";

bool is_li_family(Method m) { return m == Method::li || m == Method::pvi_first || m == Method::pvi_last; }
bool is_entropy(Method m) { return m == Method::pred_entropy || m == Method::norm_entropy; }

std::string fraction_key(double f) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", f);
  return buf;
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::vector<std::size_t> seeded_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (n - i));
    std::swap(idx[i], idx[j]);
  }
  return idx;
}

json cost_json(const eval::OverheadCounter& c) {
  return {{"forward_passes", c.forward_passes}, {"tokens_processed", c.tokens_processed}};
}

eval::OverheadCounter cost_from(const json& j, const std::string& method) {
  return {method, j.at("forward_passes").get<std::size_t>(), j.at("tokens_processed").get<std::size_t>()};
}

// Accumulates rows and costs per (method, template).
struct Collector {
  struct Entry {
    eval::ScoredSet set;
    eval::OverheadCounter cost;
    std::size_t reference_tokens = 0;
  };
  std::map<std::pair<std::string, std::string>, Entry> entries;
  EvalReport* report = nullptr;

  void add(const std::string& method, const std::string& tmpl, const data::Example& ex, double value, bool flagged,
           const eval::OverheadCounter& cost, std::size_t reference_tokens) {
    auto& e = entries[{method, tmpl}];
    e.set.method = method;
    e.set.metadata = tmpl;
    e.set.items.push_back({ex.example_id, value, ex.answerable});
    e.cost.method = method;
    e.cost += cost;
    e.reference_tokens += reference_tokens;
    report->scores.push_back({ex.example_id, tmpl, method, ex.answerable, value, flagged});
  }
};

class Runner {
 public:
  Runner(const RunConfig& cfg, model::ModelHandle model, EvalReport& report)
      : cfg_(cfg),
        model_(std::move(model)),
        report_(report),
        cache_(std::filesystem::path(cfg.output_dir) / "cache", cfg.use_cache),
        checksum_(model_.transformer().parameter_checksum()) {
    for (const auto& m : cfg.methods) methods_.insert(baselines::parse_method(m));
    render_.separator = cfg.separator;
    render_.scored = cfg.scored_span == "question_only" ? data::ScoredSpan::question_only
                                                        : data::ScoredSpan::instruction_and_question;
    collector_.report = &report_;
  }

  void run(const std::vector<data::Example>& examples) {
    if (methods_.count(Method::p_true)) {
      const auto order = seeded_order(examples.size(), cfg_.seed);
      for (std::size_t i = 0; i < order.size() && demo_pool_.size() <= static_cast<std::size_t>(cfg_.p_true_k); ++i) {
        demo_pool_.push_back(examples[order[i]]);
      }
    }
    for (const auto& tmpl : cfg_.templates) {
      for (const auto& ex : examples) score_template(ex, tmpl);
    }
    for (const auto& ex : examples) score_fixed(ex);
    for (auto& [key, entry] : collector_.entries) {
      MethodReport mr = evaluate_scores(entry.set, cfg_);
      mr.template_id = key.second;
      mr.cost = entry.cost;
      mr.reference_tokens = entry.reference_tokens;
      if (entry.reference_tokens > 0) mr.overhead_ratio = eval::overhead_ratio(entry.cost, {"", 0, entry.reference_tokens});
      report_.methods.push_back(std::move(mr));
    }
  }

  const ScoreCache& cache() const { return cache_; }

 private:
  std::string key(const data::Example& ex, const std::string& tmpl, const std::string& method,
                  const json& params) const {
    CacheKeyFields f;
    f.model_id = model_.model_id();
    f.model_checksum = checksum_;
    f.example_id = ex.example_id;
    f.example_digest = sha256_hex(ex.context + '\x1f' + ex.question);
    f.template_id = tmpl;
    f.layer_selection = model_.layer_selection();
    f.head_norm_policy = model::to_string(model_.head_norm_policy());
    f.method = method;
    f.params = params.dump();
    return cache_key(f);
  }

  json render_params(const data::PromptTemplate& t) const {
    return {{"template", template_to_json(t)}, {"separator", cfg_.separator}, {"scored_span", cfg_.scored_span}};
  }

  void fail(const data::Example& ex, const std::string& tmpl, const std::string& method, const std::string& why) {
    spdlog::warn("{} [{} / {}]: {}", ex.example_id, tmpl, method, why);
    report_.failures.push_back({ex.example_id, tmpl, method, why});
  }

  std::optional<data::RenderedPair> render(const data::Example& ex, const data::PromptTemplate& t,
                                           const std::string& for_method) {
    auto out = data::try_render_pair(ex, t, model_, render_);
    if (!out.pair) fail(ex, t.template_id, for_method, "flagged: " + out.flag_reason);
    return std::move(out.pair);
  }

  // Scores whose value depends on the prompt template.
  void score_template(const data::Example& ex, const data::PromptTemplate& t) {
    const bool want_li = std::any_of(methods_.begin(), methods_.end(), is_li_family);
    const bool want_entropy = std::any_of(methods_.begin(), methods_.end(), is_entropy);
    const bool want_se = methods_.count(Method::semantic_entropy) > 0;
    if (!want_li && !want_entropy && !want_se) return;
    const auto pair = render(ex, t, "*");
    if (!pair) return;
    const std::size_t reference = pair->ctx_pass.size();
    const json rp = render_params(t);

    if (want_li) {
      try {
        const std::string k = key(ex, t.template_id, "li_profile", rp);
        li::LIProfile profile;
        eval::OverheadCounter cost{"li", 0, 0};
        if (auto hit = cache_.get(k)) {
          profile = profile_from_json(hit->at("profile"));
          cost = cost_from(hit->at("cost"), "li");
        } else {
          const auto before = model_.counter();
          profile = li::li_profile(model_, *pair);
          cost.forward_passes = model_.counter().forward_passes - before.forward_passes;
          cost.tokens_processed = model_.counter().tokens_processed - before.tokens_processed;
          cache_.put(k, {{"profile", to_json(profile)}, {"cost", cost_json(cost)}});
        }
        report_.profiles.push_back(profile);
        for (Method m : {Method::li, Method::pvi_first, Method::pvi_last}) {
          if (!methods_.count(m)) continue;
          const double v = m == Method::li          ? profile.li_total
                           : m == Method::pvi_first ? li::pvi_at_layer(profile, li::LayerChoice::first())
                                                    : li::pvi_at_layer(profile, li::LayerChoice::last());
          collector_.add(baselines::to_string(m), t.template_id, ex, v, false, cost, reference);
        }
      } catch (const Error& e) {
        fail(ex, t.template_id, "li", e.what());
      }
    }

    if (want_entropy) {
      const json params = {{"render", rp}, {"max_new_tokens", cfg_.max_new_tokens}};
      try {
        const std::string kp = key(ex, t.template_id, "pred_entropy", params);
        const std::string kn = key(ex, t.template_id, "norm_entropy", params);
        auto hp = cache_.get(kp);
        auto hn = cache_.get(kn);
        baselines::BaselineScore pe, ne;
        if (hp && hn) {
          pe = score_from_json(*hp);
          ne = score_from_json(*hn);
        } else {
          std::tie(pe, ne) = baselines::entropy_scores(model_, *pair, {cfg_.max_new_tokens});
          cache_.put(kp, to_json(pe));
          cache_.put(kn, to_json(ne));
        }
        if (methods_.count(Method::pred_entropy)) add(pe, t.template_id, ex, reference);
        if (methods_.count(Method::norm_entropy)) add(ne, t.template_id, ex, reference);
      } catch (const Error& e) {
        fail(ex, t.template_id, "entropy", e.what());
      }
    }

    if (want_se) {
      const json params = {{"render", rp},
                           {"max_new_tokens", cfg_.max_new_tokens},
                           {"n_samples", cfg_.n_samples},
                           {"temperature", cfg_.temperature},
                           {"seed", cfg_.seed},
                           {"equivalence", cfg_.equivalence},
                           {"judge_url", cfg_.judge_url}};
      cached_score(ex, t.template_id, Method::semantic_entropy, params, reference, [&] {
        const auto policy = cfg_.equivalence == "http_judge"
                                ? baselines::EquivalencePolicy::http_judge(cfg_.judge_url)
                                : baselines::EquivalencePolicy::normalized_exact_match();
        baselines::SemanticEntropyParams sp;
        sp.n_samples = cfg_.n_samples;
        sp.temperature = cfg_.temperature;
        sp.seed = cfg_.seed;
        sp.generation.max_tokens = cfg_.max_new_tokens;
        return baselines::semantic_entropy(model_, *pair, policy, sp);
      });
    }
  }

  // Scores that use a fixed prompt regardless of the configured templates.
  void score_fixed(const data::Example& ex) {
    const bool want_binary = methods_.count(Method::answer_match) || methods_.count(Method::verbalized_binary);
    if (want_binary) {
      const auto binary = data::PromptTemplate::binary();
      if (const auto pair = render(ex, binary, "binary")) {
        const json rp = render_params(binary);
        const std::size_t reference = pair->ctx_pass.size();
        if (methods_.count(Method::answer_match)) {
          const json params = {{"render", rp}, {"max_new_tokens", cfg_.max_new_tokens}};
          cached_score(ex, binary.template_id, Method::answer_match, params, reference, [&] {
            return baselines::answer_match(model_, *pair, ex, {cfg_.max_new_tokens});
          });
        }
        if (methods_.count(Method::verbalized_binary)) {
          cached_score(ex, binary.template_id, Method::verbalized_binary, {{"render", rp}}, reference,
                       [&] { return baselines::verbalized_binary(model_, *pair); });
        }
      }
    }
    if (methods_.count(Method::p_true)) {
      std::vector<data::Example> demos;
      json demo_ids = json::array();
      for (const auto& d : demo_pool_) {
        if (d.example_id == ex.example_id || demos.size() == static_cast<std::size_t>(cfg_.p_true_k)) continue;
        demos.push_back(d);
        demo_ids.push_back(d.example_id);
      }
      const json params = {{"k", cfg_.p_true_k},
                           {"frame", cfg_.to_json()["p_true_frame"]},
                           {"demos", demo_ids},
                           {"max_new_tokens", cfg_.max_new_tokens}};
      const std::string plain = ex.context.empty() ? ex.question : ex.context + "\n" + ex.question;
      const std::size_t reference = model::tokenize(model_, plain).size();
      cached_score(ex, kPTrueTemplate, Method::p_true, params, reference, [&] {
        baselines::PTrueParams pp;
        pp.k = cfg_.p_true_k;
        pp.frame = cfg_.p_true_frame;
        pp.generation.max_tokens = cfg_.max_new_tokens;
        return baselines::p_true(model_, ex, demos, pp);
      });
    }
  }

  template <typename Fn>
  void cached_score(const data::Example& ex, const std::string& tmpl, Method m, const json& params,
                    std::size_t reference, Fn compute) {
    try {
      const std::string k = key(ex, tmpl, baselines::to_string(m), params);
      baselines::BaselineScore s;
      if (auto hit = cache_.get(k)) {
        s = score_from_json(*hit);
      } else {
        s = compute();
        cache_.put(k, to_json(s));
      }
      add(s, tmpl, ex, reference);
    } catch (const Error& e) {
      fail(ex, tmpl, baselines::to_string(m), e.what());
    }
  }

  void add(const baselines::BaselineScore& s, const std::string& tmpl, const data::Example& ex,
           std::size_t reference) {
    collector_.add(baselines::to_string(s.method), tmpl, ex, s.value, s.flagged, s.cost, reference);
  }

  const RunConfig& cfg_;
  model::ModelHandle model_;
  EvalReport& report_;
  ScoreCache cache_;
  std::uint64_t checksum_;
  std::set<Method> methods_;
  data::RenderOptions render_;
  std::vector<data::Example> demo_pool_;
  Collector collector_;
};

// First examples of each class in corpus order, keeping the ratio.
std::vector<data::Example> truncate_balanced(const std::vector<data::Example>& examples, std::size_t limit,
                                             double ratio) {
  const auto want_ans = static_cast<std::size_t>(std::llround(static_cast<double>(limit) * ratio / (1.0 + ratio)));
  std::size_t ans = 0, unans = 0;
  std::vector<data::Example> out;
  for (const auto& ex : examples) {
    if (ex.answerable ? ans < want_ans : unans < limit - want_ans) {
      (ex.answerable ? ans : unans) += 1;
      out.push_back(ex);
    }
  }
  return out;
}

std::optional<double> opt_from(const json& j) {
  return j.is_null() ? std::nullopt : std::optional<double>(j.get<double>());
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field.push_back(c);
      }
      continue;
    }
    any = true;
    if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  if (any || !field.empty() || !row.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

MethodReport evaluate_scores(const eval::ScoredSet& set, const RunConfig& config) {
  MethodReport r;
  r.method = set.method;
  r.template_id = set.metadata;
  r.count = set.items.size();
  r.positives = set.positives();
  r.negatives = set.negatives();
  if (r.positives == 0 || r.negatives == 0) {
    r.insufficient = "needs both answerable and unanswerable examples (" + std::to_string(r.positives) + " / " +
                     std::to_string(r.negatives) + ")";
    return r;
  }
  r.auroc = eval::auroc(set);
  for (double f : config.reject_fractions) r.rejection[fraction_key(f)] = eval::rejection_auroc(set, f);
  r.groups = eval::delta_groups(set);

  const auto order = seeded_order(set.items.size(), config.seed ^ 0x5ca1ab1eULL);
  for (std::size_t n_cal : config.calibration_sizes) {
    CalibrationResult c;
    c.train_size = n_cal;
    if (n_cal >= set.items.size()) {
      c.reason = "calibration split of " + std::to_string(n_cal) + " leaves no evaluation examples";
      r.calibration.push_back(c);
      continue;
    }
    eval::ScoredSet train, test;
    for (std::size_t i = 0; i < order.size(); ++i) (i < n_cal ? train : test).items.push_back(set.items[order[i]]);
    if (train.positives() == 0 || train.negatives() == 0) {
      c.reason = "calibration split has a single label class";
      r.calibration.push_back(c);
      continue;
    }
    const auto cal = eval::fit_calibrator(train);
    std::vector<eval::ProbLabel> pl;
    for (const auto& it : test.items) pl.push_back({cal.probability(it.value), it.label});
    c.weight = cal.weight;
    c.bias = cal.bias;
    c.ece = eval::ece(pl, config.ece_bins);
    r.calibration.push_back(c);
  }
  return r;
}

EvalReport run_experiment(const RunConfig& config, RunStats* stats) {
  config.validate();
  EvalReport report;
  report.config = config.to_json();
  report.config_hash = config.hash();

  model::ModelHandle model = model::load_model(config.model_id, config.layers,
                                               model::parse_head_norm_policy(config.head_norm_policy));
  report.model_id = model.model_id();
  report.num_layers = model.num_layers();
  report.vocab_size = model.vocab_size();

  data::LoadedDataset ds = data::read_dataset(config.dataset_path, data::parse_dataset_format(config.dataset_format));
  if (ds.skipped > 0) spdlog::warn("{}: skipped {} malformed record(s)", config.dataset_path, ds.skipped);
  report.examples_loaded = ds.examples.size();
  report.records_skipped = ds.skipped;
  std::vector<data::Example> examples = std::move(ds.examples);
  if (config.balance_ratio > 0.0) examples = data::balance_answerability(examples, config.balance_ratio, config.seed);
  if (config.max_examples > 0 && examples.size() > config.max_examples) {
    examples = config.balance_ratio > 0.0 ? truncate_balanced(examples, config.max_examples, config.balance_ratio)
                                          : std::vector<data::Example>(examples.begin(),
                                                                       examples.begin() + static_cast<std::ptrdiff_t>(config.max_examples));
  }
  report.examples_used = examples.size();
  for (const auto& ex : examples) {
    if (report.answerable.count(ex.example_id)) throw InvalidArgument("duplicate example id " + ex.example_id);
    report.answerable[ex.example_id] = ex.answerable;
  }

  Runner runner(config, model, report);
  runner.run(examples);
  std::sort(report.methods.begin(), report.methods.end(), [](const MethodReport& a, const MethodReport& b) {
    return std::tie(a.method, a.template_id) < std::tie(b.method, b.template_id);
  });
  if (stats) {
    stats->cache_hits = runner.cache().hits();
    stats->cache_misses = runner.cache().misses();
  }
  write_report(report, config.output_dir);
  return report;
}

json report_summary(const EvalReport& report) {
  json methods = json::array();
  for (const auto& m : report.methods) {
    json rejection = json::object();
    for (const auto& [k, r] : m.rejection) {
      rejection[k] = {{"auroc", opt(r.auroc)}, {"kept", r.kept}, {"reason", r.reason}};
    }
    json calibration = json::array();
    for (const auto& c : m.calibration) {
      calibration.push_back({{"train_size", c.train_size},
                             {"weight", opt(c.weight)},
                             {"bias", opt(c.bias)},
                             {"ece", opt(c.ece)},
                             {"reason", c.reason}});
    }
    json groups = nullptr;
    if (m.groups) groups = {{"mean_ans", m.groups->mean_ans}, {"mean_unans", m.groups->mean_unans}, {"delta", m.groups->delta}};
    methods.push_back({{"method", m.method},
                       {"template", m.template_id},
                       {"count", m.count},
                       {"positives", m.positives},
                       {"negatives", m.negatives},
                       {"auroc", opt(m.auroc)},
                       {"rejection", rejection},
                       {"groups", groups},
                       {"calibration", calibration},
                       {"overhead",
                        {{"forward_passes", m.cost.forward_passes},
                         {"tokens_processed", m.cost.tokens_processed},
                         {"reference_tokens", m.reference_tokens},
                         {"ratio", opt(m.overhead_ratio)},
                         {"passes_per_example",
                          m.count ? json(static_cast<double>(m.cost.forward_passes) / static_cast<double>(m.count))
                                  : json(nullptr)}}},
                       {"insufficient", m.insufficient}});
  }
  json failures = json::array();
  for (const auto& f : report.failures) {
    failures.push_back({{"example_id", f.example_id}, {"template", f.template_id}, {"method", f.method}, {"reason", f.reason}});
  }
  json dataset_li = json::object();
  std::map<std::string, std::vector<li::LIProfile>> by_template;
  for (const auto& p : report.profiles) by_template[p.template_id].push_back(p);
  for (const auto& [t, ps] : by_template) {
    const auto s = li::dataset_li(ps);
    dataset_li[t] = {{"mean_li", s.mean_li}, {"count", s.count}};
  }
  std::size_t pos = 0;
  for (const auto& [id, a] : report.answerable) pos += a ? 1 : 0;
  return {{"config", report.config},
          {"config_hash", report.config_hash},
          {"model", {{"id", report.model_id}, {"num_layers", report.num_layers}, {"vocab_size", report.vocab_size}}},
          {"dataset",
           {{"loaded", report.examples_loaded},
            {"skipped", report.records_skipped},
            {"used", report.examples_used},
            {"answerable", pos},
            {"unanswerable", report.answerable.size() - pos}}},
          {"dataset_li", dataset_li},
          {"methods", methods},
          {"failures", failures}};
}

void write_report(const EvalReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "report.json", report_summary(report).dump(2) + "\n");

  std::string scores = "example_id,template_id,method,answerable,value,flagged\n";
  for (const auto& r : report.scores) {
    scores += csv_field(r.example_id) + "," + csv_field(r.template_id) + "," + csv_field(r.method) + "," +
              (r.answerable ? "1" : "0") + "," + format_double(r.value) + "," + (r.flagged ? "1" : "0") + "\n";
  }
  write_file_atomic(dir / "scores.csv", scores);

  std::string profiles = "example_id,template_id,answerable,layer,h_null,h_ctx,i_layer,cumulative,li_total,target_len\n";
  for (const auto& p : report.profiles) {
    const auto cum = li::cumulative_profile(p);
    const auto it = report.answerable.find(p.example_id);
    const bool ans = it != report.answerable.end() && it->second;
    for (std::size_t r = 0; r < p.layer_ids.size(); ++r) {
      profiles += csv_field(p.example_id) + "," + csv_field(p.template_id) + "," + (ans ? "1" : "0") + "," +
                  std::to_string(p.layer_ids[r]) + "," + format_double(p.h_null[r]) + "," + format_double(p.h_ctx[r]) +
                  "," + format_double(p.i_layer[r]) + "," + format_double(cum[r]) + "," + format_double(p.li_total) +
                  "," + std::to_string(p.target_len) + "\n";
    }
  }
  write_file_atomic(dir / "profiles.csv", profiles);
}

EvalReport load_report(const std::filesystem::path& dir) {
  std::ifstream in(dir / "report.json");
  if (!in) throw LoadError("no report.json in " + dir.string());
  const json doc = json::parse(in);
  EvalReport r;
  r.config = doc.at("config");
  r.config_hash = doc.at("config_hash").get<std::string>();
  r.model_id = doc.at("model").at("id").get<std::string>();
  r.num_layers = doc.at("model").at("num_layers").get<int>();
  r.vocab_size = doc.at("model").at("vocab_size").get<int>();
  r.examples_loaded = doc.at("dataset").at("loaded").get<std::size_t>();
  r.records_skipped = doc.at("dataset").at("skipped").get<std::size_t>();
  r.examples_used = doc.at("dataset").at("used").get<std::size_t>();
  for (const auto& m : doc.at("methods")) {
    MethodReport mr;
    mr.method = m.at("method").get<std::string>();
    mr.template_id = m.at("template").get<std::string>();
    mr.count = m.at("count").get<std::size_t>();
    mr.positives = m.at("positives").get<std::size_t>();
    mr.negatives = m.at("negatives").get<std::size_t>();
    mr.auroc = opt_from(m.at("auroc"));
    for (const auto& [k, v] : m.at("rejection").items()) {
      mr.rejection[k] = {opt_from(v.at("auroc")), v.at("reason").get<std::string>(), v.at("kept").get<std::size_t>()};
    }
    if (!m.at("groups").is_null()) {
      const auto& g = m["groups"];
      mr.groups = eval::GroupMeans{g.at("mean_ans").get<double>(), g.at("mean_unans").get<double>(),
                                   g.at("delta").get<double>()};
    }
    for (const auto& c : m.at("calibration")) {
      mr.calibration.push_back({c.at("train_size").get<std::size_t>(), opt_from(c.at("weight")),
                                opt_from(c.at("bias")), opt_from(c.at("ece")), c.at("reason").get<std::string>()});
    }
    const auto& o = m.at("overhead");
    mr.cost = {mr.method, o.at("forward_passes").get<std::size_t>(), o.at("tokens_processed").get<std::size_t>()};
    mr.reference_tokens = o.at("reference_tokens").get<std::size_t>();
    mr.overhead_ratio = opt_from(o.at("ratio"));
    mr.insufficient = m.at("insufficient").get<std::string>();
    r.methods.push_back(std::move(mr));
  }
  for (const auto& f : doc.at("failures")) {
    r.failures.push_back({f.at("example_id").get<std::string>(), f.at("template").get<std::string>(),
                          f.at("method").get<std::string>(), f.at("reason").get<std::string>()});
  }

  const auto scores = read_csv(dir / "scores.csv");
  for (std::size_t i = 1; i < scores.size(); ++i) {
    const auto& row = scores[i];
    if (row.size() != 6) throw LoadError("malformed scores.csv row " + std::to_string(i + 1));
    r.scores.push_back({row[0], row[1], row[2], row[3] == "1", std::stod(row[4]), row[5] == "1"});
    r.answerable[row[0]] = row[3] == "1";
  }
  const auto profiles = read_csv(dir / "profiles.csv");
  for (std::size_t i = 1; i < profiles.size(); ++i) {
    const auto& row = profiles[i];
    if (row.size() != 10) throw LoadError("malformed profiles.csv row " + std::to_string(i + 1));
    r.answerable[row[0]] = row[2] == "1";
    if (r.profiles.empty() || r.profiles.back().example_id != row[0] || r.profiles.back().template_id != row[1]) {
      li::LIProfile p;
      p.example_id = row[0];
      p.template_id = row[1];
      p.li_total = std::stod(row[8]);
      p.target_len = std::stoul(row[9]);
      r.profiles.push_back(std::move(p));
    }
    auto& p = r.profiles.back();
    p.layer_ids.push_back(std::stoi(row[3]));
    p.h_null.push_back(std::stod(row[4]));
    p.h_ctx.push_back(std::stod(row[5]));
    p.i_layer.push_back(std::stod(row[6]));
  }
  return r;
}

}  // namespace layerinfo::run
