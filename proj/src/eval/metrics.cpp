#include "layerinfo/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "layerinfo/error.hpp"

namespace layerinfo::eval {
namespace {

void require_both_classes(const ScoredSet& set) {
  if (set.positives() == 0 || set.negatives() == 0) {
    throw InsufficientData("method '" + set.method + "' needs both label classes (" + std::to_string(set.positives()) +
                           " positive, " + std::to_string(set.negatives()) + " negative)");
  }
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double penalised_nll(const ScoredSet& s, double w, double b, double ridge) {
  double nll = 0.5 * ridge * w * w;
  for (const auto& it : s.items) {
    const double z = w * it.value + b;
    // log(1 + exp(z)) - y z, stable for large |z|
    nll += (z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z))) - (it.label ? z : 0.0);
  }
  return nll;
}

}  // namespace

ScoredSet ScoredSet::from(std::span<const double> values, std::span<const int> labels, std::string method) {
  if (values.size() != labels.size()) throw InvalidArgument("values and labels differ in length");
  ScoredSet s;
  s.method = std::move(method);
  for (std::size_t i = 0; i < values.size(); ++i) s.items.push_back({std::to_string(i), values[i], labels[i] != 0});
  return s;
}

std::size_t ScoredSet::positives() const {
  return static_cast<std::size_t>(std::count_if(items.begin(), items.end(), [](const auto& i) { return i.label; }));
}

std::size_t ScoredSet::negatives() const { return items.size() - positives(); }

double auroc(const ScoredSet& set) {
  require_both_classes(set);
  const std::size_t n = set.items.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (const auto& it : set.items) {
    if (!std::isfinite(it.value)) throw InvalidArgument("non-finite score for " + it.example_id);
  }
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return set.items[a].value < set.items[b].value; });
  // Sum of (1-based, tie-averaged) ranks of the positives.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && set.items[order[j]].value == set.items[order[i]].value) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (set.items[order[k]].label) rank_sum += avg_rank;
    }
    i = j;
  }
  const double pos = static_cast<double>(set.positives());
  const double neg = static_cast<double>(set.negatives());
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

RejectionResult rejection_auroc(const ScoredSet& set, double reject_fraction) {
  if (!(reject_fraction >= 0.0 && reject_fraction < 1.0)) throw InvalidArgument("reject_fraction must be in [0, 1)");
  const std::size_t n = set.items.size();
  const auto drop = static_cast<std::size_t>(std::floor(reject_fraction * static_cast<double>(n) + 1e-9));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return set.items[a].value < set.items[b].value; });
  std::vector<bool> dropped(n, false);
  for (std::size_t i = 0; i < drop; ++i) dropped[order[i]] = true;
  ScoredSet rest;
  rest.method = set.method;
  rest.metadata = set.metadata;
  for (std::size_t i = 0; i < n; ++i) {
    if (!dropped[i]) rest.items.push_back(set.items[i]);
  }
  RejectionResult r;
  r.kept = rest.items.size();
  if (rest.positives() == 0 || rest.negatives() == 0) {
    r.reason = "single label class after rejecting " + std::to_string(drop) + " of " + std::to_string(n);
    return r;
  }
  r.auroc = auroc(rest);
  return r;
}

GroupMeans delta_groups(const ScoredSet& set) {
  require_both_classes(set);
  double sa = 0.0, su = 0.0;
  for (const auto& it : set.items) (it.label ? sa : su) += it.value;
  GroupMeans g;
  g.mean_ans = sa / static_cast<double>(set.positives());
  g.mean_unans = su / static_cast<double>(set.negatives());
  g.delta = g.mean_ans - g.mean_unans;
  return g;
}

double Calibrator::probability(double score) const { return sigmoid(weight * score + bias); }

Calibrator fit_calibrator(const ScoredSet& train, const CalibrationOptions& options) {
  require_both_classes(train);
  for (const auto& it : train.items) {
    if (!std::isfinite(it.value)) throw InvalidArgument("non-finite score for " + it.example_id);
  }
  double w = 0.0, b = 0.0;
  const double ridge = options.ridge;
  for (int iter = 0; iter < options.iterations; ++iter) {
    // Gradient and Hessian of the penalised negative log-likelihood.
    double gw = ridge * w, gb = 0.0;
    double hww = ridge, hwb = 0.0, hbb = 0.0;
    for (const auto& it : train.items) {
      const double p = sigmoid(w * it.value + b);
      const double r = p - (it.label ? 1.0 : 0.0);
      const double s = p * (1.0 - p);
      gw += r * it.value;
      gb += r;
      hww += s * it.value * it.value;
      hwb += s * it.value;
      hbb += s;
    }
    const double det = hww * hbb - hwb * hwb;
    double dw, db;
    if (det > 1e-300 && std::isfinite(det)) {
      dw = (hbb * gw - hwb * gb) / det;
      db = (hww * gb - hwb * gw) / det;
    } else {
      dw = gw;
      db = gb;
    }
    // Halve the step until the objective does not increase.
    const double current = penalised_nll(train, w, b, ridge);
    double step = 1.0;
    for (int k = 0; k < 40; ++k) {
      if (penalised_nll(train, w - step * dw, b - step * db, ridge) <= current) break;
      step *= 0.5;
    }
    w -= step * dw;
    b -= step * db;
  }
  return {w, b, train.items.size()};
}

double ece(std::span<const ProbLabel> calibrated, int bins) {
  if (calibrated.empty()) throw InsufficientData("ECE of an empty set");
  if (bins < 1) throw InvalidArgument("ECE needs at least one bin");
  std::vector<double> conf(static_cast<std::size_t>(bins), 0.0), acc(conf), count(conf);
  for (const auto& pl : calibrated) {
    if (!(pl.prob >= 0.0 && pl.prob <= 1.0)) throw InvalidArgument("probabilities must lie in [0, 1]");
    const auto b = static_cast<std::size_t>(std::min(bins - 1, static_cast<int>(std::floor(pl.prob * bins))));
    conf[b] += pl.prob;
    acc[b] += pl.label ? 1.0 : 0.0;
    count[b] += 1.0;
  }
  const double n = static_cast<double>(calibrated.size());
  double e = 0.0;
  for (std::size_t b = 0; b < conf.size(); ++b) {
    if (count[b] == 0.0) continue;
    e += count[b] / n * std::abs(acc[b] / count[b] - conf[b] / count[b]);
  }
  return e;
}

OverheadCounter& OverheadCounter::operator+=(const OverheadCounter& other) {
  forward_passes += other.forward_passes;
  tokens_processed += other.tokens_processed;
  return *this;
}

double overhead_ratio(const OverheadCounter& counters, const OverheadCounter& reference) {
  if (reference.tokens_processed == 0) throw InvalidArgument("reference processed no tokens");
  return static_cast<double>(counters.tokens_processed) / static_cast<double>(reference.tokens_processed);
}

}  // namespace layerinfo::eval
