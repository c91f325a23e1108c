#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace layerinfo::eval {

struct ScoredItem {
  std::string example_id;
  double value = 0.0;
  bool label = false;  // true = answerable / correct
};

// Scores of one method over a set of examples. Higher values are expected
// for positive labels.
struct ScoredSet {
  std::string method;
  std::vector<ScoredItem> items;
  std::string metadata;

  static ScoredSet from(std::span<const double> values, std::span<const int> labels, std::string method = "");
  std::size_t positives() const;
  std::size_t negatives() const;
};

// Mann-Whitney statistic P(s+ > s-) + P(s+ == s-)/2, by average ranks.
// Throws InsufficientData for a single label class and InvalidArgument for
// non-finite scores.
double auroc(const ScoredSet& set);

struct RejectionResult {
  std::optional<double> auroc;  // empty when undefined
  std::string reason;
  std::size_t kept = 0;
};

// Drops the floor(reject_fraction * n) lowest-scored examples (ties broken by
// input order) and recomputes AUROC on the rest.
RejectionResult rejection_auroc(const ScoredSet& set, double reject_fraction);

struct GroupMeans {
  double mean_ans = 0.0;
  double mean_unans = 0.0;
  double delta = 0.0;  // mean_ans - mean_unans
};

GroupMeans delta_groups(const ScoredSet& set);

// p(label = 1 | score) = 1 / (1 + exp(-(weight * score + bias))).
struct Calibrator {
  double weight = 0.0;
  double bias = 0.0;
  std::size_t trained_on = 0;

  double probability(double score) const;
};

struct CalibrationOptions {
  int iterations = 50;
  double ridge = 1e-6;  // L2 penalty on the weight only
};

// Maximum-likelihood logistic fit by Newton's method from (0, 0).
Calibrator fit_calibrator(const ScoredSet& train, const CalibrationOptions& options = {});

struct ProbLabel {
  double prob = 0.0;
  bool label = false;
};

// Expected calibration error over `bins` equal-width bins on [0, 1].
double ece(std::span<const ProbLabel> calibrated, int bins = 10);

// Work done by one method, in forward passes and tokens run through the model.
struct OverheadCounter {
  std::string method;
  std::size_t forward_passes = 0;
  std::size_t tokens_processed = 0;

  OverheadCounter& operator+=(const OverheadCounter& other);
};

// counters.tokens_processed / reference.tokens_processed.
double overhead_ratio(const OverheadCounter& counters, const OverheadCounter& reference);

}  // namespace layerinfo::eval
