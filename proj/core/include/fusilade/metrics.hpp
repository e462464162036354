#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace fusilade::metrics {

/// Positive class is label 1 (Basal/Her2).
struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const noexcept { return tp + fp + tn + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) noexcept;
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct ClassificationScores {
  double accuracy = 0.0;
  double f1 = 0.0;
  double mcc = 0.0;
};

struct MetricSet {
  double accuracy = 0.0;
  double f1 = 0.0;
  double mcc = 0.0;
  double pr_auc = 0.0;
  ConfusionCounts counts;
};

enum class PrEstimator { average_precision, trapezoid };

inline constexpr double kDefaultThreshold = 0.5;

/// A sample is predicted positive iff p >= threshold.
ConfusionCounts confusion(std::span<const int> y_true, std::span<const double> p_pred,
                          double threshold = kDefaultThreshold);

/// Zero-denominator F1 and MCC are defined as 0. Throws DataError on empty counts.
ClassificationScores classification_metrics(const ConfusionCounts& c);

/// Average precision (step integration). Ranking is by descending score with
/// ties broken by original index. Throws DataError when no positives exist.
double pr_auc(std::span<const int> y_true, std::span<const double> p_pred);

/// Linear-interpolation area under the PR curve (trapezoids between
/// distinct-threshold operating points, anchored at recall 0 with the first
/// point's precision). Kept as an alternative to average precision.
double pr_auc_trapezoid(std::span<const int> y_true, std::span<const double> p_pred);

MetricSet evaluate(std::span<const int> y_true, std::span<const double> p_pred,
                   double threshold = kDefaultThreshold,
                   PrEstimator estimator = PrEstimator::average_precision);

struct MetricStats {
  double mean = 0.0;
  double std = 0.0;  // population
};

struct FoldAggregate {
  MetricStats accuracy, f1, mcc, pr_auc;
  ConfusionCounts counts;  // elementwise sum
  std::size_t folds = 0;
};

/// Throws DataError on an empty list.
FoldAggregate aggregate_folds(std::span<const MetricSet> folds);

}  // namespace fusilade::metrics
