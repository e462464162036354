#include "fusilade/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fusilade/errors.hpp"

namespace fusilade::metrics {

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) noexcept {
  tp += o.tp;
  fp += o.fp;
  tn += o.tn;
  fn += o.fn;
  return *this;
}

namespace {

void check_pair(std::span<const int> y, std::span<const double> p) {
  if (y.size() != p.size()) {
    throw ShapeError("metrics: " + std::to_string(y.size()) + " labels vs " +
                     std::to_string(p.size()) + " scores");
  }
  if (y.empty()) throw ShapeError("metrics: empty input");
}

std::vector<std::size_t> rank_descending(std::span<const double> p) {
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
  return order;
}

std::size_t count_positives(std::span<const int> y) {
  const auto n = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
  if (n == 0) throw DataError("PR undefined: no positive labels");
  return n;
}

}  // namespace

ConfusionCounts confusion(std::span<const int> y_true, std::span<const double> p_pred,
                          double threshold) {
  check_pair(y_true, p_pred);
  ConfusionCounts c;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const bool predicted = p_pred[i] >= threshold;
    const bool actual = y_true[i] == 1;
    if (predicted && actual) ++c.tp;
    else if (predicted) ++c.fp;
    else if (actual) ++c.fn;
    else ++c.tn;
  }
  return c;
}

ClassificationScores classification_metrics(const ConfusionCounts& c) {
  if (c.total() == 0) throw DataError("classification_metrics: no samples");
  const auto tp = static_cast<double>(c.tp);
  const auto fp = static_cast<double>(c.fp);
  const auto tn = static_cast<double>(c.tn);
  const auto fn = static_cast<double>(c.fn);

  ClassificationScores s;
  s.accuracy = (tp + tn) / static_cast<double>(c.total());
  const double f1_den = 2.0 * tp + fp + fn;
  s.f1 = f1_den > 0.0 ? 2.0 * tp / f1_den : 0.0;
  const double a = tp + fp, b = tp + fn, d = tn + fp, e = tn + fn;
  if (a > 0.0 && b > 0.0 && d > 0.0 && e > 0.0) {
    s.mcc = (tp * tn - fp * fn) / std::sqrt(a * b * d * e);
    s.mcc = std::clamp(s.mcc, -1.0, 1.0);
  }
  return s;
}

double pr_auc(std::span<const int> y_true, std::span<const double> p_pred) {
  check_pair(y_true, p_pred);
  const double positives = static_cast<double>(count_positives(y_true));
  const auto order = rank_descending(p_pred);
  double ap = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (y_true[order[k]] != 1) continue;
    ++hits;
    const double precision = static_cast<double>(hits) / static_cast<double>(k + 1);
    ap += precision / positives;  // recall step is 1 / positives
  }
  return ap;
}

double pr_auc_trapezoid(std::span<const int> y_true, std::span<const double> p_pred) {
  check_pair(y_true, p_pred);
  const double positives = static_cast<double>(count_positives(y_true));
  const auto order = rank_descending(p_pred);
  double area = 0.0;
  double prev_recall = 0.0;
  double prev_precision = -1.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (y_true[order[k]] == 1) ++hits;
    // operating points exist only between distinct scores
    if (k + 1 < order.size() && p_pred[order[k + 1]] == p_pred[order[k]]) continue;
    const double recall = static_cast<double>(hits) / positives;
    const double precision = static_cast<double>(hits) / static_cast<double>(k + 1);
    if (prev_precision < 0.0) prev_precision = precision;
    area += (recall - prev_recall) * 0.5 * (precision + prev_precision);
    prev_recall = recall;
    prev_precision = precision;
  }
  return area;
}

MetricSet evaluate(std::span<const int> y_true, std::span<const double> p_pred, double threshold,
                   PrEstimator estimator) {
  MetricSet m;
  m.counts = confusion(y_true, p_pred, threshold);
  const auto s = classification_metrics(m.counts);
  m.accuracy = s.accuracy;
  m.f1 = s.f1;
  m.mcc = s.mcc;
  m.pr_auc = estimator == PrEstimator::average_precision ? pr_auc(y_true, p_pred)
                                                         : pr_auc_trapezoid(y_true, p_pred);
  return m;
}

namespace {
template <typename Get>
MetricStats stats_of(std::span<const MetricSet> folds, Get get) {
  const double n = static_cast<double>(folds.size());
  double mean = 0.0;
  for (const auto& f : folds) mean += get(f);
  mean /= n;
  double var = 0.0;
  for (const auto& f : folds) var += (get(f) - mean) * (get(f) - mean);
  return {mean, std::sqrt(var / n)};
}
}  // namespace

FoldAggregate aggregate_folds(std::span<const MetricSet> folds) {
  if (folds.empty()) throw DataError("aggregate_folds: no folds");
  FoldAggregate agg;
  agg.folds = folds.size();
  agg.accuracy = stats_of(folds, [](const MetricSet& m) { return m.accuracy; });
  agg.f1 = stats_of(folds, [](const MetricSet& m) { return m.f1; });
  agg.mcc = stats_of(folds, [](const MetricSet& m) { return m.mcc; });
  agg.pr_auc = stats_of(folds, [](const MetricSet& m) { return m.pr_auc; });
  for (const auto& f : folds) agg.counts += f.counts;
  return agg;
}

}  // namespace fusilade::metrics
