#pragma once

// Adam, early stopping, stratified k-fold cross-validation and the strategy
// ablation grid.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fusilade/genomics.hpp"
#include "fusilade/metrics.hpp"
#include "fusilade/model.hpp"

namespace fusilade::train {

struct TrainConfig {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;
  std::size_t max_epochs = 200;
  std::size_t batch_size = 16;
  std::size_t patience = 10;
  double min_delta = 1e-4;
  std::size_t folds = 5;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

// --- Adam -------------------------------------------------------------------

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
};

/// One Adam update of `params` in place. A fresh (empty) state is sized on
/// first use. Throws ShapeError when params, grads and state disagree.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const TrainConfig& config);

/// Adam over every parameter block of a model.
class ModelOptimizer {
 public:
  explicit ModelOptimizer(const TrainConfig& config) : config_(config) {}
  void step(model::FusionModel& m);

 private:
  TrainConfig config_;
  std::vector<AdamState> states_;  // weights, bias per block
};

// --- folds ------------------------------------------------------------------

struct Fold {
  std::vector<std::size_t> train;       // sorted sample indices
  std::vector<std::size_t> validation;  // sorted sample indices
};

struct FoldPlan {
  std::vector<Fold> folds;
};

/// Shuffles each class with a seeded stream and deals it round-robin into k
/// folds, class 0 first, continuing the fold cursor into class 1. A class
/// smaller than k leaves some folds without it; an empty class is a DataError
/// naming the class.
FoldPlan stratified_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed);

// --- single-model training ----------------------------------------------------

struct Split {
  std::vector<model::PatientView> views;
  std::vector<double> labels;

  std::size_t size() const noexcept { return views.size(); }
};

struct CurvePoint {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

struct TrainResult {
  std::vector<CurvePoint> curve;
  std::size_t best_epoch = 0;  // 0 when no epoch ran
  double best_val_loss = 0.0;
  bool stopped_early = false;
};

/// Mini-batch Adam on the model objective with early stopping on validation
/// loss (training loss when `val` is empty). Restores the best-epoch weights.
/// Throws TrainingError on a non-finite loss.
TrainResult train_model(model::FusionModel& m, const Split& train, const Split& val,
                        const TrainConfig& config);

// --- cross-validation -----------------------------------------------------------

/// Patients in row order: genes.values row i, patches[i] and labels[i] belong
/// to genes.patient_ids[i].
struct Cohort {
  genomics::GeneMatrix genes;
  std::vector<Tensor2> patches;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  /// Throws DataError on misaligned members.
  void validate() const;
};

struct ExperimentConfig {
  TrainConfig train;
  model::ModelDims dims;  // gene_dim / feature_dim are taken from the cohort
  genomics::PipelineOptions preprocessing;
  bool preprocess = true;  // fit the gene pipeline per fold
  bool parallel_folds = false;
  bool pooled = false;  // also score the concatenated out-of-fold predictions
  metrics::PrEstimator estimator = metrics::PrEstimator::average_precision;
  double threshold = metrics::kDefaultThreshold;
};

struct FoldResult {
  std::size_t fold = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> validation_ids;
  std::vector<int> validation_labels;
  std::vector<double> predictions;
  metrics::MetricSet metrics;
  std::vector<CurvePoint> curve;
  std::size_t best_epoch = 0;
};

inline constexpr int kReportFormatVersion = 1;

struct EvalReport {
  int format_version = kReportFormatVersion;
  model::Strategy strategy = model::Strategy::concat;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> config;  // echo of the run configuration
  std::string pr_estimator = "average_precision";
  std::vector<FoldResult> folds;
  metrics::FoldAggregate aggregate;
  std::optional<metrics::MetricSet> pooled;
  std::vector<CurvePoint> mean_curve;  // truncated at the shortest fold
};

/// Per fold: fit gene preprocessing on the training patients, replay it on the
/// validation patients, train a freshly initialised model (seed ^ fold) and
/// score the validation split. Throws DataError naming a class with fewer
/// members than folds.
EvalReport run_cv_experiment(const Cohort& cohort, model::Strategy strategy,
                             const ExperimentConfig& config);

struct AblationDelta {
  model::Strategy a = model::Strategy::cross_attention;
  model::Strategy b = model::Strategy::concat;
  double accuracy = 0.0;  // mean(a) - mean(b)
  double f1 = 0.0;
  double pr_auc = 0.0;
};

struct AblationReport {
  int format_version = kReportFormatVersion;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> config;
  std::vector<EvalReport> runs;  // kAllStrategies order
  std::vector<AblationDelta> deltas;

  const EvalReport& run(model::Strategy s) const;
  /// mean(a) - mean(b); either order.
  AblationDelta delta(model::Strategy a, model::Strategy b) const;
};

/// Every strategy under the same folds and seed, plus all pairwise deltas.
AblationReport run_ablation(const Cohort& cohort, const ExperimentConfig& config);

std::vector<AblationDelta> pairwise_deltas(const std::vector<EvalReport>& runs);

}  // namespace fusilade::train
