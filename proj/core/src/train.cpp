#include "fusilade/train.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <thread>

#include "fusilade/errors.hpp"
#include "fusilade/rng.hpp"

namespace fusilade::train {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in [0, 1)");
  if (!(eps_adam > 0.0)) throw ConfigError("eps_adam must be > 0");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (patience == 0) throw ConfigError("patience must be >= 1");
  if (!(min_delta >= 0.0)) throw ConfigError("min_delta must be >= 0");
  if (folds < 2) throw ConfigError("folds must be >= 2");
}

// --- Adam -------------------------------------------------------------------

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const TrainConfig& c) {
  if (grads.size() != params.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " params but " +
                     std::to_string(grads.size()) + " grads");
  }
  if (state.m.empty() && state.v.empty() && state.t == 0) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state sized for " + std::to_string(state.m.size()) +
                     " params, got " + std::to_string(params.size()));
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g;
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.eps_adam);
  }
}

void ModelOptimizer::step(model::FusionModel& m) {
  auto blocks = m.parameters();
  if (states_.empty()) states_.resize(2 * blocks.size());
  if (states_.size() != 2 * blocks.size()) throw StateError("optimizer bound to a different model");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    auto* p = blocks[i];
    adam_step(p->weights.values(), p->grad_weights.values(), states_[2 * i], config_);
    adam_step(p->bias, p->grad_bias, states_[2 * i + 1], config_);
  }
}

// --- folds ------------------------------------------------------------------

FoldPlan stratified_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("stratified_kfold: k must be >= 2");
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw DataError("stratified_kfold: label " + std::to_string(labels[i]) + " at index " +
                      std::to_string(i) + " is not 0 or 1");
    }
    by_class[labels[i]].push_back(i);
  }
  for (int c = 0; c < 2; ++c)
    if (by_class[c].empty()) throw DataError("stratified_kfold: class " + std::to_string(c) + " has no members");
  Rng rng(seed);
  FoldPlan plan;
  plan.folds.resize(k);
  std::size_t cursor = 0;
  for (auto& members : by_class) {
    rng.shuffle(members.begin(), members.end());
    for (auto idx : members) {
      plan.folds[cursor].validation.push_back(idx);
      cursor = (cursor + 1) % k;
    }
  }
  for (auto& f : plan.folds) {
    std::sort(f.validation.begin(), f.validation.end());
    std::vector<std::uint8_t> in_val(labels.size(), 0);
    for (auto i : f.validation) in_val[i] = 1;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (!in_val[i]) f.train.push_back(i);
  }
  return plan;
}

// --- training ---------------------------------------------------------------

namespace {

constexpr std::uint64_t kShuffleSalt = 0x73687566666c65ULL;

double split_loss(const model::FusionModel& m, const Split& s) {
  const auto pred = model::predict(m, s.views);
  return model::objective(m, pred, s.labels);
}

[[noreturn]] void non_finite(std::size_t epoch, double lr) {
  throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) +
                      "; lower the learning rate (currently " + std::to_string(lr) +
                      ") or check the input scaling and weight initialisation");
}

}  // namespace

TrainResult train_model(model::FusionModel& m, const Split& train, const Split& val,
                        const TrainConfig& config) {
  config.validate();
  if (train.labels.size() != train.views.size() || val.labels.size() != val.views.size())
    throw ShapeError("train_model: labels and inputs differ in length");
  TrainResult result;
  if (config.max_epochs == 0) return result;
  if (train.size() == 0) throw DataError("train_model: empty training split");

  Rng rng(config.seed ^ kShuffleSalt);
  ModelOptimizer opt(config);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  model::FusionModel best = m;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::vector<model::PatientView> views;
  std::vector<double> labels;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      views.clear();
      labels.clear();
      for (std::size_t i = start; i < end; ++i) {
        views.push_back(train.views[order[i]]);
        labels.push_back(train.labels[order[i]]);
      }
      m.zero_grad();
      const double loss = model::objective_and_gradients(m, views, labels);
      if (!std::isfinite(loss)) non_finite(epoch, config.learning_rate);
      sum += loss * static_cast<double>(end - start);
      opt.step(m);
    }
    const double train_loss = sum / static_cast<double>(order.size());
    const double val_loss = val.size() > 0 ? split_loss(m, val) : train_loss;
    if (!std::isfinite(val_loss)) non_finite(epoch, config.learning_rate);
    result.curve.push_back({epoch, train_loss, val_loss});

    if (val_loss < best_loss - config.min_delta) {
      best_loss = val_loss;
      best = m;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      result.stopped_early = epoch < config.max_epochs;
      break;
    }
  }
  m = std::move(best);
  m.zero_grad();
  result.best_val_loss = best_loss;
  return result;
}

// --- cross-validation -------------------------------------------------------

void Cohort::validate() const {
  genes.validate();
  if (genes.patients() != labels.size() || patches.size() != labels.size()) {
    throw DataError("cohort: " + std::to_string(genes.patients()) + " gene rows, " +
                    std::to_string(patches.size()) + " patch matrices, " +
                    std::to_string(labels.size()) + " labels");
  }
}

namespace {

std::vector<std::string> ids_of(const Cohort& c, const std::vector<std::size_t>& idx) {
  std::vector<std::string> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(c.genes.patient_ids[i]);
  return out;
}

void require_complete(const genomics::GeneMatrix& g) {
  if (g.missing_count() > 0) {
    throw DataError("gene matrix has " + std::to_string(g.missing_count()) +
                    " missing values; enable preprocessing to impute them");
  }
}

Split make_split(const Cohort& c, const std::vector<std::size_t>& idx, const genomics::GeneMatrix& genes) {
  Split s;
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto i = idx[r];
    s.views.push_back({c.genes.patient_ids[i], genes.values.row(r), &c.patches[i]});
    s.labels.push_back(static_cast<double>(c.labels[i]));
  }
  return s;
}

FoldResult run_fold(const Cohort& c, model::Strategy strategy, const ExperimentConfig& cfg,
                    const Fold& fold, std::size_t fold_index) {
  auto train_genes = c.genes.select_rows(fold.train);
  auto val_genes = c.genes.select_rows(fold.validation);
  if (cfg.preprocess) {
    auto fitted = genomics::fit_pipeline(train_genes, cfg.preprocessing);
    val_genes = genomics::apply_pipeline(val_genes, fitted.state).cleaned;
    train_genes = std::move(fitted.cleaned);
  } else {
    require_complete(train_genes);
    require_complete(val_genes);
  }

  const Split train = make_split(c, fold.train, train_genes);
  const Split val = make_split(c, fold.validation, val_genes);

  model::ModelDims dims = cfg.dims;
  dims.gene_dim = c.genes.genes();
  dims.feature_dim = c.patches.empty() ? 0 : c.patches.front().cols();
  const std::uint64_t fold_seed = cfg.train.seed ^ static_cast<std::uint64_t>(fold_index);
  auto m = model::make_model(strategy, dims, fold_seed);
  TrainConfig tc = cfg.train;
  tc.seed = fold_seed;
  const auto tr = train_model(m, train, val, tc);

  FoldResult r;
  r.fold = fold_index;
  r.train_ids = ids_of(c, fold.train);
  r.validation_ids = ids_of(c, fold.validation);
  for (auto i : fold.validation) r.validation_labels.push_back(c.labels[i]);
  r.predictions = model::predict(m, val.views).probability;
  r.metrics = metrics::evaluate(r.validation_labels, r.predictions, cfg.threshold, cfg.estimator);
  r.curve = tr.curve;
  r.best_epoch = tr.best_epoch;
  return r;
}

std::vector<CurvePoint> mean_curve(const std::vector<FoldResult>& folds) {
  if (folds.empty()) return {};
  std::size_t len = folds.front().curve.size();
  for (const auto& f : folds) len = std::min(len, f.curve.size());
  std::vector<CurvePoint> out(len);
  for (std::size_t e = 0; e < len; ++e) {
    out[e].epoch = e + 1;
    for (const auto& f : folds) {
      out[e].train_loss += f.curve[e].train_loss;
      out[e].val_loss += f.curve[e].val_loss;
    }
    out[e].train_loss /= static_cast<double>(folds.size());
    out[e].val_loss /= static_cast<double>(folds.size());
  }
  return out;
}

std::vector<FoldResult> run_folds(const Cohort& c, model::Strategy strategy, const ExperimentConfig& cfg,
                                  const FoldPlan& plan) {
  std::vector<FoldResult> results(plan.folds.size());
  if (!cfg.parallel_folds) {
    for (std::size_t f = 0; f < plan.folds.size(); ++f) results[f] = run_fold(c, strategy, cfg, plan.folds[f], f);
    return results;
  }
  std::vector<std::exception_ptr> errors(plan.folds.size());
  std::vector<std::thread> workers;
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    workers.emplace_back([&, f] {
      try {
        results[f] = run_fold(c, strategy, cfg, plan.folds[f], f);
      } catch (...) {
        errors[f] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

EvalReport assemble(model::Strategy strategy, const ExperimentConfig& cfg, std::vector<FoldResult> folds) {
  EvalReport rep;
  rep.strategy = strategy;
  rep.seed = cfg.train.seed;
  rep.pr_estimator = cfg.estimator == metrics::PrEstimator::trapezoid ? "trapezoid" : "average_precision";
  std::vector<metrics::MetricSet> sets;
  for (const auto& f : folds) sets.push_back(f.metrics);
  rep.aggregate = metrics::aggregate_folds(sets);
  if (cfg.pooled) {
    std::vector<int> y;
    std::vector<double> p;
    for (const auto& f : folds) {
      y.insert(y.end(), f.validation_labels.begin(), f.validation_labels.end());
      p.insert(p.end(), f.predictions.begin(), f.predictions.end());
    }
    rep.pooled = metrics::evaluate(y, p, cfg.threshold, cfg.estimator);
  }
  rep.mean_curve = mean_curve(folds);
  rep.folds = std::move(folds);
  return rep;
}

}  // namespace

EvalReport run_cv_experiment(const Cohort& cohort, model::Strategy strategy, const ExperimentConfig& config) {
  config.train.validate();
  cohort.validate();
  for (int c = 0; c < 2; ++c) {
    const auto n = static_cast<std::size_t>(std::count(cohort.labels.begin(), cohort.labels.end(), c));
    if (n < config.train.folds) {
      throw DataError("cross-validation: class " + std::to_string(c) + " has " + std::to_string(n) +
                      " members, fewer than folds=" + std::to_string(config.train.folds));
    }
  }
  const auto plan = stratified_kfold(cohort.labels, config.train.folds, config.train.seed);
  return assemble(strategy, config, run_folds(cohort, strategy, config, plan));
}

std::vector<AblationDelta> pairwise_deltas(const std::vector<EvalReport>& runs) {
  std::vector<AblationDelta> out;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    for (std::size_t j = i + 1; j < runs.size(); ++j) {
      const auto& a = runs[i].aggregate;
      const auto& b = runs[j].aggregate;
      out.push_back({runs[i].strategy, runs[j].strategy, a.accuracy.mean - b.accuracy.mean,
                     a.f1.mean - b.f1.mean, a.pr_auc.mean - b.pr_auc.mean});
    }
  }
  return out;
}

AblationReport run_ablation(const Cohort& cohort, const ExperimentConfig& config) {
  AblationReport rep;
  rep.seed = config.train.seed;
  for (auto s : model::kAllStrategies) rep.runs.push_back(run_cv_experiment(cohort, s, config));
  rep.deltas = pairwise_deltas(rep.runs);
  return rep;
}

const EvalReport& AblationReport::run(model::Strategy s) const {
  for (const auto& r : runs)
    if (r.strategy == s) return r;
  throw DataError("ablation report has no run for " + std::string(model::to_string(s)));
}

AblationDelta AblationReport::delta(model::Strategy a, model::Strategy b) const {
  for (const auto& d : deltas) {
    if (d.a == a && d.b == b) return d;
    if (d.a == b && d.b == a) return {a, b, -d.accuracy, -d.f1, -d.pr_auc};
  }
  throw DataError("ablation report has no delta " + std::string(model::to_string(a)) + " vs " +
                  std::string(model::to_string(b)));
}

}  // namespace fusilade::train
