#include "fusilade/report.hpp"

#include <cstdio>

#include "canonical_json.hpp"
#include "fusilade/dataio.hpp"
#include "fusilade/errors.hpp"

namespace fusilade::io {

using nlohmann::json;

namespace {

json counts_json(const metrics::ConfusionCounts& c) {
  return {{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}};
}

metrics::ConfusionCounts counts_from(const json& j) {
  return {j.at("tp").get<std::uint64_t>(), j.at("fp").get<std::uint64_t>(), j.at("tn").get<std::uint64_t>(),
          j.at("fn").get<std::uint64_t>()};
}

json metric_set_json(const metrics::MetricSet& m) {
  return {{"accuracy", m.accuracy}, {"f1", m.f1}, {"mcc", m.mcc}, {"pr_auc", m.pr_auc}, {"confusion", counts_json(m.counts)}};
}

metrics::MetricSet metric_set_from(const json& j) {
  metrics::MetricSet m;
  m.accuracy = j.at("accuracy").get<double>();
  m.f1 = j.at("f1").get<double>();
  m.mcc = j.at("mcc").get<double>();
  m.pr_auc = j.at("pr_auc").get<double>();
  m.counts = counts_from(j.at("confusion"));
  return m;
}

json stats_json(const metrics::MetricStats& s) { return {{"mean", s.mean}, {"std", s.std}}; }
metrics::MetricStats stats_from(const json& j) { return {j.at("mean").get<double>(), j.at("std").get<double>()}; }

json curve_json(const std::vector<train::CurvePoint>& c) {
  json out = json::array();
  for (const auto& p : c) out.push_back({{"epoch", p.epoch}, {"train_loss", p.train_loss}, {"val_loss", p.val_loss}});
  return out;
}

std::vector<train::CurvePoint> curve_from(const json& j) {
  std::vector<train::CurvePoint> out;
  for (const auto& p : j)
    out.push_back({p.at("epoch").get<std::size_t>(), p.at("train_loss").get<double>(), p.at("val_loss").get<double>()});
  return out;
}

json eval_json(const train::EvalReport& r) {
  json j;
  j["format"] = "fusilade-eval-report";
  j["format_version"] = r.format_version;
  j["strategy"] = std::string(model::to_string(r.strategy));
  j["seed"] = r.seed;
  j["config"] = r.config;
  j["pr_estimator"] = r.pr_estimator;
  json folds = json::array();
  for (const auto& f : r.folds) {
    json preds = json::array();
    for (std::size_t i = 0; i < f.validation_ids.size(); ++i) {
      preds.push_back({{"patient_id", f.validation_ids[i]},
                       {"label", f.validation_labels.at(i)},
                       {"probability", f.predictions.at(i)}});
    }
    folds.push_back({{"fold", f.fold},
                     {"train_ids", f.train_ids},
                     {"validation_ids", f.validation_ids},
                     {"predictions", preds},
                     {"metrics", metric_set_json(f.metrics)},
                     {"curve", curve_json(f.curve)},
                     {"best_epoch", f.best_epoch}});
  }
  j["folds"] = folds;
  j["aggregate"] = {{"folds", r.aggregate.folds},
                    {"accuracy", stats_json(r.aggregate.accuracy)},
                    {"f1", stats_json(r.aggregate.f1)},
                    {"mcc", stats_json(r.aggregate.mcc)},
                    {"pr_auc", stats_json(r.aggregate.pr_auc)},
                    {"confusion", counts_json(r.aggregate.counts)}};
  if (r.pooled) j["pooled"] = metric_set_json(*r.pooled);
  j["mean_curve"] = curve_json(r.mean_curve);
  return j;
}

train::EvalReport eval_from(const json& j) {
  if (j.at("format").get<std::string>() != "fusilade-eval-report") throw FormatError("not an eval report");
  train::EvalReport r;
  r.format_version = j.at("format_version").get<int>();
  if (r.format_version != train::kReportFormatVersion) {
    throw FormatError("unsupported report format_version " + std::to_string(r.format_version));
  }
  r.strategy = model::parse_strategy(j.at("strategy").get<std::string>());
  r.seed = j.at("seed").get<std::uint64_t>();
  r.config = j.at("config").get<std::map<std::string, std::string>>();
  r.pr_estimator = j.at("pr_estimator").get<std::string>();
  for (const auto& fj : j.at("folds")) {
    train::FoldResult f;
    f.fold = fj.at("fold").get<std::size_t>();
    f.train_ids = fj.at("train_ids").get<std::vector<std::string>>();
    f.validation_ids = fj.at("validation_ids").get<std::vector<std::string>>();
    for (const auto& p : fj.at("predictions")) {
      if (p.at("patient_id").get<std::string>() != f.validation_ids.at(f.validation_labels.size())) {
        throw FormatError("prediction order does not match validation_ids");
      }
      f.validation_labels.push_back(p.at("label").get<int>());
      f.predictions.push_back(p.at("probability").get<double>());
    }
    if (f.predictions.size() != f.validation_ids.size()) throw FormatError("fold predictions incomplete");
    f.metrics = metric_set_from(fj.at("metrics"));
    f.curve = curve_from(fj.at("curve"));
    f.best_epoch = fj.at("best_epoch").get<std::size_t>();
    r.folds.push_back(std::move(f));
  }
  const auto& a = j.at("aggregate");
  r.aggregate.folds = a.at("folds").get<std::size_t>();
  r.aggregate.accuracy = stats_from(a.at("accuracy"));
  r.aggregate.f1 = stats_from(a.at("f1"));
  r.aggregate.mcc = stats_from(a.at("mcc"));
  r.aggregate.pr_auc = stats_from(a.at("pr_auc"));
  r.aggregate.counts = counts_from(a.at("confusion"));
  if (j.contains("pooled")) r.pooled = metric_set_from(j.at("pooled"));
  r.mean_curve = curve_from(j.at("mean_curve"));
  return r;
}

json ablation_json(const train::AblationReport& r) {
  json j;
  j["format"] = "fusilade-ablation-report";
  j["format_version"] = r.format_version;
  j["seed"] = r.seed;
  j["config"] = r.config;
  json runs = json::array();
  for (const auto& run : r.runs) runs.push_back(eval_json(run));
  j["runs"] = runs;
  json deltas = json::array();
  for (const auto& d : r.deltas) {
    deltas.push_back({{"a", std::string(model::to_string(d.a))},
                      {"b", std::string(model::to_string(d.b))},
                      {"accuracy", d.accuracy},
                      {"f1", d.f1},
                      {"pr_auc", d.pr_auc}});
  }
  j["deltas"] = deltas;
  return j;
}

template <typename F>
auto parse_with(std::string_view text, const char* what, F&& f) {
  try {
    return f(json::parse(text));
  } catch (const json::exception& e) {
    throw FormatError(std::string(what) + ": " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string(what) + ": " + e.what());
  }
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v == 0.0 ? 0.0 : v);
  return buf;
}

void summary_rows(const train::EvalReport& r, std::string& out) {
  const std::string s(model::to_string(r.strategy));
  for (const auto& f : r.folds) {
    const std::string fold = std::to_string(f.fold);
    out += s + ',' + fold + ",accuracy," + num(f.metrics.accuracy) + '\n';
    out += s + ',' + fold + ",f1," + num(f.metrics.f1) + '\n';
    out += s + ',' + fold + ",mcc," + num(f.metrics.mcc) + '\n';
    out += s + ',' + fold + ",pr_auc," + num(f.metrics.pr_auc) + '\n';
  }
  const auto& a = r.aggregate;
  for (const char* which : {"mean", "std"}) {
    const bool mean = which[0] == 'm';
    out += s + ',' + which + ",accuracy," + num(mean ? a.accuracy.mean : a.accuracy.std) + '\n';
    out += s + ',' + which + ",f1," + num(mean ? a.f1.mean : a.f1.std) + '\n';
    out += s + ',' + which + ",mcc," + num(mean ? a.mcc.mean : a.mcc.std) + '\n';
    out += s + ',' + which + ",pr_auc," + num(mean ? a.pr_auc.mean : a.pr_auc.std) + '\n';
  }
}

void curve_rows(const train::EvalReport& r, std::string& out) {
  const std::string s(model::to_string(r.strategy));
  auto rows = [&](const std::string& fold, const std::vector<train::CurvePoint>& c) {
    for (const auto& p : c)
      out += s + ',' + fold + ',' + std::to_string(p.epoch) + ',' + num(p.train_loss) + ',' + num(p.val_loss) + '\n';
  };
  for (const auto& f : r.folds) rows(std::to_string(f.fold), f.curve);
  rows("mean", r.mean_curve);
}

constexpr const char* kSummaryHeader = "strategy,fold,metric,value\n";
constexpr const char* kCurveHeader = "strategy,fold,epoch,train_loss,val_loss\n";

}  // namespace

std::string to_json(const train::EvalReport& r) { return detail::canonical_dump(eval_json(r)) + "\n"; }
std::string to_json(const train::AblationReport& r) { return detail::canonical_dump(ablation_json(r)) + "\n"; }
std::string to_json(const metrics::MetricSet& m) {
  json j = metric_set_json(m);
  j["format"] = "fusilade-metrics";
  j["format_version"] = train::kReportFormatVersion;
  return detail::canonical_dump(j) + "\n";
}

train::EvalReport eval_report_from_json(std::string_view text) {
  return parse_with(text, "eval report", [](const json& j) { return eval_from(j); });
}

train::AblationReport ablation_report_from_json(std::string_view text) {
  return parse_with(text, "ablation report", [](const json& j) {
    if (j.at("format").get<std::string>() != "fusilade-ablation-report") throw FormatError("not an ablation report");
    train::AblationReport r;
    r.format_version = j.at("format_version").get<int>();
    if (r.format_version != train::kReportFormatVersion) {
      throw FormatError("unsupported report format_version " + std::to_string(r.format_version));
    }
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config = j.at("config").get<std::map<std::string, std::string>>();
    for (const auto& run : j.at("runs")) r.runs.push_back(eval_from(run));
    for (const auto& d : j.at("deltas")) {
      r.deltas.push_back({model::parse_strategy(d.at("a").get<std::string>()),
                          model::parse_strategy(d.at("b").get<std::string>()), d.at("accuracy").get<double>(),
                          d.at("f1").get<double>(), d.at("pr_auc").get<double>()});
    }
    return r;
  });
}

std::string canonicalize_json(std::string_view text) {
  return parse_with(text, "json", [](const json& j) { return detail::canonical_dump(j) + "\n"; });
}

std::string csv_summary(const train::EvalReport& r) {
  std::string out = kSummaryHeader;
  summary_rows(r, out);
  return out;
}

std::string csv_summary(const train::AblationReport& r) {
  std::string out = kSummaryHeader;
  for (const auto& run : r.runs) summary_rows(run, out);
  return out;
}

std::string curve_csv(const train::EvalReport& r) {
  std::string out = kCurveHeader;
  curve_rows(r, out);
  return out;
}

std::string curve_csv(const train::AblationReport& r) {
  std::string out = kCurveHeader;
  for (const auto& run : r.runs) curve_rows(run, out);
  return out;
}

void write_report(const train::EvalReport& r, const std::filesystem::path& path, ReportFormat format) {
  write_text(path, format == ReportFormat::json ? to_json(r) : csv_summary(r));
}

void write_report(const train::AblationReport& r, const std::filesystem::path& path, ReportFormat format) {
  write_text(path, format == ReportFormat::json ? to_json(r) : csv_summary(r));
}

std::string pipeline_json(const genomics::PipelineResult& r) {
  const auto& s = r.state;
  const auto& genes = r.cleaned.gene_ids;
  json j;
  j["format"] = "fusilade-gene-stats";
  j["format_version"] = 1;
  j["shift"] = s.shift;
  j["options"] = {{"iqr_k", s.options.iqr_k},
                  {"iqr_axis", s.options.iqr_axis == genomics::IqrAxis::per_gene ? "per_gene" : "per_patient"},
                  {"impute", s.options.impute == genomics::ImputeStrategy::mean ? "mean" : "median"}};
  json per_gene = json::array();
  for (std::size_t g = 0; g < genes.size(); ++g) {
    json e = {{"gene_id", genes[g]}};
    if (g < s.zscore.size()) {
      e["mean"] = s.zscore[g].mean;
      e["std"] = s.zscore[g].std;
      e["constant"] = s.zscore[g].constant;
      e["fitted"] = s.zscore[g].fitted;
    }
    if (g < s.fences.size() && s.fences[g].fitted) {
      e["q1"] = s.fences[g].q1;
      e["q3"] = s.fences[g].q3;
      e["lower_fence"] = s.fences[g].lower;
      e["upper_fence"] = s.fences[g].upper;
    }
    if (g < s.impute_values.size()) e["impute_value"] = s.impute_values[g];
    per_gene.push_back(e);
  }
  j["genes"] = per_gene;
  json outliers = json::array();
  for (const auto& o : r.outliers) {
    outliers.push_back({{"patient_id", o.patient_id}, {"gene_id", o.gene_id}, {"value", o.value},
                        {"lower", o.lower}, {"upper", o.upper}});
  }
  j["outliers"] = outliers;
  json failures = json::array();
  for (const auto& f : r.zscore_failures) failures.push_back({{"gene_id", f.gene_id}, {"present_values", f.present_values}});
  j["zscore_failures"] = failures;
  return detail::canonical_dump(j) + "\n";
}

std::string manifest_json(const histology::PatchManifest& m) {
  json j;
  j["format"] = "fusilade-patch-manifest";
  j["format_version"] = 1;
  j["source_id"] = m.source_id;
  j["otsu_threshold"] = m.threshold;
  j["degenerate"] = m.degenerate;
  j["options"] = {{"patch", m.options.patch}, {"stride", m.options.stride},
                  {"min_tissue_fraction", m.options.min_tissue_fraction}};
  json grid = json::array();
  for (const auto& p : m.grid) {
    grid.push_back({{"x", p.x}, {"y", p.y}, {"tissue_fraction", p.tissue_fraction}, {"accepted", p.accepted}});
  }
  j["grid"] = grid;
  return detail::canonical_dump(j) + "\n";
}

}  // namespace fusilade::io
