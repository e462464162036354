#pragma once

// Report serialization. JSON output is canonical (sorted keys, no whitespace,
// 9 significant digits) so equal reports are equal bytes.

#include <filesystem>
#include <string>
#include <string_view>

#include "fusilade/genomics.hpp"
#include "fusilade/histology.hpp"
#include "fusilade/metrics.hpp"
#include "fusilade/train.hpp"

namespace fusilade::io {

enum class ReportFormat { json, csv_summary };

std::string to_json(const train::EvalReport& r);
std::string to_json(const train::AblationReport& r);
std::string to_json(const metrics::MetricSet& m);

/// Throw FormatError on malformed or wrong-version input.
train::EvalReport eval_report_from_json(std::string_view text);
train::AblationReport ablation_report_from_json(std::string_view text);

/// Parse and re-emit in canonical form.
std::string canonicalize_json(std::string_view text);

/// "strategy,fold,metric,value": one row per (fold, metric), then mean and std
/// rows per metric (fold column "mean" / "std").
std::string csv_summary(const train::EvalReport& r);
std::string csv_summary(const train::AblationReport& r);

/// "strategy,fold,epoch,train_loss,val_loss", per-fold curves then the mean curve.
std::string curve_csv(const train::EvalReport& r);
std::string curve_csv(const train::AblationReport& r);

void write_report(const train::EvalReport& r, const std::filesystem::path& path, ReportFormat format);
void write_report(const train::AblationReport& r, const std::filesystem::path& path, ReportFormat format);

/// Fitted preprocessing statistics, outlier list and z-score failures.
std::string pipeline_json(const genomics::PipelineResult& r);
std::string manifest_json(const histology::PatchManifest& m);

}  // namespace fusilade::io
