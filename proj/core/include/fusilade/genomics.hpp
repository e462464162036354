#pragma once

// Gene-expression cleaning: shift-log transform, per-gene z-scoring, IQR
// outlier masking, imputation and cross-modality alignment.
//
// Each stage has a fitting form (computes statistics from the matrix it is
// given) and a replay form (applies previously fitted statistics), so
// cross-validation can fit on training patients and replay on held-out ones.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fusilade/tensor.hpp"

namespace fusilade::genomics {

struct GeneMatrix {
  std::vector<std::string> patient_ids;
  std::vector<std::string> gene_ids;
  Tensor2 values;                 // patients x genes
  std::vector<std::uint8_t> present;  // row-major, 1 = observed
  std::optional<double> shift;    // recorded by shift_log_transform

  GeneMatrix() = default;
  /// Fully observed matrix. Throws on shape mismatch or duplicate IDs.
  GeneMatrix(std::vector<std::string> patients, std::vector<std::string> genes, Tensor2 v);

  std::size_t patients() const noexcept { return values.rows(); }
  std::size_t genes() const noexcept { return values.cols(); }
  bool is_present(std::size_t p, std::size_t g) const noexcept {
    return present[p * genes() + g] != 0;
  }
  void set_missing(std::size_t p, std::size_t g) noexcept { present[p * genes() + g] = 0; }
  std::size_t missing_count() const noexcept;

  /// Checks unique IDs, mask/value shape and finiteness of present values.
  void validate() const;

  GeneMatrix select_rows(const std::vector<std::size_t>& rows) const;
};

using LabelMap = std::map<std::string, int>;

/// BRCA.Luminal -> 0, BRCA.Basal / BRCA.Her2 -> 1. Also accepts "0"/"1".
std::optional<int> label_from_subtype(const std::string& subtype);

// --- shift-log --------------------------------------------------------------

/// s = |global min| + 1 if min < 0, else 1, over present values.
double fit_shift(const GeneMatrix& m);

/// ln(v + s) on present values, with s from fit_shift; s is stored in `shift`.
GeneMatrix shift_log_transform(const GeneMatrix& m);

/// Replay with a known shift. Values with v + s <= 0 cannot be logged and are
/// masked as missing.
GeneMatrix apply_shift_log(const GeneMatrix& m, double shift);

// --- z-score ----------------------------------------------------------------

struct GeneStats {
  double mean = 0.0;
  double std = 1.0;
  bool constant = false;
  bool fitted = true;  // false when fewer than 2 present values
};

struct GeneFailure {
  std::string gene_id;
  std::size_t present_values = 0;
};

struct ZScoreResult {
  GeneMatrix matrix;
  std::vector<GeneStats> stats;
  std::vector<GeneFailure> failures;
};

inline constexpr double kConstantStdThreshold = 1e-12;

/// Per-gene (v - mean) / std with population std. Constant genes map to 0.
/// Genes with < 2 present values are listed in `failures` and left untouched.
ZScoreResult zscore_normalize(const GeneMatrix& m);
GeneMatrix apply_zscore(const GeneMatrix& m, const std::vector<GeneStats>& stats);

// --- IQR outliers -----------------------------------------------------------

enum class IqrAxis { per_gene, per_patient };

struct Fence {
  double q1 = 0.0;
  double q3 = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool fitted = false;  // false when the gene/patient had no present values
};

struct OutlierRecord {
  std::string patient_id;
  std::string gene_id;
  double value = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct IqrResult {
  GeneMatrix matrix;
  std::vector<Fence> fences;  // one per gene (or per patient)
  std::vector<OutlierRecord> outliers;
};

/// Linear-interpolation quantile of sorted values at position (n - 1) q.
double quantile_sorted(const std::vector<double>& sorted, double q);

/// Values outside [Q1 - k IQR, Q3 + k IQR] are masked; values never change.
IqrResult iqr_outlier_filter(const GeneMatrix& m, double k = 1.5,
                             IqrAxis axis = IqrAxis::per_gene);
/// Replays per-gene fences. Returns the masked matrix and the outliers found.
IqrResult apply_iqr_fences(const GeneMatrix& m, const std::vector<Fence>& fences);

// --- imputation -------------------------------------------------------------

enum class ImputeStrategy { mean, median };

/// Per-gene fill value from present entries. Throws DataError naming a gene
/// with no present values.
std::vector<double> fit_impute_values(const GeneMatrix& m, ImputeStrategy strategy);
GeneMatrix apply_impute(const GeneMatrix& m, const std::vector<double>& fill);
GeneMatrix impute_missing(const GeneMatrix& m, ImputeStrategy strategy);

// --- alignment --------------------------------------------------------------

struct AlignResult {
  GeneMatrix matrix;             // rows sorted by patient ID
  std::vector<int> labels;
  std::vector<std::string> dropped_no_image;
  std::vector<std::string> dropped_no_label;
  std::vector<std::string> dropped_no_genes;  // image/label entries without expression
};

/// Keeps patients present in the gene matrix, the image set and the label map.
/// Throws DataError("no aligned patients") when the intersection is empty.
AlignResult align_and_label(const GeneMatrix& m, const std::set<std::string>& image_patient_ids,
                            const LabelMap& labels);

// --- full pipeline ----------------------------------------------------------

struct PipelineOptions {
  double iqr_k = 1.5;
  IqrAxis iqr_axis = IqrAxis::per_gene;
  ImputeStrategy impute = ImputeStrategy::mean;
};

/// Everything needed to replay the cleaning on unseen patients.
struct PipelineState {
  PipelineOptions options;
  double shift = 1.0;
  std::vector<GeneStats> zscore;
  std::vector<Fence> fences;
  std::vector<double> impute_values;
};

struct PipelineResult {
  PipelineState state;
  GeneMatrix normalized;  // after shift-log and z-score
  GeneMatrix cleaned;     // after outlier masking and imputation
  std::vector<GeneFailure> zscore_failures;
  std::vector<OutlierRecord> outliers;
  std::size_t replay_unloggable = 0;  // values masked during shift-log replay
};

/// Fixed order: shift_log -> zscore -> iqr_filter -> impute.
PipelineResult fit_pipeline(const GeneMatrix& m, const PipelineOptions& options = {});
PipelineResult apply_pipeline(const GeneMatrix& m, const PipelineState& state);

}  // namespace fusilade::genomics
