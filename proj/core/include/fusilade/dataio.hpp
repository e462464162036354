#pragma once

// On-disk formats and dataset assembly: gene CSV, label CSV, PFM1 patch
// feature files, bundle directories and the synthetic cohort generator.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fusilade/errors.hpp"
#include "fusilade/genomics.hpp"
#include "fusilade/model.hpp"
#include "fusilade/train.hpp"

namespace fusilade::io {

// --- CSV --------------------------------------------------------------------

/// Header "patient_id,<gene>...", one row per patient, empty cell = missing.
/// Throws FormatError with the 1-based line number on malformed rows and on
/// duplicate patient or gene IDs.
genomics::GeneMatrix read_gene_csv(const std::filesystem::path& path);
genomics::GeneMatrix parse_gene_csv(std::string_view text, const std::string& source = "<memory>");
/// Present values printed with 17 significant digits, missing as empty cells.
std::string format_gene_csv(const genomics::GeneMatrix& m);
void write_gene_csv(const genomics::GeneMatrix& m, const std::filesystem::path& path);

/// Header "patient_id,label"; labels are 0/1 or BRCA subtype names.
genomics::LabelMap read_labels_csv(const std::filesystem::path& path);
genomics::LabelMap parse_labels_csv(std::string_view text, const std::string& source = "<memory>");
void write_labels_csv(const genomics::LabelMap& labels, const std::filesystem::path& path);

struct PredictionTable {
  std::vector<std::string> patient_ids;  // empty when the file has no patient_id column
  std::vector<int> labels;
  std::vector<double> probabilities;
};

/// CSV with a header naming a `label` column and a `probability` column
/// (other columns are ignored).
PredictionTable read_predictions_csv(const std::filesystem::path& path);
PredictionTable parse_predictions_csv(std::string_view text, const std::string& source = "<memory>");

// --- PFM1 -------------------------------------------------------------------

class PfmError : public FormatError {
 public:
  enum class Kind { bad_magic, truncated, trailing_bytes, non_finite, invalid };
  PfmError(Kind kind, const std::string& what) : FormatError(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// "PFM1", u16 ID length, ID bytes, u32 rows, u32 cols, rows*cols f32
/// little-endian row-major. Values are narrowed to f32 on encode.
std::vector<std::uint8_t> encode_pfm(const model::PatchFeatureMatrix& m);
model::PatchFeatureMatrix decode_pfm(std::span<const std::uint8_t> bytes, const std::string& source = "<memory>");
void write_feature_matrix(const model::PatchFeatureMatrix& m, const std::filesystem::path& path);
model::PatchFeatureMatrix read_feature_matrix(const std::filesystem::path& path);

// --- bundles ----------------------------------------------------------------

struct DatasetBundle {
  genomics::GeneMatrix genes;
  std::map<std::string, model::PatchFeatureMatrix> features;  // by patient ID
  genomics::LabelMap labels;
  std::map<std::string, std::string> provenance;
};

inline constexpr int kBundleFormatVersion = 1;

/// dir/genes.csv, dir/labels.csv, dir/features/<patient>.pfm, dir/bundle.json.
void write_bundle(const DatasetBundle& bundle, const std::filesystem::path& dir);
DatasetBundle read_bundle(const std::filesystem::path& dir);

/// Aligns the three members (genomics::align_and_label) into training order.
/// Throws DataError when patch matrices disagree in width.
train::Cohort to_cohort(const DatasetBundle& bundle);

// --- synthetic cohort -------------------------------------------------------

struct SynthOptions {
  std::size_t n_patients = 200;
  std::size_t genes = 50;
  std::size_t patches = 16;
  std::size_t dims = 32;
  double gene_snr = 2.0;
  double image_snr = 0.5;
  double overlap = 0.5;  // share of the image signal carried by the gene latent
  std::uint64_t seed = 7;
  // Shape of the image signal.
  double informative_fraction = 0.25;  // patches carrying class signal
  double image_scale = 4.0;            // per-unit-snr amplitude on informative patches
  double marker = 6.0;                 // class-free offset marking informative patches
  double distractor = 3.0;             // class-free noise along the signal axis elsewhere
  double gene_latent_noise = 0.6;
  double image_latent_noise = 0.3;

  /// Throws ConfigError.
  void validate() const;
};

/// Labels y ~ Bernoulli(0.5), s = 2y - 1. Latents u = s + N(0, gene_latent_noise^2)
/// and v = s + N(0, image_latent_noise^2). Expression is exp(8 + gene_snr u a + N(0, I))
/// for a random unit direction a. Patch rows are N(0, I); informative patches add
/// image_snr image_scale (overlap u + (1 - overlap) v) b + marker c, the others add
/// distractor N(0, 1) b, with b and c orthonormal. A pure function of the options.
DatasetBundle generate_synthetic(const SynthOptions& options);

// --- files ------------------------------------------------------------------

/// Throws FormatError naming the path.
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace fusilade::io
