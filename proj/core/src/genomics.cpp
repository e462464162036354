#include "fusilade/genomics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "fusilade/errors.hpp"

namespace fusilade::genomics {

namespace {

void require_unique(const std::vector<std::string>& ids, const char* what) {
  std::unordered_set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) throw FormatError(std::string("duplicate ") + what + " ID '" + id + "'");
  }
}

std::vector<double> present_in_gene(const GeneMatrix& m, std::size_t g) {
  std::vector<double> out;
  out.reserve(m.patients());
  for (std::size_t p = 0; p < m.patients(); ++p)
    if (m.is_present(p, g)) out.push_back(m.values(p, g));
  return out;
}

}  // namespace

GeneMatrix::GeneMatrix(std::vector<std::string> patients, std::vector<std::string> genes, Tensor2 v)
    : patient_ids(std::move(patients)),
      gene_ids(std::move(genes)),
      values(std::move(v)),
      present(values.size(), 1) {
  validate();
}

std::size_t GeneMatrix::missing_count() const noexcept {
  return static_cast<std::size_t>(std::count(present.begin(), present.end(), std::uint8_t{0}));
}

void GeneMatrix::validate() const {
  if (values.rows() != patient_ids.size() || values.cols() != gene_ids.size()) {
    throw ShapeError("GeneMatrix: values " + values.shape_str() + " vs " +
                     std::to_string(patient_ids.size()) + " patients x " +
                     std::to_string(gene_ids.size()) + " genes");
  }
  if (present.size() != values.size()) throw ShapeError("GeneMatrix: mask size mismatch");
  require_unique(patient_ids, "patient");
  require_unique(gene_ids, "gene");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (present[i] && !std::isfinite(values.values()[i])) {
      throw FormatError("GeneMatrix: non-finite present value at patient '" +
                        patient_ids[i / genes()] + "', gene '" + gene_ids[i % genes()] + "'");
    }
  }
}

GeneMatrix GeneMatrix::select_rows(const std::vector<std::size_t>& rows) const {
  GeneMatrix out;
  out.gene_ids = gene_ids;
  out.shift = shift;
  out.values = Tensor2(rows.size(), genes());
  out.present.assign(rows.size() * genes(), 0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows.at(i);
    out.patient_ids.push_back(patient_ids.at(r));
    std::copy(values.row(r).begin(), values.row(r).end(), out.values.row(i).begin());
    std::copy_n(present.begin() + static_cast<std::ptrdiff_t>(r * genes()), genes(),
                out.present.begin() + static_cast<std::ptrdiff_t>(i * genes()));
  }
  return out;
}

std::optional<int> label_from_subtype(const std::string& subtype) {
  if (subtype == "0" || subtype == "BRCA.Luminal" || subtype == "BRCA.LumA" ||
      subtype == "BRCA.LumB")
    return 0;
  if (subtype == "1" || subtype == "BRCA.Basal" || subtype == "BRCA.Her2" ||
      subtype == "BRCA.Basal/Her2")
    return 1;
  return std::nullopt;
}

// --- shift-log --------------------------------------------------------------

double fit_shift(const GeneMatrix& m) {
  double mn = std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    if (!m.present[i]) continue;
    any = true;
    mn = std::min(mn, m.values.values()[i]);
  }
  if (!any) throw DataError("shift_log_transform: matrix has no present values");
  return mn < 0.0 ? std::abs(mn) + 1.0 : 1.0;
}

GeneMatrix apply_shift_log(const GeneMatrix& m, double shift) {
  GeneMatrix out = m;
  out.shift = shift;
  auto vals = out.values.values();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    if (!out.present[i]) continue;
    const double arg = vals[i] + shift;
    if (arg <= 0.0) {
      out.present[i] = 0;
      continue;
    }
    vals[i] = std::log(arg);
  }
  return out;
}

GeneMatrix shift_log_transform(const GeneMatrix& m) {
  if (m.values.empty()) throw DataError("shift_log_transform: empty matrix");
  return apply_shift_log(m, fit_shift(m));
}

// --- z-score ----------------------------------------------------------------

ZScoreResult zscore_normalize(const GeneMatrix& m) {
  ZScoreResult r;
  r.stats.resize(m.genes());
  for (std::size_t g = 0; g < m.genes(); ++g) {
    const auto vals = present_in_gene(m, g);
    auto& st = r.stats[g];
    if (vals.size() < 2) {
      st.fitted = false;
      r.failures.push_back({m.gene_ids[g], vals.size()});
      continue;
    }
    const double n = static_cast<double>(vals.size());
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    st.mean = mean;
    st.std = std::sqrt(var / n);
    st.constant = st.std < kConstantStdThreshold;
  }
  r.matrix = apply_zscore(m, r.stats);
  return r;
}

GeneMatrix apply_zscore(const GeneMatrix& m, const std::vector<GeneStats>& stats) {
  if (stats.size() != m.genes()) {
    throw ShapeError("apply_zscore: " + std::to_string(stats.size()) + " stats for " +
                     std::to_string(m.genes()) + " genes");
  }
  GeneMatrix out = m;
  for (std::size_t p = 0; p < out.patients(); ++p) {
    for (std::size_t g = 0; g < out.genes(); ++g) {
      const auto& st = stats[g];
      if (!out.is_present(p, g) || !st.fitted) continue;
      double& v = out.values(p, g);
      v = st.constant ? 0.0 : (v - st.mean) / st.std;
    }
  }
  return out;
}

// --- IQR --------------------------------------------------------------------

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw DataError("quantile of empty sample");
  const double pos = static_cast<double>(sorted.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

namespace {

Fence make_fence(std::vector<double> vals, double k) {
  Fence f;
  if (vals.empty()) return f;
  std::sort(vals.begin(), vals.end());
  f.q1 = quantile_sorted(vals, 0.25);
  f.q3 = quantile_sorted(vals, 0.75);
  const double iqr = f.q3 - f.q1;
  f.lower = f.q1 - k * iqr;
  f.upper = f.q3 + k * iqr;
  f.fitted = true;
  return f;
}

void mask_cell(IqrResult& r, std::size_t p, std::size_t g, const Fence& f) {
  const double v = r.matrix.values(p, g);
  if (!f.fitted || !r.matrix.is_present(p, g)) return;
  if (v < f.lower || v > f.upper) {
    r.matrix.set_missing(p, g);
    r.outliers.push_back({r.matrix.patient_ids[p], r.matrix.gene_ids[g], v, f.lower, f.upper});
  }
}

}  // namespace

IqrResult iqr_outlier_filter(const GeneMatrix& m, double k, IqrAxis axis) {
  if (!(k >= 0.0)) throw ConfigError("iqr_outlier_filter: fence multiplier must be >= 0");
  IqrResult r;
  r.matrix = m;
  if (axis == IqrAxis::per_gene) {
    r.fences.reserve(m.genes());
    for (std::size_t g = 0; g < m.genes(); ++g) r.fences.push_back(make_fence(present_in_gene(m, g), k));
    for (std::size_t p = 0; p < m.patients(); ++p)
      for (std::size_t g = 0; g < m.genes(); ++g) mask_cell(r, p, g, r.fences[g]);
  } else {
    r.fences.reserve(m.patients());
    for (std::size_t p = 0; p < m.patients(); ++p) {
      std::vector<double> vals;
      for (std::size_t g = 0; g < m.genes(); ++g)
        if (m.is_present(p, g)) vals.push_back(m.values(p, g));
      r.fences.push_back(make_fence(std::move(vals), k));
    }
    for (std::size_t p = 0; p < m.patients(); ++p)
      for (std::size_t g = 0; g < m.genes(); ++g) mask_cell(r, p, g, r.fences[p]);
  }
  return r;
}

IqrResult apply_iqr_fences(const GeneMatrix& m, const std::vector<Fence>& fences) {
  if (fences.size() != m.genes()) {
    throw ShapeError("apply_iqr_fences: " + std::to_string(fences.size()) + " fences for " +
                     std::to_string(m.genes()) + " genes");
  }
  IqrResult r;
  r.matrix = m;
  r.fences = fences;
  for (std::size_t p = 0; p < m.patients(); ++p)
    for (std::size_t g = 0; g < m.genes(); ++g) mask_cell(r, p, g, fences[g]);
  return r;
}

// --- imputation -------------------------------------------------------------

std::vector<double> fit_impute_values(const GeneMatrix& m, ImputeStrategy strategy) {
  std::vector<double> fill(m.genes());
  for (std::size_t g = 0; g < m.genes(); ++g) {
    auto vals = present_in_gene(m, g);
    if (vals.empty()) throw DataError("impute_missing: gene '" + m.gene_ids[g] + "' has no present values");
    if (strategy == ImputeStrategy::mean) {
      double s = 0.0;
      for (double v : vals) s += v;
      fill[g] = s / static_cast<double>(vals.size());
    } else {
      std::sort(vals.begin(), vals.end());
      const std::size_t n = vals.size();
      fill[g] = n % 2 == 1 ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
    }
  }
  return fill;
}

GeneMatrix apply_impute(const GeneMatrix& m, const std::vector<double>& fill) {
  if (fill.size() != m.genes()) throw ShapeError("apply_impute: fill vector length mismatch");
  GeneMatrix out = m;
  for (std::size_t p = 0; p < out.patients(); ++p) {
    for (std::size_t g = 0; g < out.genes(); ++g) {
      if (out.is_present(p, g)) continue;
      out.values(p, g) = fill[g];
    }
  }
  std::fill(out.present.begin(), out.present.end(), std::uint8_t{1});
  return out;
}

GeneMatrix impute_missing(const GeneMatrix& m, ImputeStrategy strategy) {
  return apply_impute(m, fit_impute_values(m, strategy));
}

// --- alignment --------------------------------------------------------------

AlignResult align_and_label(const GeneMatrix& m, const std::set<std::string>& image_patient_ids,
                            const LabelMap& labels) {
  AlignResult r;
  std::vector<std::pair<std::string, std::size_t>> keep;
  std::set<std::string> gene_patients(m.patient_ids.begin(), m.patient_ids.end());
  for (std::size_t i = 0; i < m.patient_ids.size(); ++i) {
    const auto& id = m.patient_ids[i];
    const bool has_image = image_patient_ids.count(id) > 0;
    const bool has_label = labels.count(id) > 0;
    if (!has_image) r.dropped_no_image.push_back(id);
    if (!has_label) r.dropped_no_label.push_back(id);
    if (has_image && has_label) keep.emplace_back(id, i);
  }
  for (const auto& id : image_patient_ids)
    if (!gene_patients.count(id)) r.dropped_no_genes.push_back(id);
  for (const auto& [id, _] : labels)
    if (!gene_patients.count(id) && !image_patient_ids.count(id)) r.dropped_no_genes.push_back(id);
  std::sort(r.dropped_no_image.begin(), r.dropped_no_image.end());
  std::sort(r.dropped_no_label.begin(), r.dropped_no_label.end());
  std::sort(r.dropped_no_genes.begin(), r.dropped_no_genes.end());

  if (keep.empty()) throw DataError("no aligned patients");
  std::sort(keep.begin(), keep.end());
  std::vector<std::size_t> rows;
  for (const auto& [id, idx] : keep) {
    rows.push_back(idx);
    const int label = labels.at(id);
    if (label != 0 && label != 1) throw DataError("label for '" + id + "' is not 0 or 1");
    r.labels.push_back(label);
  }
  r.matrix = m.select_rows(rows);
  return r;
}

// --- pipeline ---------------------------------------------------------------

PipelineResult fit_pipeline(const GeneMatrix& m, const PipelineOptions& options) {
  PipelineResult r;
  r.state.options = options;
  GeneMatrix logged = shift_log_transform(m);
  r.state.shift = *logged.shift;
  ZScoreResult z = zscore_normalize(logged);
  r.state.zscore = z.stats;
  r.zscore_failures = std::move(z.failures);
  r.normalized = std::move(z.matrix);
  IqrResult iq = iqr_outlier_filter(r.normalized, options.iqr_k, options.iqr_axis);
  if (options.iqr_axis == IqrAxis::per_gene) r.state.fences = iq.fences;
  r.outliers = std::move(iq.outliers);
  r.state.impute_values = fit_impute_values(iq.matrix, options.impute);
  r.cleaned = apply_impute(iq.matrix, r.state.impute_values);
  return r;
}

PipelineResult apply_pipeline(const GeneMatrix& m, const PipelineState& state) {
  PipelineResult r;
  r.state = state;
  GeneMatrix logged = apply_shift_log(m, state.shift);
  r.replay_unloggable = logged.missing_count() - m.missing_count();
  r.normalized = apply_zscore(logged, state.zscore);
  IqrResult iq = state.options.iqr_axis == IqrAxis::per_gene
                     ? apply_iqr_fences(r.normalized, state.fences)
                     : iqr_outlier_filter(r.normalized, state.options.iqr_k, IqrAxis::per_patient);
  r.outliers = std::move(iq.outliers);
  r.cleaned = apply_impute(iq.matrix, state.impute_values);
  return r;
}

}  // namespace fusilade::genomics
