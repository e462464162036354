#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "fusilade/errors.hpp"
#include "fusilade/genomics.hpp"
#include "fusilade/rng.hpp"

using namespace fusilade;
using genomics::GeneMatrix;

namespace {

std::vector<std::string> ids(const std::string& prefix, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

GeneMatrix column(const std::vector<double>& v) {
  Tensor2 t(v.size(), 1);
  for (std::size_t i = 0; i < v.size(); ++i) t(i, 0) = v[i];
  return GeneMatrix(ids("p", v.size()), {"g"}, t);
}

/// Log-normal expression with injected missing cells and large outliers.
GeneMatrix noisy_matrix(std::uint64_t seed, std::size_t n = 50, std::size_t g = 200) {
  Rng rng(seed);
  Tensor2 t(n, g);
  for (auto& v : t.values()) v = std::exp(5.0 + rng.normal());
  GeneMatrix m(ids("p", n), ids("g", g), t);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t j = 0; j < g; ++j) {
      const double u = rng.uniform();
      if (u < 0.05) m.set_missing(p, j);
      else if (u < 0.07) m.values(p, j) *= 1e4;
    }
  }
  return m;
}

struct Moments {
  double mean = 0, std = 0;
  std::size_t n = 0;
};

Moments present_moments(const GeneMatrix& m, std::size_t g) {
  Moments r;
  for (std::size_t p = 0; p < m.patients(); ++p) {
    if (!m.is_present(p, g)) continue;
    r.mean += m.values(p, g);
    ++r.n;
  }
  r.mean /= static_cast<double>(r.n);
  for (std::size_t p = 0; p < m.patients(); ++p)
    if (m.is_present(p, g)) r.std += (m.values(p, g) - r.mean) * (m.values(p, g) - r.mean);
  r.std = std::sqrt(r.std / static_cast<double>(r.n));
  return r;
}

}  // namespace

TEST_SUITE("genomics") {

TEST_CASE("shift-log example is exact") {
  const auto m = genomics::shift_log_transform(column({-4.0, 0.0, 3.0}));
  CHECK(*m.shift == 5.0);
  CHECK(m.values(0, 0) == 0.0);
  CHECK(m.values(1, 0) == std::log(5.0));
  CHECK(m.values(2, 0) == std::log(8.0));
  CHECK(genomics::fit_shift(column({0.5, 2.0})) == 1.0);
}

TEST_CASE("shift-log replay masks values it cannot log") {
  const auto m = genomics::apply_shift_log(column({-10.0, 1.0}), 5.0);
  CHECK_FALSE(m.is_present(0, 0));
  CHECK(m.is_present(1, 0));
}

TEST_CASE("IQR example masks exactly the outlier") {
  const auto r = genomics::iqr_outlier_filter(column({1, 2, 3, 4, 5, 6, 7, 8, 9, 100}));
  REQUIRE(r.fences.size() == 1);
  CHECK(r.fences[0].q1 == 3.25);
  CHECK(r.fences[0].q3 == 7.75);
  CHECK(r.fences[0].upper == 14.5);
  CHECK(r.fences[0].lower == -3.5);
  REQUIRE(r.outliers.size() == 1);
  CHECK(r.outliers[0].value == 100.0);
  CHECK(r.outliers[0].patient_id == "p9");
  CHECK(r.matrix.missing_count() == 1);
  CHECK_FALSE(r.matrix.is_present(9, 0));
  CHECK(r.matrix.values(9, 0) == 100.0);
}

TEST_CASE("quantile uses linear interpolation at (n - 1) q") {
  CHECK(genomics::quantile_sorted({1, 2, 3, 4}, 0.5) == 2.5);
  CHECK(genomics::quantile_sorted({7}, 0.25) == 7.0);
  CHECK(genomics::quantile_sorted({0, 10}, 0.25) == 2.5);
  CHECK_THROWS_AS(genomics::quantile_sorted({}, 0.5), DataError);
}

TEST_CASE("z-score property holds on every non-constant gene over many matrices") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto r = genomics::fit_pipeline(noisy_matrix(seed));
    double worst_mean = 0, worst_std = 0;
    for (std::size_t g = 0; g < r.normalized.genes(); ++g) {
      if (r.state.zscore[g].constant || !r.state.zscore[g].fitted) continue;
      const auto mo = present_moments(r.normalized, g);
      worst_mean = std::max(worst_mean, std::abs(mo.mean));
      worst_std = std::max(worst_std, std::abs(mo.std - 1.0));
    }
    CHECK(worst_mean < 1e-9);
    CHECK(worst_std < 1e-9);
    CHECK(r.cleaned.missing_count() == 0);
    CHECK_FALSE(r.outliers.empty());
  }
}

TEST_CASE("constant genes map to zero and sparse genes are reported") {
  Tensor2 t = Tensor2::from_rows({{2, 1}, {2, 5}, {2, 3}});
  GeneMatrix m({"a", "b", "c"}, {"flat", "sparse"}, t);
  m.set_missing(0, 1);
  m.set_missing(1, 1);
  const auto z = genomics::zscore_normalize(m);
  CHECK(z.stats[0].constant);
  for (std::size_t p = 0; p < 3; ++p) CHECK(z.matrix.values(p, 0) == 0.0);
  REQUIRE(z.failures.size() == 1);
  CHECK(z.failures[0].gene_id == "sparse");
  CHECK(z.failures[0].present_values == 1);
  CHECK(z.matrix.values(2, 1) == 3.0);
}

TEST_CASE("imputation fills per gene and names genes it cannot fill") {
  Tensor2 t = Tensor2::from_rows({{1, 9}, {2, 9}, {4, 9}, {100, 9}});
  GeneMatrix m({"a", "b", "c", "d"}, {"x", "y"}, t);
  m.set_missing(3, 0);
  const auto mean = genomics::impute_missing(m, genomics::ImputeStrategy::mean);
  CHECK(mean.values(3, 0) == doctest::Approx(7.0 / 3));
  CHECK(mean.missing_count() == 0);
  const auto med = genomics::impute_missing(m, genomics::ImputeStrategy::median);
  CHECK(med.values(3, 0) == 2.0);
  for (std::size_t p = 0; p < 4; ++p) m.set_missing(p, 1);
  try {
    genomics::impute_missing(m, genomics::ImputeStrategy::mean);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("'y'") != std::string::npos);
  }
}

TEST_CASE("alignment keeps the three-way intersection sorted by ID") {
  Tensor2 t = Tensor2::from_rows({{1}, {2}, {3}, {4}});
  GeneMatrix m({"d", "b", "a", "c"}, {"g"}, t);
  const auto r = genomics::align_and_label(m, {"a", "b", "d", "z"}, {{"a", 1}, {"b", 0}, {"c", 1}, {"y", 0}});
  CHECK(r.matrix.patient_ids == std::vector<std::string>{"a", "b"});
  CHECK(r.labels == std::vector<int>{1, 0});
  CHECK(r.matrix.values(0, 0) == 3.0);
  CHECK(r.dropped_no_image == std::vector<std::string>{"c"});
  CHECK(r.dropped_no_label == std::vector<std::string>{"d"});
  CHECK(r.dropped_no_genes == std::vector<std::string>{"y", "z"});
  CHECK_THROWS_AS(genomics::align_and_label(m, {"q"}, {{"a", 1}}), DataError);
}

TEST_CASE("subtype labels") {
  CHECK(genomics::label_from_subtype("BRCA.LumA") == 0);
  CHECK(genomics::label_from_subtype("BRCA.Basal") == 1);
  CHECK(genomics::label_from_subtype("BRCA.Her2") == 1);
  CHECK_FALSE(genomics::label_from_subtype("BRCA.Normal").has_value());
}

TEST_CASE("replaying a fitted pipeline on its own rows reproduces the fit") {
  const auto m = noisy_matrix(11, 30, 40);
  const auto fit = genomics::fit_pipeline(m);
  const auto replay = genomics::apply_pipeline(m, fit.state);
  CHECK(replay.cleaned.values == fit.cleaned.values);
  CHECK(replay.normalized.values == fit.normalized.values);
  CHECK(replay.outliers.size() == fit.outliers.size());
}

TEST_CASE("fitted state depends only on the rows it was fitted on") {
  const auto m = noisy_matrix(12, 40, 30);
  std::vector<std::size_t> train, val;
  for (std::size_t i = 0; i < 40; ++i) (i % 4 == 0 ? val : train).push_back(i);
  const auto a = genomics::fit_pipeline(m.select_rows(train));

  auto shifted = m;
  for (std::size_t p : val)
    for (std::size_t g = 0; g < shifted.genes(); ++g) shifted.values(p, g) *= 7.0;
  const auto b = genomics::fit_pipeline(shifted.select_rows(train));
  CHECK(a.state.shift == b.state.shift);
  CHECK(a.state.impute_values == b.state.impute_values);
  for (std::size_t g = 0; g < m.genes(); ++g) {
    CHECK(a.state.zscore[g].mean == b.state.zscore[g].mean);
    CHECK(a.state.fences[g].upper == b.state.fences[g].upper);
  }
  const auto va = genomics::apply_pipeline(m.select_rows(val), a.state);
  CHECK(va.cleaned.missing_count() == 0);
  CHECK(va.cleaned.patients() == val.size());
}

TEST_CASE("gene matrix validation") {
  CHECK_THROWS_AS(GeneMatrix({"a", "a"}, {"g"}, Tensor2(2, 1)), FormatError);
  CHECK_THROWS_AS(GeneMatrix({"a"}, {"g"}, Tensor2(2, 1)), ShapeError);
  CHECK_THROWS_AS(genomics::iqr_outlier_filter(column({1, 2}), -1.0), ConfigError);
}

}  // TEST_SUITE
