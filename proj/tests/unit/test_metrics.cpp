#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "fusilade/errors.hpp"
#include "fusilade/metrics.hpp"
#include "fusilade/rng.hpp"
#include "oracles.hpp"

using namespace fusilade;
using metrics::ConfusionCounts;

TEST_SUITE("metrics") {

TEST_CASE("confusion examples") {
  CHECK(metrics::confusion(std::vector<int>{1, 0}, std::vector<double>{0.9, 0.1}) == ConfusionCounts{1, 0, 1, 0});
  CHECK(metrics::confusion(std::vector<int>{1}, std::vector<double>{0.5}) == ConfusionCounts{1, 0, 0, 0});
  CHECK(metrics::confusion(std::vector<int>{0}, std::vector<double>{0.5}) == ConfusionCounts{0, 1, 0, 0});
  CHECK(metrics::confusion(std::vector<int>{1, 1, 0, 0}, std::vector<double>{0.6, 0.4, 0.6, 0.4}) ==
        ConfusionCounts{1, 1, 1, 1});
  CHECK_THROWS_AS(metrics::confusion(std::vector<int>{1, 0}, std::vector<double>{0.5}), ShapeError);
}

TEST_CASE("classification_metrics examples") {
  auto s = metrics::classification_metrics({3, 0, 3, 0});
  CHECK(s.accuracy == 1.0);
  CHECK(s.f1 == 1.0);
  CHECK(s.mcc == 1.0);
  s = metrics::classification_metrics({1, 1, 1, 1});
  CHECK(s.accuracy == 0.5);
  CHECK(s.f1 == 0.5);
  CHECK(s.mcc == 0.0);
  s = metrics::classification_metrics({2, 1, 0, 1});
  CHECK(s.f1 == doctest::Approx(4.0 / 6.0));
  CHECK(s.mcc == doctest::Approx(-1.0 / 3.0));
  s = metrics::classification_metrics({0, 0, 4, 0});
  CHECK(s.f1 == 0.0);
  CHECK(s.mcc == 0.0);
  CHECK_THROWS_AS(metrics::classification_metrics({0, 0, 0, 0}), DataError);
}

TEST_CASE("classification_metrics matches the formula oracle on every matrix with entries <= 5") {
  std::size_t checked = 0;
  for (std::uint64_t tp = 0; tp <= 5; ++tp)
    for (std::uint64_t fp = 0; fp <= 5; ++fp)
      for (std::uint64_t tn = 0; tn <= 5; ++tn)
        for (std::uint64_t fn = 0; fn <= 5; ++fn) {
          if (tp + fp + tn + fn == 0) continue;
          const auto got = metrics::classification_metrics({tp, fp, tn, fn});
          const auto want = oracle::formula_scores(tp, fp, tn, fn);
          CHECK(std::abs(got.accuracy - want.accuracy) <= 1e-15);
          CHECK(std::abs(got.f1 - want.f1) <= 1e-15);
          CHECK(std::abs(got.mcc - want.mcc) <= 1e-15);
          ++checked;
        }
  CHECK(checked == 1295);
}

TEST_CASE("mcc is symmetric under swapping the classes") {
  for (std::uint64_t tp = 0; tp <= 4; ++tp)
    for (std::uint64_t fp = 0; fp <= 4; ++fp)
      for (std::uint64_t tn = 0; tn <= 4; ++tn)
        for (std::uint64_t fn = 0; fn <= 4; ++fn) {
          if (tp + fp + tn + fn == 0) continue;
          CHECK(metrics::classification_metrics({tp, fp, tn, fn}).mcc ==
                metrics::classification_metrics({tn, fn, tp, fp}).mcc);
        }
}

TEST_CASE("pr_auc examples") {
  CHECK(metrics::pr_auc(std::vector<int>{1, 0}, std::vector<double>{0.9, 0.1}) == 1.0);
  CHECK(metrics::pr_auc(std::vector<int>{1, 0, 1}, std::vector<double>{0.9, 0.8, 0.7}) ==
        doctest::Approx(0.5 + (2.0 / 3.0) * 0.5).epsilon(1e-15));
  CHECK(metrics::pr_auc(std::vector<int>{0, 1}, std::vector<double>{0.9, 0.1}) == 0.5);
  try {
    metrics::pr_auc(std::vector<int>{0, 0}, std::vector<double>{0.3, 0.2});
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("PR undefined") != std::string::npos);
  }
}

TEST_CASE("pr_auc equals the threshold-enumeration oracle on every label pattern up to 10 samples") {
  // AP depends only on the ranking, so with distinct scores every label/score
  // set of size n is one of the 2^n label patterns read in rank order.
  std::size_t checked = 0;
  double worst = 0;
  Rng rng(42);
  for (std::size_t n = 1; n <= 10; ++n) {
    for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
      std::vector<int> y(n);
      std::vector<double> s(n);
      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      rng.shuffle(perm.begin(), perm.end());  // scatter ranks across positions
      for (std::size_t r = 0; r < n; ++r) {
        y[perm[r]] = (mask >> r) & 1u;
        s[perm[r]] = 1.0 - static_cast<double>(r) / static_cast<double>(n);
      }
      const auto exact = oracle::pr_step_area(y, s);
      const double got = metrics::pr_auc(y, s);
      worst = std::max(worst, std::abs(got - exact.value()));
      ++checked;
    }
  }
  CHECK(checked == 2036);
  CHECK(worst <= 1e-14);
}

TEST_CASE("pr_auc equals the oracle on random distinct-score sets") {
  Rng rng(7);
  double worst = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 1 + rng.below(10);
    std::vector<int> y(n);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng.below(2));
      s[i] = rng.uniform() + 1e-9 * static_cast<double>(i);
    }
    if (std::count(y.begin(), y.end(), 1) == 0) y[0] = 1;
    worst = std::max(worst, std::abs(metrics::pr_auc(y, s) - oracle::pr_step_area(y, s).value()));
  }
  CHECK(worst <= 1e-14);
}

TEST_CASE("pr_auc is invariant under strictly monotone score transforms") {
  Rng rng(8);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + rng.below(30);
    std::vector<int> y(n);
    std::vector<double> s(n), t(n), u(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng.below(2));
      s[i] = rng.uniform(0.01, 0.99);
      t[i] = std::log(s[i] / (1 - s[i]));
      u[i] = 3.0 * s[i] * s[i] * s[i] + 2.0;
    }
    y[0] = 1;
    const double base = metrics::pr_auc(y, s);
    CHECK(metrics::pr_auc(y, t) == base);
    CHECK(metrics::pr_auc(y, u) == base);
  }
}

TEST_CASE("pr_auc tie rule follows original index") {
  // tied scores: the earlier index is ranked first
  CHECK(metrics::pr_auc(std::vector<int>{1, 0}, std::vector<double>{0.5, 0.5}) == 1.0);
  CHECK(metrics::pr_auc(std::vector<int>{0, 1}, std::vector<double>{0.5, 0.5}) == 0.5);
}

TEST_CASE("trapezoid estimator agrees on perfect rankings and stays in [0, 1]") {
  CHECK(metrics::pr_auc_trapezoid(std::vector<int>{1, 1, 0}, std::vector<double>{0.9, 0.8, 0.1}) ==
        doctest::Approx(1.0));
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(20);
    std::vector<int> y(n);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng.below(2));
      s[i] = rng.uniform();
    }
    y[0] = 1;
    const double v = metrics::pr_auc_trapezoid(y, s);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("evaluate fills every field and respects bounds") {
  Rng rng(10);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(40);
    std::vector<int> y(n);
    std::vector<double> p(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng.below(2));
      p[i] = rng.uniform();
    }
    y[0] = 1;
    const auto m = metrics::evaluate(y, p);
    CHECK(m.counts.total() == n);
    CHECK((m.accuracy >= 0 && m.accuracy <= 1));
    CHECK((m.f1 >= 0 && m.f1 <= 1));
    CHECK((m.pr_auc >= 0 && m.pr_auc <= 1));
    CHECK((m.mcc >= -1 && m.mcc <= 1));
    CHECK(metrics::evaluate(y, p).pr_auc == m.pr_auc);
  }
}

TEST_CASE("aggregate_folds examples") {
  metrics::MetricSet a;
  a.f1 = 0.8;
  a.accuracy = 0.7;
  a.counts = {1, 2, 3, 4};
  metrics::MetricSet b = a;
  b.f1 = 1.0;
  b.counts = {5, 6, 7, 8};
  const std::vector<metrics::MetricSet> folds{a, b};
  const auto agg = metrics::aggregate_folds(folds);
  CHECK(agg.f1.mean == doctest::Approx(0.9));
  CHECK(agg.f1.std == doctest::Approx(0.1));
  CHECK(agg.accuracy.mean == doctest::Approx(0.7));
  CHECK(agg.accuracy.std == doctest::Approx(0.0));
  CHECK(agg.counts == ConfusionCounts{6, 8, 10, 12});
  CHECK(agg.counts.total() == a.counts.total() + b.counts.total());
  CHECK(agg.folds == 2);
  CHECK_THROWS_AS(metrics::aggregate_folds(std::vector<metrics::MetricSet>{}), DataError);
}

}  // TEST_SUITE
