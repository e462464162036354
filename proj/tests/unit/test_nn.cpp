#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "fusilade/errors.hpp"
#include "fusilade/nn.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace fusilade;
using testing::random_tensor;

namespace {

constexpr double kH = 1e-5;
constexpr double kTol = 1e-4;
constexpr int kSeeds = 120;

/// Central differences of `loss` with respect to each pointed-to scalar.
std::vector<double> numeric(const std::vector<double*>& xs, const std::function<double()>& loss) {
  std::vector<double> g;
  g.reserve(xs.size());
  for (double* x : xs) {
    const double keep = *x;
    *x = keep + kH;
    const double up = loss();
    *x = keep - kH;
    const double down = loss();
    *x = keep;
    g.push_back((up - down) / (2 * kH));
  }
  return g;
}

std::vector<double*> ptrs(Tensor2& t) {
  std::vector<double*> out;
  for (auto& v : t.values()) out.push_back(&v);
  return out;
}

std::vector<double*> ptrs(std::vector<double>& v) {
  std::vector<double*> out;
  for (auto& x : v) out.push_back(&x);
  return out;
}

std::vector<double> flat(const Tensor2& t) { return {t.values().begin(), t.values().end()}; }

double weighted_sum(const Tensor2& out, const Tensor2& r) {
  double s = 0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out.values()[i] * r.values()[i];
  return s;
}

std::size_t dim(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

/// Inputs kept away from the relu kink so the difference quotient is smooth.
Tensor2 away_from_zero(std::size_t r, std::size_t c, Rng& rng) {
  Tensor2 t(r, c);
  for (auto& v : t.values()) {
    do v = rng.normal(); while (std::abs(v) < 1e-2);
  }
  return t;
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("dense forward matches x W + b and rejects mismatched shapes") {
  nn::LayerParams p(2, 3);
  p.weights = Tensor2::from_rows({{1, 2, 3}, {4, 5, 6}});
  p.bias = {0.5, -0.5, 1};
  const auto out = nn::dense_forward(Tensor2::from_rows({{1, 1}}), p);
  CHECK(out == Tensor2::from_rows({{5.5, 6.5, 10}}));
  try {
    nn::dense_forward(Tensor2(1, 3), p);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[1x3]") != std::string::npos);
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("dense gradients pass finite differences over many seeds") {
  double worst = 0;
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(seed);
    const auto n = dim(rng, 1, 4), din = dim(rng, 1, 5), dout = dim(rng, 1, 5);
    Tensor2 x = random_tensor(n, din, rng);
    auto p = nn::glorot_uniform(din, dout, rng);
    for (auto& b : p.bias) b = rng.normal();
    const Tensor2 r = random_tensor(n, dout, rng);
    auto loss = [&] { return weighted_sum(nn::dense_forward(x, p), r); };

    p.zero_grad();
    const Tensor2 gx = nn::dense_backward(x, p, r);
    worst = std::max(worst, oracle::max_relative_error(flat(gx), numeric(ptrs(x), loss)));
    worst = std::max(worst, oracle::max_relative_error(flat(p.grad_weights), numeric(ptrs(p.weights), loss)));
    worst = std::max(worst, oracle::max_relative_error(p.grad_bias, numeric(ptrs(p.bias), loss)));
  }
  CHECK(worst < kTol);
}

TEST_CASE("activation gradients pass finite differences over many seeds") {
  for (auto kind : {nn::Activation::relu, nn::Activation::sigmoid, nn::Activation::softmax_rows}) {
    double worst = 0;
    for (int seed = 0; seed < kSeeds; ++seed) {
      Rng rng(1000 + seed);
      const auto n = dim(rng, 1, 4), d = dim(rng, 1, 6);
      Tensor2 x = away_from_zero(n, d, rng);
      const Tensor2 r = random_tensor(n, d, rng);
      auto loss = [&] { return weighted_sum(nn::activation_forward(x, kind), r); };
      const Tensor2 g = nn::activation_backward(nn::activation_forward(x, kind), kind, r);
      worst = std::max(worst, oracle::max_relative_error(flat(g), numeric(ptrs(x), loss)));
    }
    CHECK(worst < kTol);
  }
}

TEST_CASE("relu subgradient at zero is zero") {
  const Tensor2 x = Tensor2::from_rows({{0.0, -1.0, 2.0}});
  const auto out = nn::activation_forward(x, nn::Activation::relu);
  const auto g = nn::activation_backward(out, nn::Activation::relu, Tensor2(1, 3, 1.0));
  CHECK(g == Tensor2::from_rows({{0.0, 0.0, 1.0}}));
}

TEST_CASE("softmax is stable for large logits and rows sum to one") {
  const Tensor2 x = Tensor2::from_rows({{1000, 1001, 1002}, {-1000, -1000, -1000}});
  const auto s = nn::activation_forward(x, nn::Activation::softmax_rows);
  CHECK(s.all_finite());
  for (std::size_t i = 0; i < 2; ++i) CHECK(s(i, 0) + s(i, 1) + s(i, 2) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(s(1, 0) == doctest::Approx(1.0 / 3));
}

TEST_CASE("sigmoid is finite at extreme inputs") {
  CHECK(nn::sigmoid(800) == 1.0);
  CHECK(nn::sigmoid(-800) >= 0.0);
  CHECK(std::isfinite(nn::sigmoid(-800)));
  CHECK(nn::sigmoid(0) == 0.5);
}

TEST_CASE("attention gradients pass finite differences for inputs and all projections") {
  double worst = 0;
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(2000 + seed);
    const auto m = dim(rng, 1, 3), n = dim(rng, 1, 4);
    const auto dq = dim(rng, 1, 4), dc = dim(rng, 1, 4);
    const auto heads = dim(rng, 1, 3), hd = dim(rng, 1, 3);
    Tensor2 q = random_tensor(m, dq, rng);
    Tensor2 c = random_tensor(n, dc, rng);
    auto p = nn::make_attention(dq, dc, heads, hd, rng);
    for (auto* l : {&p.w_query, &p.w_key, &p.w_value, &p.w_output})
      for (auto& b : l->bias) b = 0.3 * rng.normal();
    const Tensor2 r = random_tensor(m, heads * hd, rng);
    auto loss = [&] { return weighted_sum(nn::attention_forward(q, c, p), r); };

    nn::AttentionTape tape;
    nn::attention_forward(q, c, p, &tape);
    for (auto* l : {&p.w_query, &p.w_key, &p.w_value, &p.w_output}) l->zero_grad();
    const auto g = nn::attention_backward(tape, p, r);
    worst = std::max(worst, oracle::max_relative_error(flat(g.query), numeric(ptrs(q), loss)));
    worst = std::max(worst, oracle::max_relative_error(flat(g.context), numeric(ptrs(c), loss)));
    for (auto* l : {&p.w_query, &p.w_key, &p.w_value, &p.w_output}) {
      worst = std::max(worst, oracle::max_relative_error(flat(l->grad_weights), numeric(ptrs(l->weights), loss)));
      worst = std::max(worst, oracle::max_relative_error(l->grad_bias, numeric(ptrs(l->bias), loss)));
    }
  }
  CHECK(worst < kTol);
}

TEST_CASE("attention weights are row-stochastic and errors are typed") {
  Rng rng(5);
  auto p = nn::make_attention(3, 4, 2, 2, rng);
  nn::AttentionTape tape;
  const auto out = nn::attention_forward(random_tensor(2, 3, rng), random_tensor(5, 4, rng), p, &tape);
  CHECK(out.rows() == 2);
  CHECK(out.cols() == 4);
  REQUIRE(tape.weights.size() == 2);
  for (const auto& w : tape.weights) {
    CHECK(w.rows() == 2);
    CHECK(w.cols() == 5);
    for (std::size_t i = 0; i < w.rows(); ++i) {
      double s = 0;
      for (double v : w.row(i)) {
        CHECK(v >= 0.0);
        s += v;
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(nn::attention_forward(random_tensor(1, 3, rng), Tensor2(0, 4), p), DataError);
  CHECK_THROWS_AS(nn::attention_forward(random_tensor(1, 2, rng), random_tensor(2, 4, rng), p), ShapeError);
  nn::AttentionTape empty;
  CHECK_THROWS_AS(nn::attention_backward(empty, p, Tensor2(1, 4)), StateError);
}

TEST_CASE("attention with one context row returns its value projection") {
  Rng rng(9);
  auto p = nn::make_attention(2, 2, 2, 1, rng);
  const Tensor2 c = random_tensor(1, 2, rng);
  const auto out = nn::attention_forward(random_tensor(1, 2, rng), c, p);
  const auto expected = nn::dense_forward(nn::dense_forward(c, p.w_value), p.w_output);
  for (std::size_t j = 0; j < out.cols(); ++j) CHECK(out(0, j) == doctest::Approx(expected(0, j)).epsilon(1e-12));
}

TEST_CASE("BCE gradient passes finite differences and is zero under the clamp") {
  double worst = 0;
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(3000 + seed);
    const auto n = dim(rng, 1, 8);
    std::vector<double> p(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = rng.uniform(0.05, 0.95);
      y[i] = rng.below(2) ? 1.0 : 0.0;
    }
    auto loss = [&] { return nn::bce_loss(p, y); };
    worst = std::max(worst, oracle::max_relative_error(nn::bce_grad(p, y), numeric(ptrs(p), loss)));
  }
  CHECK(worst < kTol);

  const std::vector<double> p{0.0, 1.0, 0.5};
  const std::vector<double> y{1.0, 0.0, 1.0};
  const double expected = (2 * -std::log(nn::kBceEpsilon) - std::log(0.5)) / 3;
  CHECK(nn::bce_loss(p, y) == doctest::Approx(expected).epsilon(1e-9));
  const auto g = nn::bce_grad(p, y);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.0);
  CHECK(g[2] == doctest::Approx(-2.0 / 3));
  CHECK_THROWS_AS(nn::bce_loss(std::vector<double>{0.5}, std::vector<double>{1, 0}), ShapeError);
}

TEST_CASE("glorot init stays within its limit and is seed-deterministic") {
  Rng a(1), b(1);
  const auto pa = nn::glorot_uniform(10, 6, a);
  const auto pb = nn::glorot_uniform(10, 6, b);
  CHECK(pa.weights == pb.weights);
  const double limit = std::sqrt(6.0 / 16.0);
  for (double w : pa.weights.values()) CHECK(std::abs(w) <= limit);
  for (double v : pa.bias) CHECK(v == 0.0);
}

}  // TEST_SUITE
