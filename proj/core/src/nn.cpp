#include "fusilade/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fusilade/errors.hpp"

namespace fusilade::nn {

LayerParams::LayerParams(std::size_t in_dim, std::size_t out_dim)
    : weights(in_dim, out_dim),
      bias(out_dim, 0.0),
      grad_weights(in_dim, out_dim),
      grad_bias(out_dim, 0.0) {}

void LayerParams::zero_grad() {
  grad_weights.fill(0.0);
  std::fill(grad_bias.begin(), grad_bias.end(), 0.0);
}

LayerParams glorot_uniform(std::size_t in_dim, std::size_t out_dim, Rng& rng) {
  LayerParams p(in_dim, out_dim);
  const double limit = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
  for (auto& w : p.weights.values()) w = rng.uniform(-limit, limit);
  return p;
}

Tensor2 dense_forward(const Tensor2& x, const LayerParams& p) {
  if (x.cols() != p.in_dim()) {
    throw ShapeError("dense: input " + x.shape_str() + " incompatible with weights " +
                     p.weights.shape_str());
  }
  Tensor2 out = matmul(x, p.weights);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += p.bias[j];
  }
  return out;
}

Tensor2 dense_backward(const Tensor2& x, LayerParams& p, const Tensor2& grad_out,
                       bool need_input_grad) {
  if (x.cols() != p.in_dim() || grad_out.cols() != p.out_dim() || grad_out.rows() != x.rows()) {
    throw ShapeError("dense_backward: input " + x.shape_str() + ", grad " + grad_out.shape_str() +
                     ", weights " + p.weights.shape_str());
  }
  const std::size_t out_dim = p.out_dim();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double* g = grad_out.row(r).data();
    for (std::size_t k = 0; k < x.cols(); ++k) {
      const double xv = x(r, k);
      if (xv == 0.0) continue;
      double* gw = p.grad_weights.row(k).data();
      for (std::size_t j = 0; j < out_dim; ++j) gw[j] += xv * g[j];
    }
    for (std::size_t j = 0; j < out_dim; ++j) p.grad_bias[j] += g[j];
  }
  if (!need_input_grad) return {};
  return matmul_a_bt(grad_out, p.weights);
}

double sigmoid(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Tensor2 activation_forward(const Tensor2& x, Activation kind) {
  Tensor2 out = x;
  switch (kind) {
    case Activation::relu:
      for (auto& v : out.values()) v = v < 0.0 ? 0.0 : v;
      break;
    case Activation::sigmoid:
      for (auto& v : out.values()) v = sigmoid(v);
      break;
    case Activation::softmax_rows:
      for (std::size_t i = 0; i < out.rows(); ++i) {
        auto row = out.row(i);
        if (row.empty()) continue;
        const double mx = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (auto& v : row) {
          v = std::exp(v - mx);
          sum += v;
        }
        for (auto& v : row) v /= sum;
      }
      break;
  }
  return out;
}

Tensor2 activation_backward(const Tensor2& out, Activation kind, const Tensor2& grad_out) {
  if (out.rows() != grad_out.rows() || out.cols() != grad_out.cols()) {
    throw ShapeError("activation_backward: output " + out.shape_str() + " vs grad " +
                     grad_out.shape_str());
  }
  Tensor2 g(out.rows(), out.cols());
  const auto y = out.values();
  const auto go = grad_out.values();
  auto gi = g.values();
  switch (kind) {
    case Activation::relu:
      for (std::size_t i = 0; i < y.size(); ++i) gi[i] = y[i] > 0.0 ? go[i] : 0.0;
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < y.size(); ++i) gi[i] = go[i] * y[i] * (1.0 - y[i]);
      break;
    case Activation::softmax_rows:
      for (std::size_t r = 0; r < out.rows(); ++r) {
        const auto yr = out.row(r);
        const auto gr = grad_out.row(r);
        double dot = 0.0;
        for (std::size_t j = 0; j < yr.size(); ++j) dot += yr[j] * gr[j];
        auto dst = g.row(r);
        for (std::size_t j = 0; j < yr.size(); ++j) dst[j] = yr[j] * (gr[j] - dot);
      }
      break;
  }
  return g;
}

// --- attention --------------------------------------------------------------

AttentionParams make_attention(std::size_t query_dim, std::size_t context_dim,
                               std::size_t num_heads, std::size_t head_dim, Rng& rng) {
  if (num_heads == 0 || head_dim == 0) throw ShapeError("attention: heads and head_dim must be > 0");
  AttentionParams p;
  p.num_heads = num_heads;
  p.head_dim = head_dim;
  const std::size_t model = num_heads * head_dim;
  p.w_query = glorot_uniform(query_dim, model, rng);
  p.w_key = glorot_uniform(context_dim, model, rng);
  p.w_value = glorot_uniform(context_dim, model, rng);
  p.w_output = glorot_uniform(model, model, rng);
  return p;
}

namespace {

void check_attention_shapes(const Tensor2& query, const Tensor2& context, const AttentionParams& p) {
  const std::size_t model = p.model_dim();
  if (model == 0) throw ShapeError("attention: model_dim is 0");
  if (p.w_query.out_dim() != model || p.w_key.out_dim() != model || p.w_value.out_dim() != model ||
      p.w_output.in_dim() != model || p.w_output.out_dim() != model) {
    throw ShapeError("attention: projection shapes inconsistent with " +
                     std::to_string(p.num_heads) + " heads x " + std::to_string(p.head_dim));
  }
  if (query.cols() != p.w_query.in_dim()) {
    throw ShapeError("attention: query " + query.shape_str() + " vs w_query " +
                     p.w_query.weights.shape_str());
  }
  if (context.cols() != p.w_key.in_dim() || context.cols() != p.w_value.in_dim()) {
    throw ShapeError("attention: context " + context.shape_str() + " vs w_key " +
                     p.w_key.weights.shape_str());
  }
}

}  // namespace

Tensor2 attention_forward(const Tensor2& query_seq, const Tensor2& context_seq,
                          const AttentionParams& p, AttentionTape* tape) {
  if (context_seq.rows() == 0) throw DataError("attention: empty context, no keys to attend over");
  if (query_seq.rows() == 0) throw DataError("attention: empty query sequence");
  check_attention_shapes(query_seq, context_seq, p);

  const std::size_t m = query_seq.rows();
  const std::size_t n = context_seq.rows();
  const std::size_t hd = p.head_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  Tensor2 q = dense_forward(query_seq, p.w_query);
  Tensor2 k = dense_forward(context_seq, p.w_key);
  Tensor2 v = dense_forward(context_seq, p.w_value);
  Tensor2 heads(m, p.model_dim());
  std::vector<Tensor2> weights;
  weights.reserve(p.num_heads);

  for (std::size_t h = 0; h < p.num_heads; ++h) {
    const std::size_t off = h * hd;
    Tensor2 scores(m, n);
    for (std::size_t i = 0; i < m; ++i) {
      const double* qi = q.row(i).data() + off;
      for (std::size_t j = 0; j < n; ++j) {
        const double* kj = k.row(j).data() + off;
        double acc = 0.0;
        for (std::size_t t = 0; t < hd; ++t) acc += qi[t] * kj[t];
        scores(i, j) = acc * scale;
      }
    }
    Tensor2 w = activation_forward(scores, Activation::softmax_rows);
    for (std::size_t i = 0; i < m; ++i) {
      double* oi = heads.row(i).data() + off;
      for (std::size_t j = 0; j < n; ++j) {
        const double wij = w(i, j);
        const double* vj = v.row(j).data() + off;
        for (std::size_t t = 0; t < hd; ++t) oi[t] += wij * vj[t];
      }
    }
    weights.push_back(std::move(w));
  }

  Tensor2 out = dense_forward(heads, p.w_output);
  if (tape != nullptr) {
    tape->query = query_seq;
    tape->context = context_seq;
    tape->q = std::move(q);
    tape->k = std::move(k);
    tape->v = std::move(v);
    tape->weights = std::move(weights);
    tape->heads = std::move(heads);
    tape->valid = true;
  }
  return out;
}

AttentionInputGrads attention_backward(const AttentionTape& tape, AttentionParams& p,
                                       const Tensor2& grad_out) {
  if (!tape.valid) throw StateError("attention_backward called before attention_forward");
  const std::size_t m = tape.q.rows();
  const std::size_t n = tape.k.rows();
  const std::size_t hd = p.head_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  const Tensor2 g_heads = dense_backward(tape.heads, p.w_output, grad_out);
  Tensor2 g_q(m, p.model_dim());
  Tensor2 g_k(n, p.model_dim());
  Tensor2 g_v(n, p.model_dim());

  for (std::size_t h = 0; h < p.num_heads; ++h) {
    const std::size_t off = h * hd;
    const Tensor2& w = tape.weights[h];
    // dL/dW_ij = <g_head_i, v_j>; dL/dv_j += W_ij g_head_i
    Tensor2 g_w(m, n);
    for (std::size_t i = 0; i < m; ++i) {
      const double* gi = g_heads.row(i).data() + off;
      for (std::size_t j = 0; j < n; ++j) {
        const double* vj = tape.v.row(j).data() + off;
        double* gvj = g_v.row(j).data() + off;
        double acc = 0.0;
        const double wij = w(i, j);
        for (std::size_t t = 0; t < hd; ++t) {
          acc += gi[t] * vj[t];
          gvj[t] += wij * gi[t];
        }
        g_w(i, j) = acc;
      }
    }
    const Tensor2 g_scores = activation_backward(w, Activation::softmax_rows, g_w);
    for (std::size_t i = 0; i < m; ++i) {
      const double* qi = tape.q.row(i).data() + off;
      double* gqi = g_q.row(i).data() + off;
      for (std::size_t j = 0; j < n; ++j) {
        const double gs = g_scores(i, j) * scale;
        if (gs == 0.0) continue;
        const double* kj = tape.k.row(j).data() + off;
        double* gkj = g_k.row(j).data() + off;
        for (std::size_t t = 0; t < hd; ++t) {
          gqi[t] += gs * kj[t];
          gkj[t] += gs * qi[t];
        }
      }
    }
  }

  AttentionInputGrads grads;
  grads.query = dense_backward(tape.query, p.w_query, g_q);
  grads.context = dense_backward(tape.context, p.w_key, g_k);
  const Tensor2 g_ctx_v = dense_backward(tape.context, p.w_value, g_v);
  auto dst = grads.context.values();
  const auto src = g_ctx_v.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  return grads;
}

// --- loss -------------------------------------------------------------------

namespace {
void check_loss_shapes(std::span<const double> p, std::span<const double> y) {
  if (p.size() != y.size()) {
    throw ShapeError("bce: " + std::to_string(p.size()) + " predictions vs " +
                     std::to_string(y.size()) + " labels");
  }
  if (p.empty()) throw ShapeError("bce: empty input");
}
}  // namespace

double bce_loss(std::span<const double> p, std::span<const double> y) {
  check_loss_shapes(p, y);
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pc = std::clamp(p[i], kBceEpsilon, 1.0 - kBceEpsilon);
    total -= y[i] * std::log(pc) + (1.0 - y[i]) * std::log(1.0 - pc);
  }
  return total / static_cast<double>(p.size());
}

std::vector<double> bce_grad(std::span<const double> p, std::span<const double> y) {
  check_loss_shapes(p, y);
  const double inv_n = 1.0 / static_cast<double>(p.size());
  std::vector<double> g(p.size(), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < kBceEpsilon || p[i] > 1.0 - kBceEpsilon) continue;
    g[i] = (-y[i] / p[i] + (1.0 - y[i]) / (1.0 - p[i])) * inv_n;
  }
  return g;
}

}  // namespace fusilade::nn
