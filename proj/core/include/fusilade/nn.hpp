#pragma once

// Dense kernel: forward and hand-derived backward passes for the layers the
// fusion classifiers are built from. Everything is double precision.
//
// Backward functions accumulate (+=) into the parameter gradients held by
// LayerParams; callers zero them between optimiser steps.

#include <cstddef>
#include <span>
#include <vector>

#include "fusilade/rng.hpp"
#include "fusilade/tensor.hpp"

namespace fusilade::nn {

struct LayerParams {
  Tensor2 weights;  // [in x out]
  std::vector<double> bias;
  Tensor2 grad_weights;
  std::vector<double> grad_bias;

  LayerParams() = default;
  LayerParams(std::size_t in_dim, std::size_t out_dim);

  std::size_t in_dim() const noexcept { return weights.rows(); }
  std::size_t out_dim() const noexcept { return weights.cols(); }
  std::size_t parameter_count() const noexcept { return weights.size() + bias.size(); }
  bool empty() const noexcept { return weights.empty(); }

  void zero_grad();
};

/// Glorot-uniform weights in +-sqrt(6 / (in + out)), zero bias.
LayerParams glorot_uniform(std::size_t in_dim, std::size_t out_dim, Rng& rng);

/// out = x W + b. Throws ShapeError naming both shapes on mismatch.
Tensor2 dense_forward(const Tensor2& x, const LayerParams& p);

/// Accumulates dL/dW, dL/db into p and returns dL/dx.
Tensor2 dense_backward(const Tensor2& x, LayerParams& p, const Tensor2& grad_out,
                       bool need_input_grad = true);

enum class Activation { relu, sigmoid, softmax_rows };

Tensor2 activation_forward(const Tensor2& x, Activation kind);

/// Gradient through an activation given its forward *output*. For relu the
/// output is zero exactly where x <= 0, which gives the 0 subgradient at x = 0.
Tensor2 activation_backward(const Tensor2& out, Activation kind, const Tensor2& grad_out);

double sigmoid(double z) noexcept;

// --- attention --------------------------------------------------------------

struct AttentionParams {
  std::size_t num_heads = 0;
  std::size_t head_dim = 0;
  LayerParams w_query;   // query_dim   -> model_dim
  LayerParams w_key;     // context_dim -> model_dim
  LayerParams w_value;   // context_dim -> model_dim
  LayerParams w_output;  // model_dim   -> model_dim

  std::size_t model_dim() const noexcept { return num_heads * head_dim; }
};

AttentionParams make_attention(std::size_t query_dim, std::size_t context_dim,
                               std::size_t num_heads, std::size_t head_dim, Rng& rng);

/// Intermediates of one attention_forward call. `weights[h]` is the [m x n]
/// row-stochastic attention matrix of head h.
struct AttentionTape {
  bool valid = false;
  Tensor2 query;    // [m x dq]
  Tensor2 context;  // [n x dc]
  Tensor2 q, k, v;  // projected, [m|n x model_dim]
  std::vector<Tensor2> weights;
  Tensor2 heads;  // concatenated head outputs before w_output, [m x model_dim]
};

/// Multi-head scaled dot-product attention of `query_seq` over `context_seq`.
/// Throws DataError when the context is empty.
Tensor2 attention_forward(const Tensor2& query_seq, const Tensor2& context_seq,
                          const AttentionParams& p, AttentionTape* tape = nullptr);

struct AttentionInputGrads {
  Tensor2 query;
  Tensor2 context;
};

/// Throws StateError when `tape` was not filled by attention_forward.
AttentionInputGrads attention_backward(const AttentionTape& tape, AttentionParams& p,
                                       const Tensor2& grad_out);

// --- loss -------------------------------------------------------------------

inline constexpr double kBceEpsilon = 1e-7;

/// Mean binary cross-entropy with predictions clamped to [eps, 1 - eps].
double bce_loss(std::span<const double> p, std::span<const double> y);

/// d(bce_loss)/dp. Zero where the clamp is active.
std::vector<double> bce_grad(std::span<const double> p, std::span<const double> y);

}  // namespace fusilade::nn
