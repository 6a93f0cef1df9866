// SPDX-License-Identifier: Apache-2.0
//
// Differentiable operations. Every function records its local gradient on the
// calling thread's tape whenever an input requires gradients.
//
// Broadcasting is limited to two forms: identical shapes, or a 1×n row vector
// applied to every row of an m×n matrix. Anything else is a DimensionError.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "seqcoder/rng.hpp"
#include "seqcoder/tensor.hpp"

namespace seqcoder {

enum class ElementwiseKind { kAdd, kSub, kMul, kSigmoid, kTanh, kRelu, kNeg, kScale };

/// Generic entry point; binary kinds use `b`, kScale uses `factor`.
Tensor elementwise(ElementwiseKind kind, const Tensor& a, const Tensor* b = nullptr,
                   double factor = 1.0);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);

/// a[m×k] · b[k×n].
Tensor matmul(const Tensor& a, const Tensor& b);
/// a[m×k] · b[n×k]ᵀ.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// x[T×in] · W[out×in]ᵀ + bias[1×out]; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Row-wise softmax. Entries where mask == 0 are excluded and come out exactly
/// 0; every row must keep at least one entry.
Tensor softmax_rows(const Tensor& x, const std::vector<std::uint8_t>* mask = nullptr);

/// Gathers rows of `table`; the backward pass scatter-adds.
Tensor embedding_lookup(const Tensor& table, std::span<const int> ids);

/// axis 0 stacks rows, axis 1 joins columns.
Tensor concat(const std::vector<Tensor>& parts, int axis);

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);

inline constexpr double kLayerNormEps = 1e-5;

/// Per-row standardization followed by gain[1×d] and bias[1×d].
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = kLayerNormEps);

/// Inverted dropout. Identity when !training or rate == 0.
Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Mean over the selected rows of -log softmax(logits[r])[targets[r]].
/// `rows` lists which logit rows participate and `targets` their labels.
Tensor cross_entropy_rows(const Tensor& logits, std::span<const std::size_t> rows,
                          std::span<const int> targets);

inline constexpr double kProbClamp = 1e-12;

/// -(1/m) Σ [y log p + (1-y) log(1-p)] with p clamped to [1e-12, 1-1e-12].
Tensor binary_cross_entropy(const Tensor& probs, std::span<const double> targets);

}  // namespace seqcoder
