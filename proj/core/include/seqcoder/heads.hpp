// SPDX-License-Identifier: Apache-2.0
//
// Output heads: the autoregressive LM head and the attention-pooling
// multi-label classifier, plus their losses.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "seqcoder/tensor.hpp"

namespace seqcoder {

struct LmHead {
  Tensor projection;  // V×d; the embedding table when tied
  Tensor bias;        // 1×V
};

/// Next-token logits U h_t + b_v for every position (T×V).
Tensor lm_logits(const LmHead& head, const Tensor& hidden);

/// Mean over valid next-token positions of -log p(x_{t+1} | h_t). Position t
/// contributes when both t and t+1 are valid. Needs T ≥ 2.
Tensor lm_loss(const LmHead& head, const Tensor& hidden, std::span<const int> ids,
               const std::vector<std::uint8_t>* valid = nullptr);

/// Number of next-token predictions lm_loss averages over.
std::size_t lm_target_count(std::size_t length, const std::vector<std::uint8_t>* valid = nullptr);

/// exp of the mean per-token NLL (natural log).
double perplexity(double nll_per_token);

struct AttnPoolClassifier {
  std::vector<Tensor> query_weight;  // n_pool of d×d
  std::vector<Tensor> query_bias;    // n_pool of 1×d
  Tensor label_weight;               // m×(n_pool·d), row j is w_j
  Tensor label_bias;                 // 1×m

  std::size_t pool_heads() const { return query_weight.size(); }
  std::size_t labels() const { return label_weight.rows(); }
};

/// Summary vector c (1×(n_pool·d)). For each pool head the last valid state
/// is projected to a query, valid positions are weighted by a softmax over
/// h_i·query/√d, and the weighted states are summed; heads are concatenated.
/// `alphas` receives one 1×T weight row per head when non-null.
Tensor attention_pool(const AttnPoolClassifier& cls, const Tensor& hidden,
                      const std::vector<std::uint8_t>* valid = nullptr,
                      std::vector<Tensor>* alphas = nullptr);

/// Pre-sigmoid scores w_jᵀc + b_j (1×m).
Tensor label_logits(const AttnPoolClassifier& cls, const Tensor& pooled);

/// Independent sigmoid per label (1×m).
Tensor label_probs(const AttnPoolClassifier& cls, const Tensor& pooled);

/// Mean binary cross entropy across the m labels.
Tensor bce_loss(const Tensor& probs, std::span<const double> targets);

struct LossConfig {
  double lambda = 0.5;

  void validate() const;
};

/// bce + λ·nll, the auxiliary-task objective.
Tensor total_loss(const Tensor& bce, const Tensor& nll, const LossConfig& config);

/// Index of the last valid position (the state the pooling queries read).
std::size_t last_valid_position(std::size_t length, const std::vector<std::uint8_t>* valid);

}  // namespace seqcoder
