// SPDX-License-Identifier: Apache-2.0
#include "seqcoder/heads.hpp"

#include <cmath>

#include "seqcoder/errors.hpp"
#include "seqcoder/ops.hpp"

namespace seqcoder {

Tensor lm_logits(const LmHead& head, const Tensor& hidden) {
  return linear(hidden, head.projection, head.bias);
}

std::size_t lm_target_count(std::size_t length, const std::vector<std::uint8_t>* valid) {
  std::size_t n = 0;
  for (std::size_t t = 0; t + 1 < length; ++t) {
    if (valid == nullptr || ((*valid)[t] && (*valid)[t + 1])) ++n;
  }
  return n;
}

Tensor lm_loss(const LmHead& head, const Tensor& hidden, std::span<const int> ids,
               const std::vector<std::uint8_t>* valid) {
  const std::size_t T = hidden.rows();
  if (T < 2) throw ContractError("lm_loss needs at least two positions, got " + std::to_string(T));
  if (ids.size() != T || (valid != nullptr && valid->size() != T)) {
    throw DimensionError("lm_loss: ids/validity do not match " + std::to_string(T) + " states");
  }
  std::vector<std::size_t> rows;
  std::vector<int> targets;
  for (std::size_t t = 0; t + 1 < T; ++t) {
    if (valid != nullptr && !((*valid)[t] && (*valid)[t + 1])) continue;
    rows.push_back(t);
    targets.push_back(ids[t + 1]);
  }
  if (rows.empty()) throw ContractError("lm_loss: no valid next-token positions");
  if (rows.size() == T - 1) {
    // Every position but the last predicts; skip the last row's logits.
    return cross_entropy_rows(lm_logits(head, slice_rows(hidden, 0, T - 1)), rows, targets);
  }
  return cross_entropy_rows(lm_logits(head, hidden), rows, targets);
}

double perplexity(double nll_per_token) { return std::exp(nll_per_token); }

std::size_t last_valid_position(std::size_t length, const std::vector<std::uint8_t>* valid) {
  if (valid == nullptr) {
    if (length == 0) throw ContractError("attention_pool: no valid positions");
    return length - 1;
  }
  for (std::size_t t = length; t > 0; --t) {
    if ((*valid)[t - 1]) return t - 1;
  }
  throw ContractError("attention_pool: no valid positions");
}

Tensor attention_pool(const AttnPoolClassifier& cls, const Tensor& hidden,
                      const std::vector<std::uint8_t>* valid, std::vector<Tensor>* alphas) {
  const std::size_t T = hidden.rows();
  if (valid != nullptr && valid->size() != T) {
    throw DimensionError("attention_pool: validity mask does not match " + std::to_string(T) +
                         " states");
  }
  if (cls.pool_heads() == 0) throw ConfigError("attention_pool: no pooling heads");
  const std::size_t last = last_valid_position(T, valid);
  Tensor h_last = slice_rows(hidden, last, 1);
  std::vector<std::uint8_t> mask(T, 1);
  if (valid != nullptr) mask = *valid;
  const double score_scale = 1.0 / std::sqrt(static_cast<double>(hidden.cols()));
  std::vector<Tensor> parts;
  for (std::size_t k = 0; k < cls.pool_heads(); ++k) {
    Tensor query = linear(h_last, cls.query_weight[k], cls.query_bias[k]);
    Tensor alpha = softmax_rows(scale(matmul_nt(query, hidden), score_scale), &mask);
    if (alphas != nullptr) alphas->push_back(alpha);
    parts.push_back(matmul(alpha, hidden));
  }
  return parts.size() == 1 ? parts.front() : concat(parts, 1);
}

Tensor label_logits(const AttnPoolClassifier& cls, const Tensor& pooled) {
  return linear(pooled, cls.label_weight, cls.label_bias);
}

Tensor label_probs(const AttnPoolClassifier& cls, const Tensor& pooled) {
  return sigmoid(label_logits(cls, pooled));
}

Tensor bce_loss(const Tensor& probs, std::span<const double> targets) {
  return binary_cross_entropy(probs, targets);
}

void LossConfig::validate() const {
  if (!std::isfinite(lambda) || lambda < 0) {
    throw ConfigError("lambda must be finite and nonnegative, got " + std::to_string(lambda));
  }
}

Tensor total_loss(const Tensor& bce, const Tensor& nll, const LossConfig& config) {
  config.validate();
  return add(bce, scale(nll, config.lambda));
}

}  // namespace seqcoder
