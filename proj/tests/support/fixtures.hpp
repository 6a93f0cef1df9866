// SPDX-License-Identifier: Apache-2.0
//
// Small synthetic models and example sets shared across test binaries.

#pragma once

#include <string>
#include <vector>

#include "seqcoder/model.hpp"
#include "seqcoder/rng.hpp"
#include "seqcoder/tokenizer.hpp"
#include "seqcoder/training.hpp"

namespace seqcoder::testing {

inline ModelConfig small_config(EncoderKind kind, std::size_t vocab, std::vector<std::string> labels = {}) {
  ModelConfig c;
  c.encoder = kind;
  c.vocab_size = vocab;
  c.d_model = 16;
  c.n_heads = 2;
  c.d_ff = 32;
  c.n_layers = 1;
  c.labels = std::move(labels);
  return c;
}

/// Framed random sequences over ids [5, vocab), with labels keyed on the
/// presence of id 5 + j for label j when `n_labels` > 0.
inline std::vector<Example> random_examples(std::uint64_t seed, std::size_t count, std::size_t vocab,
                                            std::size_t min_len, std::size_t max_len,
                                            std::size_t n_labels = 0) {
  Rng rng(seed);
  std::vector<Example> out;
  for (std::size_t i = 0; i < count; ++i) {
    Example ex;
    ex.id = "ex" + std::to_string(i);
    const std::size_t len = min_len + uniform_index(rng, max_len - min_len + 1);
    ex.ids.push_back(BpeModel::kBosId);
    for (std::size_t t = 0; t < len; ++t) ex.ids.push_back(static_cast<int>(5 + uniform_index(rng, vocab - 5)));
    ex.ids.push_back(BpeModel::kEosId);
    for (std::size_t j = 0; j < n_labels; ++j) {
      bool hit = false;
      for (int id : ex.ids) hit = hit || id == static_cast<int>(5 + j);
      ex.targets.push_back(hit ? 1.0 : 0.0);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

inline std::vector<std::string> label_names(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t j = 0; j < n; ++j) out.push_back("l" + std::to_string(j));
  return out;
}

}  // namespace seqcoder::testing
