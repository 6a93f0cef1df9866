// SPDX-License-Identifier: Apache-2.0
//
// Gradient×input token attribution and dictionary-filtered keyword tables.

#pragma once

#include <cstddef>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "seqcoder/data.hpp"
#include "seqcoder/model.hpp"
#include "seqcoder/tokenizer.hpp"

namespace seqcoder {

/// Per-token scores Σ_k (∂f/∂x_tk)·x_tk for a scalar function f of the input
/// embeddings X (T×d). Unnormalized.
std::vector<double> gradient_times_input(const std::function<Tensor(const Tensor&)>& f,
                                         const Tensor& inputs);

/// Divides by the largest absolute score (all-zero input stays zero).
std::vector<double> normalize_max_abs(std::vector<double> scores);

struct AttributionVector {
  std::string note_id;
  int label = 0;
  double logit = 0.0;
  std::vector<double> raw;     // unnormalized, one per framed token
  std::vector<double> scores;  // raw / max|raw|
};

/// Attribution of label `label`'s pre-sigmoid logit to each token embedding
/// (positional encodings are not part of the input). Accumulates and then
/// clears gradients on the model's parameters.
AttributionVector grad_times_input(SequenceModel& model, const std::vector<int>& framed, int label,
                                   const std::string& note_id = {});

/// A note tokenized for attribution: framed ids with the source word of every
/// token (-1 for BOS/EOS).
struct EncodedNote {
  std::string id;
  std::vector<std::string> words;
  std::vector<int> ids;
  std::vector<int> word_of_token;

  /// Number of distinct words with at least one token inside the frame.
  std::size_t framed_words() const;
};

EncodedNote encode_note(const NoteRecord& note, const BpeModel& tokenizer,
                        const Preprocessor& preprocessor);

struct SalientWord {
  std::size_t position;  // index into EncodedNote::words
  std::string word;
  double score;          // max |normalized score| over the word's tokens
};

/// Words whose score reaches `threshold`, in text order.
std::vector<SalientWord> salient_words(const AttributionVector& attribution, const EncodedNote& note,
                                       double threshold = 0.2);

struct KeywordOptions {
  std::size_t top_k = 10;
  double saliency_threshold = 0.2;
  double decision_threshold = 0.5;
  std::size_t threads = 1;
};

struct KeywordCount {
  std::string word;
  std::size_t notes;
};

struct KeywordTable {
  struct Row {
    std::string label;
    std::vector<KeywordCount> keywords;
  };
  std::vector<Row> rows;  // labels without dictionary hits are omitted
  std::size_t attributions = 0;
  double mean_salient_fraction = 0.0;  // salient words / framed words, averaged

  nlohmann::json to_json() const;
  std::string to_text() const;
};

/// For every note and every label in its gold ∪ predicted set, counts each
/// salient dictionary word once; rows keep the `top_k` most frequent words
/// (ties alphabetical). An empty dictionary is a ConfigError.
KeywordTable keyword_table(const SequenceModel& model, const std::vector<NoteRecord>& notes,
                           const BpeModel& tokenizer, const Preprocessor& preprocessor,
                           const std::set<std::string>& dictionary,
                           const KeywordOptions& options = {});

}  // namespace seqcoder
