// SPDX-License-Identifier: Apache-2.0
//
// Text normalization and byte-pair encoding.
//
// Words are split into single-character symbols followed by an end-of-word
// marker symbol; merges are learned greedily by pair frequency with ties
// broken lexicographically on (left, right).

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace seqcoder {

/// End-of-word marker (U+00B7). ASCII filtering guarantees it never occurs
/// inside a word.
inline constexpr std::string_view kEndOfWord = "\xC2\xB7";
inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr std::string_view kBosToken = "<bos>";
inline constexpr std::string_view kEosToken = "<eos>";

inline constexpr std::size_t kDeskVocabSize = 2000;
inline constexpr std::size_t kPaperVocabSize = 50000;

struct Preprocessor {
  std::size_t max_tokens = 600;
  bool lowercase = true;
  bool ascii_only = true;

  /// Throws ConfigError when max_tokens < 3.
  void validate() const;
};

/// Drops non-ASCII bytes, lowercases, splits on whitespace and detaches
/// leading/trailing punctuation (one token per punctuation character).
/// Internal hyphens and apostrophes stay inside the word.
std::vector<std::string> preprocess(std::string_view text, const Preprocessor& options = {});

class BpeModel {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kUnkId = 1;
  static constexpr int kBosId = 2;
  static constexpr int kEosId = 3;

  BpeModel();

  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }
  std::size_t vocab_size() const { return id_to_symbol_.size(); }
  const std::string& symbol(int id) const;
  /// -1 when absent.
  int id(std::string_view symbol) const;

  /// Token ids for one word, merges applied in priority order.
  std::vector<int> encode_word(std::string_view word) const;
  /// Concatenated ids for a word sequence.
  std::vector<int> encode(const std::vector<std::string>& words) const;
  /// Like encode(), also reporting the source word index of every token.
  std::vector<int> encode(const std::vector<std::string>& words,
                          std::vector<int>& word_of_token) const;
  /// Inverse of encode on UNK-free input: words joined by single spaces.
  std::string decode(const std::vector<int>& ids) const;

  /// Text form: header `bpe-v1 <vocab_size>`, merges, `#vocab`, symbol/id lines.
  std::string serialize() const;
  static BpeModel deserialize(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static BpeModel load(const std::filesystem::path& path);

  /// FNV-1a 64 of serialize(); identifies the tokenizer inside checkpoints.
  std::uint64_t hash() const;

 private:
  friend BpeModel bpe_train(const std::vector<std::vector<std::string>>&, std::size_t);
  int add_symbol(const std::string& s);
  void rebuild_ranks();

  std::vector<std::pair<std::string, std::string>> merges_;
  std::vector<std::string> id_to_symbol_;
  std::unordered_map<std::string, int> symbol_to_id_;
  std::map<std::pair<std::string, std::string>, std::size_t> merge_rank_;
};

/// Greedy merge learning. The base alphabet is the four special tokens, the
/// end-of-word marker and every character seen in `corpus`. Learning stops at
/// `vocab_size` symbols or when no adjacent pair occurs at least twice.
BpeModel bpe_train(const std::vector<std::vector<std::string>>& corpus, std::size_t vocab_size);

/// [BOS] + ids truncated to max_tokens - 2 + [EOS].
std::vector<int> frame(const std::vector<int>& ids, const Preprocessor& options);

struct PaddedBatch {
  std::vector<std::vector<int>> ids;             // each padded to the batch maximum
  std::vector<std::vector<std::uint8_t>> valid;  // 1 for real tokens, 0 for PAD
};

PaddedBatch pad_batch(const std::vector<std::vector<int>>& framed);

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace seqcoder
