// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "seqcoder/encoders.hpp"
#include "seqcoder/heads.hpp"
#include "seqcoder/rng.hpp"
#include "seqcoder/tensor.hpp"

namespace seqcoder {

enum class EncoderKind { kLstm, kTransformer };

std::string to_string(EncoderKind kind);
EncoderKind encoder_kind_from_string(const std::string& name);

struct ModelConfig {
  EncoderKind encoder = EncoderKind::kTransformer;
  std::size_t vocab_size = kDefaultVocab;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t d_ff = 256;
  std::size_t n_layers = 2;
  std::size_t n_pool = 4;
  std::vector<std::string> labels;  // classifier label map; empty for LM-only models
  bool tie_lm_head = true;
  bool literal_equations = false;
  std::size_t max_tokens = 600;

  static constexpr std::size_t kDefaultVocab = 2000;

  /// d=64, 4 heads, D=256, 2 layers.
  static ModelConfig desk_transformer(std::size_t vocab_size);
  /// d=768, 8 heads, D=2048, 6 layers.
  static ModelConfig paper_transformer(std::size_t vocab_size);
  static ModelConfig desk_lstm(std::size_t vocab_size);
  static ModelConfig paper_lstm(std::size_t vocab_size);

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Closed-form parameter count for a configuration.
std::size_t parameter_count(const ModelConfig& config);

/// LSTM width whose total parameter count is closest to `target` with every
/// other field of `base` unchanged.
std::size_t matched_lstm_width(const ModelConfig& base, std::size_t target);

/// Named parameters in creation order.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
  };

  Tensor& add(const std::string& name, Shape shape);
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }

  void zero_grad();
  std::size_t scalar_count() const;
  /// Deep copy of every value buffer, in order.
  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& values);

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Encoder, LM head and (when labels are configured) the classifier head.
class SequenceModel {
 public:
  /// Parameters drawn uniformly in ±sqrt(6/(fan_in+fan_out)); biases zero,
  /// layer-norm gains one.
  SequenceModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  bool has_classifier() const { return !config_.labels.empty(); }

  Tensor embed(std::span<const int> ids) const;
  /// Hidden states for framed ids.
  Tensor encode(std::span<const int> ids, const std::vector<std::uint8_t>* valid = nullptr,
                const ForwardContext& ctx = {}) const;
  /// Hidden states for caller-supplied input embeddings (T×d).
  Tensor encode_embedded(const Tensor& embedded, const std::vector<std::uint8_t>* valid = nullptr,
                         const ForwardContext& ctx = {}) const;

  LmHead lm_head() const;
  AttnPoolClassifier classifier() const;
  LstmParams lstm_params() const;
  TransformerParams transformer_params() const;

  /// Copies every non-classifier parameter whose name and shape match.
  /// Returns the number of tensors copied.
  std::size_t transfer_from(const SequenceModel& other);

 private:
  ModelConfig config_;
  ParameterStore params_;
};

}  // namespace seqcoder
