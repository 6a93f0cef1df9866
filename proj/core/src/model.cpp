// SPDX-License-Identifier: Apache-2.0
#include "seqcoder/model.hpp"

#include <cmath>
#include <cstdlib>

#include "seqcoder/errors.hpp"
#include "seqcoder/ops.hpp"

namespace seqcoder {

std::string to_string(EncoderKind kind) {
  return kind == EncoderKind::kLstm ? "lstm" : "transformer";
}

EncoderKind encoder_kind_from_string(const std::string& name) {
  if (name == "lstm") return EncoderKind::kLstm;
  if (name == "transformer") return EncoderKind::kTransformer;
  throw ConfigError("unknown encoder `" + name + "` (expected lstm or transformer)");
}

ModelConfig ModelConfig::desk_transformer(std::size_t vocab_size) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  return c;
}

ModelConfig ModelConfig::paper_transformer(std::size_t vocab_size) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  c.d_model = 768;
  c.n_heads = 8;
  c.d_ff = 2048;
  c.n_layers = 6;
  return c;
}

ModelConfig ModelConfig::desk_lstm(std::size_t vocab_size) {
  ModelConfig c = desk_transformer(vocab_size);
  c.encoder = EncoderKind::kLstm;
  return c;
}

ModelConfig ModelConfig::paper_lstm(std::size_t vocab_size) {
  ModelConfig c = paper_transformer(vocab_size);
  c.encoder = EncoderKind::kLstm;
  return c;
}

void ModelConfig::validate() const {
  if (vocab_size < 5) throw ConfigError("vocab_size must cover the special tokens");
  if (d_model == 0) throw ConfigError("d_model must be positive");
  if (n_pool == 0) throw ConfigError("n_pool must be at least 1");
  if (max_tokens < 3) throw ConfigError("max_tokens must be at least 3");
  if (encoder == EncoderKind::kTransformer) {
    if (n_heads == 0 || d_model % n_heads != 0) {
      throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                        std::to_string(n_heads));
    }
    if (d_model % 2 != 0) throw ConfigError("transformer d_model must be even");
    if (d_ff <= d_model) throw ConfigError("d_ff must exceed d_model");
  }
}

nlohmann::json ModelConfig::to_json() const {
  return nlohmann::json{{"encoder", to_string(encoder)},
                        {"vocab_size", vocab_size},
                        {"d_model", d_model},
                        {"n_heads", n_heads},
                        {"d_ff", d_ff},
                        {"n_layers", n_layers},
                        {"n_pool", n_pool},
                        {"labels", labels},
                        {"tie_lm_head", tie_lm_head},
                        {"literal_equations", literal_equations},
                        {"max_tokens", max_tokens}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    if (j.contains("encoder")) c.encoder = encoder_kind_from_string(j.at("encoder").get<std::string>());
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.d_model = j.value("d_model", c.d_model);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.d_ff = j.value("d_ff", c.d_ff);
    c.n_layers = j.value("n_layers", c.n_layers);
    c.n_pool = j.value("n_pool", c.n_pool);
    c.labels = j.value("labels", c.labels);
    c.tie_lm_head = j.value("tie_lm_head", c.tie_lm_head);
    c.literal_equations = j.value("literal_equations", c.literal_equations);
    c.max_tokens = j.value("max_tokens", c.max_tokens);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

std::size_t parameter_count(const ModelConfig& c) {
  const std::size_t V = c.vocab_size;
  const std::size_t d = c.d_model;
  std::size_t total = V * d + V;  // embedding + LM bias
  if (!c.tie_lm_head) total += V * d;
  if (c.encoder == EncoderKind::kLstm) {
    total += 8 * d * d + 4 * d;
  } else {
    const std::size_t dh = d / c.n_heads;
    const std::size_t per_head = 3 * (dh * d + dh) + dh * dh + dh;
    const std::size_t per_layer =
        c.n_heads * per_head + (c.d_ff * d + c.d_ff) + (d * c.d_ff + d) + 4 * d;
    total += c.n_layers * per_layer;
  }
  const std::size_t m = c.labels.size();
  if (m > 0) total += c.n_pool * (d * d + d) + m * c.n_pool * d + m;
  return total;
}

std::size_t matched_lstm_width(const ModelConfig& base, std::size_t target) {
  ModelConfig probe = base;
  probe.encoder = EncoderKind::kLstm;
  std::size_t best = 1;
  std::size_t best_gap = SIZE_MAX;
  for (std::size_t d = 1; d <= 4096; ++d) {
    probe.d_model = d;
    const std::size_t n = parameter_count(probe);
    const std::size_t gap = n > target ? n - target : target - n;
    if (gap < best_gap) {
      best_gap = gap;
      best = d;
    }
    if (n > target) break;
  }
  return best;
}

Tensor& ParameterStore::add(const std::string& name, Shape shape) {
  if (index_.count(name)) throw ContractError("duplicate parameter " + name);
  index_.emplace(name, entries_.size());
  entries_.push_back({name, Tensor::zeros(shape, true)});
  return entries_.back().tensor;
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter " + name);
  return entries_[it->second].tensor;
}

Tensor& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter " + name);
  return entries_[it->second].tensor;
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

std::vector<std::vector<double>> ParameterStore::snapshot() const {
  std::vector<std::vector<double>> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.emplace_back(e.tensor.values().begin(), e.tensor.values().end());
  return out;
}

void ParameterStore::restore(const std::vector<std::vector<double>>& values) {
  if (values.size() != entries_.size()) throw ContractError("snapshot does not match parameters");
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto dst = entries_[i].tensor.mutable_values();
    if (values[i].size() != dst.size()) throw ContractError("snapshot shape mismatch");
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

namespace {

void init_uniform(Tensor& t, double limit, Rng& rng) {
  for (double& v : t.mutable_values()) v = uniform(rng, -limit, limit);
}

void init_xavier(Tensor& t, Rng& rng) {
  init_uniform(t, std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols())), rng);
}

std::string layer_prefix(std::size_t l) { return "tf." + std::to_string(l) + "."; }

std::string head_prefix(std::size_t l, std::size_t i) {
  return layer_prefix(l) + "head." + std::to_string(i) + ".";
}

}  // namespace

SequenceModel::SequenceModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(seed);
  const std::size_t V = config_.vocab_size;
  const std::size_t d = config_.d_model;

  init_uniform(params_.add("embedding", {V, d}), std::sqrt(3.0 / static_cast<double>(d)), rng);
  if (!config_.tie_lm_head) init_xavier(params_.add("lm.projection", {V, d}), rng);
  params_.add("lm.bias", {1, V});

  if (config_.encoder == EncoderKind::kLstm) {
    for (const char* g : {"f", "i", "o", "c"}) {
      init_xavier(params_.add(std::string("lstm.W_") + g, {d, d}), rng);
      init_xavier(params_.add(std::string("lstm.V_") + g, {d, d}), rng);
      params_.add(std::string("lstm.b_") + g, {1, d});
    }
  } else {
    const std::size_t dh = d / config_.n_heads;
    for (std::size_t l = 0; l < config_.n_layers; ++l) {
      for (std::size_t i = 0; i < config_.n_heads; ++i) {
        const std::string p = head_prefix(l, i);
        for (const char* m : {"k", "q", "v"}) {
          init_xavier(params_.add(p + "W_" + m, {dh, d}), rng);
          params_.add(p + "b_" + m, {1, dh});
        }
        init_xavier(params_.add(p + "W_h", {dh, dh}), rng);
        params_.add(p + "b_h", {1, dh});
      }
      const std::string p = layer_prefix(l);
      init_xavier(params_.add(p + "W_o1", {config_.d_ff, d}), rng);
      params_.add(p + "b_o1", {1, config_.d_ff});
      init_xavier(params_.add(p + "W_o2", {d, config_.d_ff}), rng);
      params_.add(p + "b_o2", {1, d});
      for (const char* ln : {"ln1", "ln2"}) {
        for (double& v : params_.add(p + ln + ".gain", {1, d}).mutable_values()) v = 1.0;
        params_.add(p + ln + ".bias", {1, d});
      }
    }
  }

  const std::size_t m = config_.labels.size();
  if (m > 0) {
    for (std::size_t k = 0; k < config_.n_pool; ++k) {
      init_xavier(params_.add("cls.pool." + std::to_string(k) + ".W", {d, d}), rng);
      params_.add("cls.pool." + std::to_string(k) + ".b", {1, d});
    }
    init_xavier(params_.add("cls.label.W", {m, config_.n_pool * d}), rng);
    params_.add("cls.label.b", {1, m});
  }
}

Tensor SequenceModel::embed(std::span<const int> ids) const {
  return embedding_lookup(params_.get("embedding"), ids);
}

Tensor SequenceModel::encode(std::span<const int> ids, const std::vector<std::uint8_t>* valid,
                             const ForwardContext& ctx) const {
  return encode_embedded(embed(ids), valid, ctx);
}

Tensor SequenceModel::encode_embedded(const Tensor& embedded, const std::vector<std::uint8_t>* valid,
                                      const ForwardContext& ctx) const {
  if (config_.encoder == EncoderKind::kLstm) {
    // The recurrence is causal on its own; PAD states are never read.
    return lstm_forward_embedded(lstm_params(), embedded, ctx);
  }
  return transformer_forward_embedded(transformer_params(), embedded, valid, ctx);
}

LmHead SequenceModel::lm_head() const {
  return {params_.get(config_.tie_lm_head ? "embedding" : "lm.projection"), params_.get("lm.bias")};
}

AttnPoolClassifier SequenceModel::classifier() const {
  if (!has_classifier()) throw ContractError("model has no classifier head (no labels configured)");
  AttnPoolClassifier cls;
  for (std::size_t k = 0; k < config_.n_pool; ++k) {
    cls.query_weight.push_back(params_.get("cls.pool." + std::to_string(k) + ".W"));
    cls.query_bias.push_back(params_.get("cls.pool." + std::to_string(k) + ".b"));
  }
  cls.label_weight = params_.get("cls.label.W");
  cls.label_bias = params_.get("cls.label.b");
  return cls;
}

LstmParams SequenceModel::lstm_params() const {
  if (config_.encoder != EncoderKind::kLstm) throw ContractError("model is not an LSTM");
  LstmParams p;
  p.embedding = params_.get("embedding");
  p.W_f = params_.get("lstm.W_f");
  p.W_i = params_.get("lstm.W_i");
  p.W_o = params_.get("lstm.W_o");
  p.W_c = params_.get("lstm.W_c");
  p.V_f = params_.get("lstm.V_f");
  p.V_i = params_.get("lstm.V_i");
  p.V_o = params_.get("lstm.V_o");
  p.V_c = params_.get("lstm.V_c");
  p.b_f = params_.get("lstm.b_f");
  p.b_i = params_.get("lstm.b_i");
  p.b_o = params_.get("lstm.b_o");
  p.b_c = params_.get("lstm.b_c");
  return p;
}

TransformerParams SequenceModel::transformer_params() const {
  if (config_.encoder != EncoderKind::kTransformer) throw ContractError("model is not a Transformer");
  TransformerParams p;
  p.embedding = params_.get("embedding");
  p.literal_equations = config_.literal_equations;
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    TransformerLayerParams layer;
    for (std::size_t i = 0; i < config_.n_heads; ++i) {
      const std::string h = head_prefix(l, i);
      layer.heads.push_back({params_.get(h + "W_k"), params_.get(h + "b_k"), params_.get(h + "W_q"),
                             params_.get(h + "b_q"), params_.get(h + "W_v"), params_.get(h + "b_v"),
                             params_.get(h + "W_h"), params_.get(h + "b_h")});
    }
    const std::string p_ = layer_prefix(l);
    layer.W_o1 = params_.get(p_ + "W_o1");
    layer.b_o1 = params_.get(p_ + "b_o1");
    layer.W_o2 = params_.get(p_ + "W_o2");
    layer.b_o2 = params_.get(p_ + "b_o2");
    layer.ln1_gain = params_.get(p_ + "ln1.gain");
    layer.ln1_bias = params_.get(p_ + "ln1.bias");
    layer.ln2_gain = params_.get(p_ + "ln2.gain");
    layer.ln2_bias = params_.get(p_ + "ln2.bias");
    p.layers.push_back(std::move(layer));
  }
  return p;
}

std::size_t SequenceModel::transfer_from(const SequenceModel& other) {
  std::size_t copied = 0;
  for (auto& e : params_.entries()) {
    if (e.name.rfind("cls.", 0) == 0 || !other.params().contains(e.name)) continue;
    const Tensor& src = other.params().get(e.name);
    if (!(src.shape() == e.tensor.shape())) continue;
    auto dst = e.tensor.mutable_values();
    std::copy(src.values().begin(), src.values().end(), dst.begin());
    ++copied;
  }
  return copied;
}

}  // namespace seqcoder
