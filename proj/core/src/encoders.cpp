// SPDX-License-Identifier: Apache-2.0
#include "seqcoder/encoders.hpp"

#include <cmath>
#include <map>
#include <mutex>

#include "seqcoder/errors.hpp"
#include "seqcoder/ops.hpp"

namespace seqcoder {

Tensor apply_dropout(const Tensor& x, const ForwardContext& ctx) {
  if (!ctx.training || ctx.dropout == 0.0) return x;
  if (ctx.rng == nullptr) throw ContractError("training forward pass without an rng");
  return dropout(x, ctx.dropout, *ctx.rng, true);
}

namespace {

void check_row(const Tensor& t, std::size_t d, const char* what) {
  if (t.rows() != 1 || t.cols() != d) {
    throw DimensionError(std::string("lstm_step: ") + what + " has shape " + t.shape().str() +
                         ", expected [1x" + std::to_string(d) + "]");
  }
}

// Shared by lstm_step and the scan; `xw_*` are the input projections
// W_g x + b_g for this position.
LstmState lstm_cell(const LstmParams& p, const Tensor& xw_f, const Tensor& xw_i, const Tensor& xw_o,
                    const Tensor& xw_c, const Tensor& h_prev, const Tensor& c_prev) {
  const Tensor none;
  Tensor f = sigmoid(add(xw_f, linear(h_prev, p.V_f, none)));
  Tensor i = sigmoid(add(xw_i, linear(h_prev, p.V_i, none)));
  Tensor o = sigmoid(add(xw_o, linear(h_prev, p.V_o, none)));
  Tensor cand = tanh(add(xw_c, linear(h_prev, p.V_c, none)));
  Tensor c = add(mul(f, c_prev), mul(i, cand));
  Tensor h = mul(o, tanh(c));
  return {h, c};
}

}  // namespace

LstmState lstm_step(const LstmParams& p, const Tensor& x, const Tensor& h_prev, const Tensor& c_prev) {
  const std::size_t d = p.dim();
  check_row(x, p.W_f.cols(), "x_t");
  check_row(h_prev, d, "h_prev");
  check_row(c_prev, d, "c_prev");
  return lstm_cell(p, linear(x, p.W_f, p.b_f), linear(x, p.W_i, p.b_i), linear(x, p.W_o, p.b_o),
                   linear(x, p.W_c, p.b_c), h_prev, c_prev);
}

Tensor lstm_forward_embedded(const LstmParams& p, const Tensor& x, const ForwardContext& ctx) {
  const std::size_t T = x.rows();
  const std::size_t d = p.dim();
  if (T == 0) throw ContractError("lstm_forward: empty sequence");
  Tensor input = apply_dropout(x, ctx);
  // Input projections for all positions at once; the recurrence only adds V h.
  Tensor xf = linear(input, p.W_f, p.b_f);
  Tensor xi = linear(input, p.W_i, p.b_i);
  Tensor xo = linear(input, p.W_o, p.b_o);
  Tensor xc = linear(input, p.W_c, p.b_c);
  Tensor h = Tensor::zeros({1, d});
  Tensor c = Tensor::zeros({1, d});
  std::vector<Tensor> states;
  states.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    LstmState s = lstm_cell(p, slice_rows(xf, t, 1), slice_rows(xi, t, 1), slice_rows(xo, t, 1),
                            slice_rows(xc, t, 1), h, c);
    h = s.h;
    c = s.c;
    states.push_back(h);
  }
  return apply_dropout(concat(states, 0), ctx);
}

Tensor lstm_forward(const LstmParams& p, std::span<const int> ids, const ForwardContext& ctx) {
  return lstm_forward_embedded(p, embedding_lookup(p.embedding, ids), ctx);
}

CausalMask CausalMask::build(std::size_t length, const std::vector<std::uint8_t>* valid) {
  if (valid != nullptr && valid->size() != length) {
    throw DimensionError("causal mask: validity mask length " + std::to_string(valid->size()) +
                         " does not match sequence length " + std::to_string(length));
  }
  CausalMask m;
  m.length = length;
  m.allowed.assign(length * length, 0);
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t s = 0; s <= t; ++s) {
      m.allowed[t * length + s] = (valid == nullptr || (*valid)[s]) ? 1 : 0;
    }
  }
  return m;
}

Tensor positional_encoding(std::size_t length, std::size_t dim) {
  if (dim % 2 != 0) {
    throw ConfigError("positional encoding needs an even dimension, got " + std::to_string(dim));
  }
  static std::mutex mu;
  static std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find({length, dim});
  if (it == cache.end()) {
    std::vector<double> table(length * dim);
    for (std::size_t t = 0; t < length; ++t) {
      for (std::size_t i = 0; i < dim / 2; ++i) {
        const double angle = static_cast<double>(t) /
                             std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(dim));
        table[t * dim + 2 * i] = std::sin(angle);
        table[t * dim + 2 * i + 1] = std::cos(angle);
      }
    }
    it = cache.emplace(std::make_pair(length, dim), std::move(table)).first;
  }
  return Tensor::from({length, dim}, it->second);
}

Tensor multi_head_attention(const TransformerLayerParams& layer, const Tensor& h_prev,
                            const CausalMask& mask, bool literal_equations,
                            std::vector<Tensor>* weights) {
  const std::size_t T = h_prev.rows();
  const std::size_t d = h_prev.cols();
  if (mask.length != T) {
    throw DimensionError("attention mask built for length " + std::to_string(mask.length) +
                         ", input has " + std::to_string(T) + " positions");
  }
  const std::size_t n = layer.heads.size();
  if (n == 0 || d % n != 0) {
    throw ConfigError("model width " + std::to_string(d) + " is not divisible by " +
                      std::to_string(n) + " heads");
  }
  const double scaling = 1.0 / std::sqrt(static_cast<double>(literal_equations ? d : d / n));
  std::vector<Tensor> outputs;
  outputs.reserve(n);
  for (const auto& head : layer.heads) {
    Tensor k = linear(h_prev, head.W_k, head.b_k);
    Tensor q = linear(h_prev, head.W_q, head.b_q);
    Tensor v = linear(h_prev, head.W_v, head.b_v);
    Tensor scores = scale(matmul_nt(q, k), scaling);
    Tensor alpha = softmax_rows(scores, &mask.allowed);
    if (weights != nullptr) weights->push_back(alpha);
    Tensor mixed = matmul(alpha, v);
    outputs.push_back(linear(mixed, head.W_h, head.b_h));
  }
  return outputs.size() == 1 ? outputs.front() : concat(outputs, 1);
}

Tensor transformer_block(const TransformerLayerParams& layer, const Tensor& h_prev,
                         const CausalMask& mask, bool literal_equations, const ForwardContext& ctx) {
  Tensor attended = apply_dropout(multi_head_attention(layer, h_prev, mask, literal_equations), ctx);
  Tensor mid = literal_equations
                   ? attended
                   : layer_norm(add(h_prev, attended), layer.ln1_gain, layer.ln1_bias);
  Tensor ff = linear(relu(linear(mid, layer.W_o1, layer.b_o1)), layer.W_o2, layer.b_o2);
  ff = apply_dropout(ff, ctx);
  if (literal_equations) return ff;
  return layer_norm(add(mid, ff), layer.ln2_gain, layer.ln2_bias);
}

Tensor transformer_forward_embedded(const TransformerParams& p, const Tensor& x,
                                    const std::vector<std::uint8_t>* valid,
                                    const ForwardContext& ctx) {
  const std::size_t T = x.rows();
  if (T == 0) throw ContractError("transformer_forward: empty sequence");
  const CausalMask mask = CausalMask::build(T, valid);
  // Embeddings are scaled by √d so they are not swamped by the unit-amplitude
  // positional table; the tied LM head reads the unscaled table.
  const double embed_scale = std::sqrt(static_cast<double>(x.cols()));
  Tensor h = apply_dropout(add(scale(x, embed_scale), positional_encoding(T, x.cols())), ctx);
  for (const auto& layer : p.layers) h = transformer_block(layer, h, mask, p.literal_equations, ctx);
  return h;
}

Tensor transformer_forward(const TransformerParams& p, std::span<const int> ids,
                           const std::vector<std::uint8_t>* valid, const ForwardContext& ctx) {
  return transformer_forward_embedded(p, embedding_lookup(p.embedding, ids), valid, ctx);
}

}  // namespace seqcoder
