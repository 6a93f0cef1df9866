// SPDX-License-Identifier: Apache-2.0
//
// Sequence encoders mapping framed token ids to hidden states H (T×d): a
// unidirectional LSTM and a causal Transformer decoder stack.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "seqcoder/rng.hpp"
#include "seqcoder/tensor.hpp"

namespace seqcoder {

/// Dropout switch shared by every forward pass.
struct ForwardContext {
  bool training = false;
  double dropout = 0.0;
  Rng* rng = nullptr;

  static ForwardContext inference() { return {}; }
};

Tensor apply_dropout(const Tensor& x, const ForwardContext& ctx);

// ---------------------------------------------------------------------------
// LSTM

struct LstmParams {
  Tensor embedding;  // V×d
  Tensor W_f, W_i, W_o, W_c;  // d×d input weights
  Tensor V_f, V_i, V_o, V_c;  // d×d recurrent weights
  Tensor b_f, b_i, b_o, b_c;  // 1×d

  std::size_t dim() const { return W_f.rows(); }
};

struct LstmState {
  Tensor h;  // 1×d
  Tensor c;  // 1×d
};

/// One recurrence step: gates f, i, o through sigmoid, candidate through tanh,
/// c = f⊙c_prev + i⊙c̃, h = o⊙tanh(c).
LstmState lstm_step(const LstmParams& p, const Tensor& x, const Tensor& h_prev, const Tensor& c_prev);

/// Left-to-right scan from zero state over already-embedded inputs X (T×d).
Tensor lstm_forward_embedded(const LstmParams& p, const Tensor& x, const ForwardContext& ctx = {});

Tensor lstm_forward(const LstmParams& p, std::span<const int> ids, const ForwardContext& ctx = {});

// ---------------------------------------------------------------------------
// Transformer

struct AttentionHeadParams {
  Tensor W_k, b_k;  // (d/n)×d, 1×(d/n)
  Tensor W_q, b_q;
  Tensor W_v, b_v;
  Tensor W_h, b_h;  // (d/n)×(d/n), 1×(d/n)
};

struct TransformerLayerParams {
  std::vector<AttentionHeadParams> heads;
  Tensor W_o1, b_o1;  // D×d, 1×D
  Tensor W_o2, b_o2;  // d×D, 1×d
  Tensor ln1_gain, ln1_bias;
  Tensor ln2_gain, ln2_bias;
};

struct TransformerParams {
  Tensor embedding;  // V×d
  std::vector<TransformerLayerParams> layers;
  /// Drops residual connections and layer norms and scales scores by √d
  /// instead of √(d/n), evaluating the block equations literally.
  bool literal_equations = false;
};

/// M[t,s] = 1 iff s ≤ t and position s is valid (not PAD).
struct CausalMask {
  std::size_t length = 0;
  std::vector<std::uint8_t> allowed;  // row-major length×length

  static CausalMask build(std::size_t length, const std::vector<std::uint8_t>* valid = nullptr);
  bool operator()(std::size_t t, std::size_t s) const { return allowed[t * length + s] != 0; }
};

/// Sinusoidal table: PE(t,2i) = sin(t/10000^{2i/d}), PE(t,2i+1) = cos(...).
/// Results are cached per (T, d).
Tensor positional_encoding(std::size_t length, std::size_t dim);

/// Multi-head causal self-attention; heads are concatenated along columns.
/// When `weights` is non-null the per-head attention matrices are appended.
Tensor multi_head_attention(const TransformerLayerParams& layer, const Tensor& h_prev,
                            const CausalMask& mask, bool literal_equations = false,
                            std::vector<Tensor>* weights = nullptr);

/// Post-norm block: H' = LN(H + MHA(H)); out = LN(H' + FFN(H')).
Tensor transformer_block(const TransformerLayerParams& layer, const Tensor& h_prev,
                         const CausalMask& mask, bool literal_equations = false,
                         const ForwardContext& ctx = {});

/// Input to the first block is √d·X + PE.
Tensor transformer_forward_embedded(const TransformerParams& p, const Tensor& x,
                                    const std::vector<std::uint8_t>* valid = nullptr,
                                    const ForwardContext& ctx = {});

Tensor transformer_forward(const TransformerParams& p, std::span<const int> ids,
                           const std::vector<std::uint8_t>* valid = nullptr,
                           const ForwardContext& ctx = {});

}  // namespace seqcoder
