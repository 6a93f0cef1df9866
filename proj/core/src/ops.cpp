// SPDX-License-Identifier: Apache-2.0
#include "seqcoder/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "seqcoder/errors.hpp"

namespace seqcoder {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap cmap(const TensorNode& n) {
  return ConstMap(n.value.data(), static_cast<Eigen::Index>(n.shape.rows),
                  static_cast<Eigen::Index>(n.shape.cols));
}
ConstMap gmap(const TensorNode& n) {
  return ConstMap(n.grad.data(), static_cast<Eigen::Index>(n.shape.rows),
                  static_cast<Eigen::Index>(n.shape.cols));
}
MutMap gmut(TensorNode& n) {
  return MutMap(n.grad_buffer(), static_cast<Eigen::Index>(n.shape.rows),
                static_cast<Eigen::Index>(n.shape.cols));
}

enum class Broadcast { kSame, kRow };

Broadcast check_binary(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::kSame;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kRow;
  throw DimensionError(std::string(op) + ": incompatible shapes " + a.shape().str() + " and " +
                       b.shape().str());
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
  Buffer out(a.size());
  const auto& av = a.node()->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
  const bool rec = needs_tape({&a});
  Tensor result = make_result(a.shape(), std::move(out), rec);
  if (rec) {
    auto an = a.node();
    auto on = result.node();
    Tape::current().record({an}, on, [an, on, deriv]() {
      double* g = an->grad_buffer();
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        g[i] += on->grad[i] * deriv(an->value[i], on->value[i]);
      }
    });
  }
  return result;
}

// Binary op with optional row broadcasting of `b`. dfa/dfb map
// (a, b, upstream) to the local contribution.
template <typename Fwd, typename Da, typename Db>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Da da, Db db) {
  const Broadcast mode = check_binary(a, b, name);
  const std::size_t cols = a.cols();
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  Buffer out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t j = mode == Broadcast::kSame ? i : i % cols;
    out[i] = fwd(av[i], bv[j]);
  }
  const bool rec = needs_tape({&a, &b});
  Tensor result = make_result(a.shape(), std::move(out), rec);
  if (rec) {
    auto an = a.node();
    auto bn = b.node();
    auto on = result.node();
    Tape::current().record({an, bn}, on, [an, bn, on, mode, cols, da, db]() {
      const auto& g = on->grad;
      double* ga = an->requires_grad ? an->grad_buffer() : nullptr;
      double* gb = bn->requires_grad ? bn->grad_buffer() : nullptr;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const std::size_t j = mode == Broadcast::kSame ? i : i % cols;
        if (ga) ga[i] += da(an->value[i], bn->value[j], g[i]);
        if (gb) gb[j] += db(an->value[i], bn->value[j], g[i]);
      }
    });
  }
  return result;
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double g) { return g; }, [](double, double, double g) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double g) { return g; }, [](double, double, double g) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y, double g) { return g * y; },
      [](double x, double, double g) { return g * x; });
}

Tensor neg(const Tensor& a) {
  return unary(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(a, sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor elementwise(ElementwiseKind kind, const Tensor& a, const Tensor* b, double factor) {
  auto need_b = [&]() -> const Tensor& {
    if (b == nullptr || !b->defined()) throw ContractError("binary elementwise op needs two operands");
    return *b;
  };
  switch (kind) {
    case ElementwiseKind::kAdd: return add(a, need_b());
    case ElementwiseKind::kSub: return sub(a, need_b());
    case ElementwiseKind::kMul: return mul(a, need_b());
    case ElementwiseKind::kSigmoid: return sigmoid(a);
    case ElementwiseKind::kTanh: return tanh(a);
    case ElementwiseKind::kRelu: return relu(a);
    case ElementwiseKind::kNeg: return neg(a);
    case ElementwiseKind::kScale: return scale(a, factor);
  }
  throw ContractError("unknown elementwise kind");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ for " + a.shape().str() + " x " +
                         b.shape().str());
  }
  Buffer out(a.rows() * b.cols());
  MutMap(out.data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(b.cols()))
      .noalias() = cmap(*a.node()) * cmap(*b.node());
  const bool rec = needs_tape({&a, &b});
  Tensor result = make_result({a.rows(), b.cols()}, std::move(out), rec);
  if (rec) {
    auto an = a.node();
    auto bn = b.node();
    auto on = result.node();
    Tape::current().record({an, bn}, on, [an, bn, on]() {
      if (an->requires_grad) gmut(*an).noalias() += gmap(*on) * cmap(*bn).transpose();
      if (bn->requires_grad) gmut(*bn).noalias() += cmap(*an).transpose() * gmap(*on);
    });
  }
  return result;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: inner dimensions differ for " + a.shape().str() + " x " +
                         b.shape().str() + "^T");
  }
  Buffer out(a.rows() * b.rows());
  MutMap(out.data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(b.rows()))
      .noalias() = cmap(*a.node()) * cmap(*b.node()).transpose();
  const bool rec = needs_tape({&a, &b});
  Tensor result = make_result({a.rows(), b.rows()}, std::move(out), rec);
  if (rec) {
    auto an = a.node();
    auto bn = b.node();
    auto on = result.node();
    Tape::current().record({an, bn}, on, [an, bn, on]() {
      if (an->requires_grad) gmut(*an).noalias() += gmap(*on) * cmap(*bn);
      if (bn->requires_grad) gmut(*bn).noalias() += gmap(*on).transpose() * cmap(*an);
    });
  }
  return result;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.cols() != weight.cols()) {
    throw DimensionError("linear: input " + x.shape().str() + " does not match weight " +
                         weight.shape().str());
  }
  if (bias.defined() && !(bias.rows() == 1 && bias.cols() == weight.rows())) {
    throw DimensionError("linear: bias " + bias.shape().str() + " does not match weight " +
                         weight.shape().str());
  }
  const auto T = static_cast<Eigen::Index>(x.rows());
  const auto out_dim = static_cast<Eigen::Index>(weight.rows());
  Buffer out(x.rows() * weight.rows());
  MutMap y(out.data(), T, out_dim);
  y.noalias() = cmap(*x.node()) * cmap(*weight.node()).transpose();
  if (bias.defined()) y.rowwise() += cmap(*bias.node()).row(0);
  const bool rec = needs_tape({&x, &weight, &bias});
  Tensor result = make_result({x.rows(), weight.rows()}, std::move(out), rec);
  if (rec) {
    auto xn = x.node();
    auto wn = weight.node();
    auto bn = bias.defined() ? bias.node() : nullptr;
    auto on = result.node();
    std::vector<Tape::NodePtr> inputs{xn, wn};
    if (bn) inputs.push_back(bn);
    Tape::current().record(std::move(inputs), on, [xn, wn, bn, on]() {
      if (xn->requires_grad) gmut(*xn).noalias() += gmap(*on) * cmap(*wn);
      if (wn->requires_grad) gmut(*wn).noalias() += gmap(*on).transpose() * cmap(*xn);
      if (bn && bn->requires_grad) gmut(*bn).row(0) += gmap(*on).colwise().sum();
    });
  }
  return result;
}

Tensor softmax_rows(const Tensor& x, const std::vector<std::uint8_t>* mask) {
  const std::size_t R = x.rows();
  const std::size_t C = x.cols();
  if (mask != nullptr && mask->size() != x.size()) {
    throw DimensionError("softmax_rows: mask has " + std::to_string(mask->size()) +
                         " entries for input " + x.shape().str());
  }
  const auto& xv = x.node()->value;
  Buffer out(x.size(), 0.0);
  for (std::size_t r = 0; r < R; ++r) {
    const std::size_t base = r * C;
    double mx = -INFINITY;
    for (std::size_t c = 0; c < C; ++c) {
      if (mask && !(*mask)[base + c]) continue;
      mx = std::max(mx, xv[base + c]);
    }
    if (mx == -INFINITY) {
      throw ContractError("softmax_rows: row " + std::to_string(r) + " is fully masked");
    }
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      if (mask && !(*mask)[base + c]) continue;
      out[base + c] = std::exp(xv[base + c] - mx);
      z += out[base + c];
    }
    for (std::size_t c = 0; c < C; ++c) out[base + c] /= z;
  }
  const bool rec = needs_tape({&x});
  Tensor result = make_result(x.shape(), std::move(out), rec);
  if (rec) {
    auto xn = x.node();
    auto on = result.node();
    Tape::current().record({xn}, on, [xn, on, R, C]() {
      double* gx = xn->grad_buffer();
      const auto& y = on->value;
      const auto& gy = on->grad;
      for (std::size_t r = 0; r < R; ++r) {
        const std::size_t base = r * C;
        double dot = 0.0;
        for (std::size_t c = 0; c < C; ++c) dot += y[base + c] * gy[base + c];
        // Masked entries have y == 0 and therefore receive no gradient.
        for (std::size_t c = 0; c < C; ++c) gx[base + c] += y[base + c] * (gy[base + c] - dot);
      }
    });
  }
  return result;
}

Tensor embedding_lookup(const Tensor& table, std::span<const int> ids) {
  const std::size_t V = table.rows();
  const std::size_t d = table.cols();
  std::vector<int> id_copy(ids.begin(), ids.end());
  Buffer out(ids.size() * d);
  const auto& tv = table.node()->value;
  for (std::size_t t = 0; t < ids.size(); ++t) {
    const int id = ids[t];
    if (id < 0 || static_cast<std::size_t>(id) >= V) {
      throw IndexError("embedding_lookup: id " + std::to_string(id) + " outside [0, " +
                       std::to_string(V) + ")");
    }
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(id * d), d,
                out.begin() + static_cast<std::ptrdiff_t>(t * d));
  }
  const bool rec = needs_tape({&table});
  Tensor result = make_result({ids.size(), d}, std::move(out), rec);
  if (rec) {
    auto tn = table.node();
    auto on = result.node();
    Tape::current().record({tn}, on, [tn, on, ids = std::move(id_copy), d]() {
      double* g = tn->grad_buffer();
      for (std::size_t t = 0; t < ids.size(); ++t) {
        const std::size_t row = static_cast<std::size_t>(ids[t]) * d;
        for (std::size_t k = 0; k < d; ++k) g[row + k] += on->grad[t * d + k];
      }
    });
  }
  return result;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  if (axis != 0 && axis != 1) throw ContractError("concat axis must be 0 or 1");
  std::size_t rows = parts[0].rows();
  std::size_t cols = parts[0].cols();
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const auto& s = parts[i].shape();
    if (axis == 0) {
      if (s.cols != cols) {
        throw DimensionError("concat axis 0: " + parts[0].shape().str() + " vs " + s.str());
      }
      rows += s.rows;
    } else {
      if (s.rows != rows) {
        throw DimensionError("concat axis 1: " + parts[0].shape().str() + " vs " + s.str());
      }
      cols += s.cols;
    }
  }
  Buffer out(rows * cols);
  std::vector<Tape::NodePtr> nodes;
  bool rec = false;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto& pv = p.node()->value;
    if (axis == 0) {
      std::copy(pv.begin(), pv.end(), out.begin() + static_cast<std::ptrdiff_t>(offset * cols));
      offset += p.rows();
    } else {
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(r * p.cols()), p.cols(),
                    out.begin() + static_cast<std::ptrdiff_t>(r * cols + offset));
      }
      offset += p.cols();
    }
    nodes.push_back(p.node());
    rec = rec || needs_tape({&p});
  }
  Tensor result = make_result({rows, cols}, std::move(out), rec);
  if (rec) {
    auto on = result.node();
    Tape::current().record(nodes, on, [nodes, on, axis, cols]() {
      std::size_t off = 0;
      for (const auto& n : nodes) {
        const std::size_t pr = n->shape.rows;
        const std::size_t pc = n->shape.cols;
        if (n->requires_grad) {
          double* g = n->grad_buffer();
          for (std::size_t r = 0; r < pr; ++r) {
            for (std::size_t c = 0; c < pc; ++c) {
              const std::size_t src = axis == 0 ? (off + r) * cols + c : r * cols + off + c;
              g[r * pc + c] += on->grad[src];
            }
          }
        }
        off += axis == 0 ? pr : pc;
      }
    });
  }
  return result;
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  if (begin + count > x.rows()) {
    throw DimensionError("slice_rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " + x.shape().str());
  }
  const std::size_t C = x.cols();
  const auto& xv = x.node()->value;
  Buffer out(xv.begin() + static_cast<std::ptrdiff_t>(begin * C),
                          xv.begin() + static_cast<std::ptrdiff_t>((begin + count) * C));
  const bool rec = needs_tape({&x});
  Tensor result = make_result({count, C}, std::move(out), rec);
  if (rec) {
    auto xn = x.node();
    auto on = result.node();
    Tape::current().record({xn}, on, [xn, on, begin, C]() {
      double* g = xn->grad_buffer() + begin * C;
      for (std::size_t i = 0; i < on->grad.size(); ++i) g[i] += on->grad[i];
    });
  }
  return result;
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  if (begin + count > x.cols()) {
    throw DimensionError("slice_cols [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " + x.shape().str());
  }
  const std::size_t R = x.rows();
  const std::size_t C = x.cols();
  const auto& xv = x.node()->value;
  Buffer out(R * count);
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t c = 0; c < count; ++c) out[r * count + c] = xv[r * C + begin + c];
  }
  const bool rec = needs_tape({&x});
  Tensor result = make_result({R, count}, std::move(out), rec);
  if (rec) {
    auto xn = x.node();
    auto on = result.node();
    Tape::current().record({xn}, on, [xn, on, begin, count, R, C]() {
      double* g = xn->grad_buffer();
      for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t c = 0; c < count; ++c) g[r * C + begin + c] += on->grad[r * count + c];
      }
    });
  }
  return result;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t R = x.rows();
  const std::size_t d = x.cols();
  if (d == 0) throw DimensionError("layer_norm over zero columns");
  if (!(gain.rows() == 1 && gain.cols() == d) || !(bias.rows() == 1 && bias.cols() == d)) {
    throw DimensionError("layer_norm: gain " + gain.shape().str() + " / bias " +
                         bias.shape().str() + " do not match input " + x.shape().str());
  }
  const auto& xv = x.node()->value;
  const auto& gv = gain.node()->value;
  const auto& bv = bias.node()->value;
  Buffer xhat(x.size());
  Buffer inv_std(R);
  Buffer out(x.size());
  for (std::size_t r = 0; r < R; ++r) {
    const double* row = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t k = 0; k < d; ++k) mu += row[k];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t k = 0; k < d; ++k) var += (row[k] - mu) * (row[k] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t k = 0; k < d; ++k) {
      xhat[r * d + k] = (row[k] - mu) * inv_std[r];
      out[r * d + k] = xhat[r * d + k] * gv[k] + bv[k];
    }
  }
  const bool rec = needs_tape({&x, &gain, &bias});
  Tensor result = make_result(x.shape(), std::move(out), rec);
  if (rec) {
    auto xn = x.node();
    auto gn = gain.node();
    auto bn = bias.node();
    auto on = result.node();
    Tape::current().record(
        {xn, gn, bn}, on,
        [xn, gn, bn, on, R, d, xhat = std::move(xhat), inv_std = std::move(inv_std)]() {
          const auto& gy = on->grad;
          if (gn->requires_grad || bn->requires_grad) {
            double* gg = gn->grad_buffer();
            double* gb = bn->grad_buffer();
            for (std::size_t r = 0; r < R; ++r) {
              for (std::size_t k = 0; k < d; ++k) {
                gg[k] += gy[r * d + k] * xhat[r * d + k];
                gb[k] += gy[r * d + k];
              }
            }
          }
          if (!xn->requires_grad) return;
          double* gx = xn->grad_buffer();
          const auto& gv = gn->value;
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t r = 0; r < R; ++r) {
            double s1 = 0.0;
            double s2 = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
              const double dh = gy[r * d + k] * gv[k];
              s1 += dh;
              s2 += dh * xhat[r * d + k];
            }
            for (std::size_t k = 0; k < d; ++k) {
              const double dh = gy[r * d + k] * gv[k];
              gx[r * d + k] += inv_std[r] * (dh - inv_d * s1 - xhat[r * d + k] * inv_d * s2);
            }
          }
        });
  }
  return result;
}

Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  Buffer factor(x.size());
  for (auto& f : factor) f = uniform01(rng) < rate ? 0.0 : keep_scale;
  const auto& xv = x.node()->value;
  Buffer out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * factor[i];
  const bool rec = needs_tape({&x});
  Tensor result = make_result(x.shape(), std::move(out), rec);
  if (rec) {
    auto xn = x.node();
    auto on = result.node();
    Tape::current().record({xn}, on, [xn, on, factor = std::move(factor)]() {
      double* g = xn->grad_buffer();
      for (std::size_t i = 0; i < factor.size(); ++i) g[i] += on->grad[i] * factor[i];
    });
  }
  return result;
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  const bool rec = needs_tape({&x});
  Tensor result = make_result({1, 1}, {s}, rec);
  if (rec) {
    auto xn = x.node();
    auto on = result.node();
    Tape::current().record({xn}, on, [xn, on]() {
      double* g = xn->grad_buffer();
      for (std::size_t i = 0; i < xn->value.size(); ++i) g[i] += on->grad[0];
    });
  }
  return result;
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw ContractError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor cross_entropy_rows(const Tensor& logits, std::span<const std::size_t> rows,
                          std::span<const int> targets) {
  if (rows.size() != targets.size()) {
    throw DimensionError("cross_entropy_rows: rows/targets length mismatch");
  }
  if (rows.empty()) throw ContractError("cross_entropy_rows: no rows selected");
  const std::size_t V = logits.cols();
  const auto& lv = logits.node()->value;
  Buffer probs(rows.size() * V);
  double total = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= logits.rows()) throw IndexError("cross_entropy_rows: row out of range");
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= V) {
      throw IndexError("cross_entropy_rows: target " + std::to_string(targets[i]) +
                       " outside vocabulary of " + std::to_string(V));
    }
    const double* z = lv.data() + rows[i] * V;
    double mx = -INFINITY;
    for (std::size_t k = 0; k < V; ++k) mx = std::max(mx, z[k]);
    double s = 0.0;
    for (std::size_t k = 0; k < V; ++k) {
      probs[i * V + k] = std::exp(z[k] - mx);
      s += probs[i * V + k];
    }
    for (std::size_t k = 0; k < V; ++k) probs[i * V + k] /= s;
    total += -(z[targets[i]] - mx - std::log(s));
  }
  const double n = static_cast<double>(rows.size());
  const bool rec = needs_tape({&logits});
  Tensor result = make_result({1, 1}, {total / n}, rec);
  if (rec) {
    auto ln = logits.node();
    auto on = result.node();
    std::vector<std::size_t> row_copy(rows.begin(), rows.end());
    std::vector<int> target_copy(targets.begin(), targets.end());
    Tape::current().record({ln}, on,
                           [ln, on, V, n, probs = std::move(probs), row_copy = std::move(row_copy),
                            target_copy = std::move(target_copy)]() {
                             double* g = ln->grad_buffer();
                             const double up = on->grad[0] / n;
                             for (std::size_t i = 0; i < row_copy.size(); ++i) {
                               double* gr = g + row_copy[i] * V;
                               for (std::size_t k = 0; k < V; ++k) gr[k] += up * probs[i * V + k];
                               gr[target_copy[i]] -= up;
                             }
                           });
  }
  return result;
}

Tensor binary_cross_entropy(const Tensor& probs, std::span<const double> targets) {
  if (probs.size() != targets.size() || probs.size() == 0) {
    throw DimensionError("binary_cross_entropy: " + std::to_string(probs.size()) +
                         " probabilities vs " + std::to_string(targets.size()) + " targets");
  }
  const auto& pv = probs.node()->value;
  const std::size_t m = pv.size();
  double total = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const double p = std::clamp(pv[j], kProbClamp, 1.0 - kProbClamp);
    total += targets[j] * std::log(p) + (1.0 - targets[j]) * std::log(1.0 - p);
  }
  const double loss = -total / static_cast<double>(m);
  const bool rec = needs_tape({&probs});
  Tensor result = make_result({1, 1}, {loss == 0.0 ? 0.0 : loss}, rec);
  if (rec) {
    auto pn = probs.node();
    auto on = result.node();
    std::vector<double> y(targets.begin(), targets.end());
    Tape::current().record({pn}, on, [pn, on, m, y = std::move(y)]() {
      double* g = pn->grad_buffer();
      const double up = on->grad[0] / static_cast<double>(m);
      for (std::size_t j = 0; j < m; ++j) {
        const double p = std::clamp(pn->value[j], kProbClamp, 1.0 - kProbClamp);
        g[j] += up * (-(y[j] / p) + (1.0 - y[j]) / (1.0 - p));
      }
    });
  }
  return result;
}

}  // namespace seqcoder
