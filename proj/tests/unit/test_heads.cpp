// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "seqcoder/errors.hpp"
#include "seqcoder/heads.hpp"
#include "seqcoder/model.hpp"
#include "seqcoder/ops.hpp"

using namespace seqcoder;
using seqcoder::testing::gradcheck;
using seqcoder::testing::random_tensor;

namespace {

// Per-position log-sum-exp loop over plain doubles.
double lm_loss_oracle(const LmHead& head, const Tensor& H, const std::vector<int>& ids,
                      const std::vector<std::uint8_t>* valid) {
  const std::size_t V = head.projection.rows();
  const std::size_t d = head.projection.cols();
  double total = 0;
  std::size_t count = 0;
  for (std::size_t t = 0; t + 1 < ids.size(); ++t) {
    if (valid && ((*valid)[t] == 0 || (*valid)[t + 1] == 0)) continue;
    std::vector<double> z(V);
    double zmax = -1e300;
    for (std::size_t v = 0; v < V; ++v) {
      z[v] = head.bias(0, v);
      for (std::size_t k = 0; k < d; ++k) z[v] += head.projection(v, k) * H(t, k);
      zmax = std::max(zmax, z[v]);
    }
    double se = 0;
    for (double zv : z) se += std::exp(zv - zmax);
    total += zmax + std::log(se) - z[static_cast<std::size_t>(ids[t + 1])];
    ++count;
  }
  return total / static_cast<double>(count);
}

}  // namespace

TEST(LmLoss, UniformLogitsGiveLogV) {
  LmHead head{Tensor::zeros({4, 3}), Tensor::zeros({1, 4})};
  Tensor H = Tensor::zeros({5, 3});
  EXPECT_NEAR(lm_loss(head, H, std::vector<int>{0, 1, 2, 3, 1}).item(), std::log(4.0), 1e-15);
  EXPECT_NEAR(perplexity(lm_loss(head, H, std::vector<int>{0, 1, 2, 3, 1}).item()), 4.0, 1e-12);
}

TEST(LmLoss, MatchesPerPositionOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t V = 3 + uniform_index(rng, 30);
    const std::size_t T = 2 + uniform_index(rng, 20);
    LmHead head{random_tensor({V, 6}, rng, -2, 2, false), random_tensor({1, V}, rng, -1, 1, false)};
    Tensor H = random_tensor({T, 6}, rng, -2, 2, false);
    std::vector<int> ids(T);
    for (auto& id : ids) id = static_cast<int>(uniform_index(rng, V));
    std::vector<std::uint8_t> valid(T, 1);
    const std::size_t pad_from = 2 + uniform_index(rng, T - 1);
    for (std::size_t t = pad_from; t < T; ++t) valid[t] = 0;
    EXPECT_NEAR(lm_loss(head, H, ids).item(), lm_loss_oracle(head, H, ids, nullptr), 1e-10);
    EXPECT_NEAR(lm_loss(head, H, ids, &valid).item(), lm_loss_oracle(head, H, ids, &valid), 1e-10);
    EXPECT_EQ(lm_target_count(T, &valid), pad_from - 1);
  }
  Tape::current().clear();
}

TEST(LmLoss, ShortSequenceIsContractError) {
  LmHead head{Tensor::zeros({4, 3}), Tensor::zeros({1, 4})};
  EXPECT_THROW(lm_loss(head, Tensor::zeros({1, 3}), std::vector<int>{2}), ContractError);
}

TEST(LmLoss, FiniteDifference) {
  Rng rng(2);
  Tensor U = random_tensor({7, 4}, rng);
  Tensor b = random_tensor({1, 7}, rng);
  Tensor H = random_tensor({5, 4}, rng);
  const std::vector<int> ids = {2, 6, 0, 5, 3};
  auto r = gradcheck([&] { return lm_loss(LmHead{U, b}, H, ids); }, {U, b, H}, {"U", "b", "H"});
  EXPECT_LT(r.max_rel_error, 1e-5) << r.worst;
}

TEST(Perplexity, Examples) {
  EXPECT_DOUBLE_EQ(perplexity(0.0), 1.0);
  EXPECT_NEAR(perplexity(std::log(50.0)), 50.0, 1e-10);
}

TEST(AttentionPool, SinglePositionReturnsThatState) {
  ModelConfig c;
  c.vocab_size = 10;
  c.d_model = 4;
  c.n_heads = 2;
  c.d_ff = 8;
  c.labels = {"x", "y", "z"};
  SequenceModel m(c, 3);
  Rng rng(4);
  Tensor h = random_tensor({1, 4}, rng, -1, 1, false);
  std::vector<Tensor> alphas;
  Tensor pooled = attention_pool(m.classifier(), h, nullptr, &alphas);
  ASSERT_EQ(pooled.cols(), 16u);
  for (std::size_t k = 0; k < 16; ++k) EXPECT_DOUBLE_EQ(pooled(0, k), h(0, k % 4));
  for (const auto& a : alphas) EXPECT_EQ(a(0, 0), 1.0);
}

TEST(AttentionPool, IdenticalStatesAndWeightSums) {
  ModelConfig c;
  c.vocab_size = 10;
  c.d_model = 4;
  c.n_heads = 2;
  c.d_ff = 8;
  c.labels = {"x", "y"};
  SequenceModel m(c, 5);
  Rng rng(6);
  Tensor row = random_tensor({1, 4}, rng, -1, 1, false);
  Tensor H = concat({row, row, row, row, row}, 0);
  Tensor pooled = attention_pool(m.classifier(), H);
  for (std::size_t k = 0; k < pooled.cols(); ++k) EXPECT_NEAR(pooled(0, k), row(0, k % 4), 1e-14);

  Tensor R = random_tensor({6, 4}, rng, -3, 3, false);
  const std::vector<std::uint8_t> valid = {1, 1, 1, 1, 0, 0};
  std::vector<Tensor> alphas;
  attention_pool(m.classifier(), R, &valid, &alphas);
  ASSERT_EQ(alphas.size(), c.n_pool);
  for (const auto& a : alphas) {
    double total = 0;
    for (std::size_t t = 0; t < 6; ++t) total += a(0, t);
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_EQ(a(0, 4), 0.0);
    EXPECT_EQ(a(0, 5), 0.0);
  }
  EXPECT_EQ(last_valid_position(6, &valid), 3u);
  EXPECT_EQ(last_valid_position(6, nullptr), 5u);
}

TEST(AttentionPool, FiniteDifferenceThroughClassifier) {
  ModelConfig c;
  c.vocab_size = 10;
  c.d_model = 4;
  c.n_heads = 2;
  c.d_ff = 8;
  c.labels = {"x", "y", "z"};
  SequenceModel m(c, 7);
  Rng rng(8);
  Tensor H = random_tensor({5, 4}, rng);
  const std::vector<double> y = {1, 0, 1};
  std::vector<Tensor> inputs = {H};
  std::vector<std::string> names = {"H"};
  for (auto& e : m.params().entries()) {
    if (e.name.rfind("cls.", 0) == 0) {
      inputs.push_back(e.tensor);
      names.push_back(e.name);
    }
  }
  auto r = gradcheck(
      [&] {
        const auto cls = m.classifier();
        return bce_loss(label_probs(cls, attention_pool(cls, H)), y);
      },
      inputs, names);
  EXPECT_LT(r.max_rel_error, 1e-5) << r.worst;
}

TEST(LabelProbs, ZeroWeightsGiveSigmoidOfBias) {
  AttnPoolClassifier cls;
  cls.query_weight = {Tensor::zeros({2, 2})};
  cls.query_bias = {Tensor::zeros({1, 2})};
  cls.label_weight = Tensor::zeros({2, 2});
  cls.label_bias = Tensor::from({1, 2}, {0.0, std::log(3.0)});
  Tensor pooled = Tensor::from({1, 2}, {5.0, -5.0});
  Tensor p = label_probs(cls, pooled);
  EXPECT_DOUBLE_EQ(p(0, 0), 0.5);
  EXPECT_NEAR(p(0, 1), 0.75, 1e-15);
  EXPECT_EQ(label_logits(cls, pooled)(0, 1), std::log(3.0));
}

TEST(BceLoss, Examples) {
  EXPECT_NEAR(bce_loss(Tensor::from({1, 2}, {0.5, 0.5}), std::vector<double>{1, 0}).item(), std::log(2.0), 1e-15);
  EXPECT_NEAR(bce_loss(Tensor::from({1, 2}, {0.9, 0.2}), std::vector<double>{1, 0}).item(),
              -(std::log(0.9) + std::log(0.8)) / 2, 1e-12);
  EXPECT_THROW(bce_loss(Tensor::from({1, 2}, {0.5, 0.5}), std::vector<double>{1}), DimensionError);
}

TEST(TotalLoss, ExampleAndLinearity) {
  const Tensor bce = Tensor::scalar(1.5);
  const Tensor nll = Tensor::scalar(1.0);
  EXPECT_DOUBLE_EQ(total_loss(bce, nll, LossConfig{0.5}).item(), 2.0);
  EXPECT_DOUBLE_EQ(total_loss(bce, nll, LossConfig{0.0}).item(), 1.5);
  for (double lambda : {0.1, 0.7, 2.0}) {
    EXPECT_NEAR(total_loss(bce, nll, LossConfig{lambda}).item(), 1.5 + lambda, 1e-15);
  }
  EXPECT_THROW(LossConfig{-0.1}.validate(), ConfigError);
}

TEST(TotalLoss, GradientSplitsByLambda) {
  Tensor a = Tensor::scalar(0.8, true);
  Tensor b = Tensor::scalar(2.0, true);
  backward(total_loss(a, b, LossConfig{0.25}));
  EXPECT_DOUBLE_EQ(a.grad()[0], 1.0);
  EXPECT_DOUBLE_EQ(b.grad()[0], 0.25);
}
