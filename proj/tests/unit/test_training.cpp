// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "fixtures.hpp"
#include "seqcoder/checkpoint.hpp"
#include "seqcoder/errors.hpp"
#include "seqcoder/training.hpp"

using namespace seqcoder;
using namespace seqcoder::testing;

TEST(Noam, PeakAndShape) {
  NoamSchedule s;  // d=768, warmup 8000
  EXPECT_NEAR(s.lr(8000), 4.034e-4, 5e-7);
  EXPECT_NEAR(s.lr(1), s.lr(8000) / 8000.0, 1e-15);
  for (std::size_t t = 1; t < 8000; t += 97) EXPECT_LT(s.lr(t), s.lr(t + 1));
  for (std::size_t t = 8000; t < 40000; t += 997) EXPECT_GT(s.lr(t), s.lr(t + 1));
  EXPECT_NEAR(s.lr(32000), s.lr(8000) / 2.0, 1e-15);
  EXPECT_THROW(s.lr(0), ContractError);
  NoamSchedule doubled;
  doubled.scale = 2.0;
  EXPECT_DOUBLE_EQ(doubled.lr(123), 2.0 * s.lr(123));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  SequenceModel m(small_config(EncoderKind::kLstm, 8), 1);
  auto& emb = m.params().get("embedding");
  const std::vector<double> before(emb.values().begin(), emb.values().end());
  m.params().zero_grad();
  emb.mutable_grad()[0] = 1e-3;
  emb.mutable_grad()[1] = -2e-3;
  AdamState state;
  adam_step(m.params(), state, 0.01, AdamConfig{});
  EXPECT_NEAR(emb.values()[0] - before[0], -0.01, 1e-8);
  EXPECT_NEAR(emb.values()[1] - before[1], 0.01, 1e-8);
  EXPECT_EQ(emb.values()[2], before[2]);
  EXPECT_EQ(state.step, 1u);
}

TEST(Adam, ClipsByGlobalNorm) {
  SequenceModel m(small_config(EncoderKind::kLstm, 8), 2);
  m.params().zero_grad();
  m.params().get("lm.bias").mutable_grad()[0] = 3.0;
  m.params().get("lstm.b_f").mutable_grad()[0] = 4.0;
  AdamState state;
  EXPECT_DOUBLE_EQ(adam_step(m.params(), state, 1e-3, AdamConfig{}), 5.0);
  bool found = false;
  for (std::size_t i = 0; i < m.params().entries().size(); ++i) {
    if (m.params().entries()[i].name == "lm.bias") {
      EXPECT_NEAR(state.m[i][0], 0.1 * 0.6, 1e-15);
      found = true;
    }
  }
  EXPECT_TRUE(found);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  SequenceModel m(small_config(EncoderKind::kLstm, 8), 3);
  m.params().zero_grad();
  m.params().get("lstm.V_o").mutable_grad()[3] = std::numeric_limits<double>::quiet_NaN();
  AdamState state;
  try {
    adam_step(m.params(), state, 1e-3, AdamConfig{});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("lstm.V_o"), std::string::npos) << e.what();
  }
}

TEST(TrainConfig, ValidationAndJson) {
  TrainConfig c = TrainConfig::paper(EncoderKind::kLstm);
  EXPECT_EQ(c.batch_size, 10u);
  EXPECT_EQ(TrainConfig::paper(EncoderKind::kTransformer).batch_size, 5u);
  EXPECT_EQ(c.warmup_steps, 8000u);
  c.precision = "f32";
  EXPECT_THROW(c.validate(), ConfigError);
  c.precision = "f64";
  c.lambda = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  TrainConfig d = TrainConfig::desk(EncoderKind::kTransformer);
  d.regime = Regime::kAuxiliaryPretrain;
  d.lambda = 0.25;
  EXPECT_EQ(TrainConfig::from_json(d.to_json()).to_json(), d.to_json());
  EXPECT_THROW(regime_from_string("mystery"), ConfigError);
  EXPECT_TRUE(uses_pretraining(regime_from_string("auxiliary+pretrain")));
  EXPECT_TRUE(uses_auxiliary(Regime::kAuxiliary));
  EXPECT_FALSE(uses_auxiliary(Regime::kPretrain));
}

TEST(Trainer, RejectsMismatchedTargets) {
  SequenceModel m(small_config(EncoderKind::kLstm, 12, label_names(2)), 4);
  auto data = random_examples(5, 4, 12, 3, 6, 3);
  EXPECT_THROW(Trainer(m, TrainConfig{}, Objective::kClassifier, data), DataError);
  EXPECT_THROW(Trainer(m, TrainConfig{}, Objective::kClassifier, {}), DataError);
}

TEST(Trainer, ZeroLambdaAuxiliaryMatchesBase) {
  for (EncoderKind kind : {EncoderKind::kLstm, EncoderKind::kTransformer}) {
    const auto data = random_examples(6, 12, 14, 4, 9, 2);
    TrainConfig cfg = TrainConfig::desk(kind);
    cfg.batch_size = 4;
    cfg.warmup_steps = 10;
    SequenceModel base(small_config(kind, 14, label_names(2)), 7);
    SequenceModel aux(small_config(kind, 14, label_names(2)), 7);
    TrainConfig aux_cfg = cfg;
    aux_cfg.regime = Regime::kAuxiliary;
    aux_cfg.lambda = 0.0;
    Trainer a(base, cfg, Objective::kClassifier, data);
    Trainer b(aux, aux_cfg, Objective::kClassifier, data);
    for (int s = 0; s < 9; ++s) EXPECT_NEAR(a.step(), b.step(), 1e-12) << to_string(kind) << " step " << s;
    EXPECT_EQ(base.params().snapshot(), aux.params().snapshot());
  }
}

TEST(Trainer, LossDecreasesOnFixedBatchWithoutDropout) {
  SequenceModel m(small_config(EncoderKind::kTransformer, 12), 8);
  TrainConfig cfg;
  cfg.dropout = 0.0;
  cfg.batch_size = 4;
  cfg.warmup_steps = 20;
  cfg.lr_scale = 0.5;
  Trainer t(m, cfg, Objective::kLanguageModel, random_examples(9, 4, 12, 5, 8));
  const double first = t.step();
  double last = first;
  for (int s = 0; s < 40; ++s) last = t.step();
  EXPECT_LT(last, 0.8 * first);
}

TEST(Trainer, ShufflesPerEpochAndLogsEverySteps) {
  SequenceModel m(small_config(EncoderKind::kLstm, 12), 10);
  TrainConfig cfg;
  cfg.batch_size = 3;
  Trainer t(m, cfg, Objective::kLanguageModel, random_examples(11, 10, 12, 3, 5));
  EXPECT_EQ(t.steps_per_epoch(), 4u);
  std::vector<nlohmann::json> lines;
  t.set_log([&](const nlohmann::json& j) { lines.push_back(j); });
  t.run_epoch();
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines.back()["step"], 4);
  EXPECT_TRUE(lines.front().contains("lr"));
  EXPECT_EQ(t.epoch(), 1u);
  EXPECT_EQ(t.batch_in_epoch(), 0u);
}

TEST(Trainer, SeededRunsAreBitIdentical) {
  auto run = [] {
    SequenceModel m(small_config(EncoderKind::kTransformer, 14, label_names(2)), 12);
    TrainConfig cfg;
    cfg.batch_size = 3;
    cfg.seed = 99;
    cfg.regime = Regime::kAuxiliary;
    Trainer t(m, cfg, Objective::kClassifier, random_examples(13, 9, 14, 3, 7, 2));
    t.run_epoch();
    t.run_epoch();
    return m.params().snapshot();
  };
  EXPECT_EQ(run(), run());
}

TEST(Trainer, ResumeFromCheckpointMatchesUninterruptedRun) {
  for (EncoderKind kind : {EncoderKind::kLstm, EncoderKind::kTransformer}) {
    const auto data = random_examples(14, 11, 14, 3, 7, 2);
    const ModelConfig mc = small_config(kind, 14, label_names(2));
    TrainConfig cfg;
    cfg.batch_size = 3;
    cfg.seed = 5;
    cfg.regime = Regime::kAuxiliary;

    SequenceModel straight(mc, 15);
    Trainer full(straight, cfg, Objective::kClassifier, data);
    std::vector<double> full_losses;
    for (int s = 0; s < 10; ++s) full_losses.push_back(full.step());

    SequenceModel first(mc, 15);
    Trainer part(first, cfg, Objective::kClassifier, data);
    for (int s = 0; s < 6; ++s) part.step();
    const Checkpoint ckpt = decode_checkpoint(encode_checkpoint(make_checkpoint(first, cfg, 0, &part)));
    SequenceModel resumed = model_from_checkpoint(ckpt);
    Trainer rest(resumed, cfg, Objective::kClassifier, data);
    restore_trainer(rest, ckpt);
    EXPECT_EQ(rest.global_step(), 6u);
    for (int s = 6; s < 10; ++s) EXPECT_EQ(rest.step(), full_losses[s]) << to_string(kind) << " step " << s;
    EXPECT_EQ(resumed.params().snapshot(), straight.params().snapshot());
  }
}

TEST(TrainClassifier, KeepsBestValidationEpoch) {
  const auto data = random_examples(16, 30, 12, 3, 8, 2);
  const std::vector<Example> train(data.begin(), data.begin() + 24);
  const std::vector<Example> valid(data.begin() + 24, data.end());
  SequenceModel m(small_config(EncoderKind::kLstm, 12, label_names(2)), 17);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 6;
  cfg.warmup_steps = 8;
  const TrainSummary s = train_classifier(m, train, valid, cfg);
  ASSERT_EQ(s.history.size(), 4u);
  double best = -1;
  for (const auto& r : s.history) best = std::max(best, r.valid_score);
  EXPECT_EQ(s.best_score, best);
  EXPECT_EQ(s.history[s.best_epoch].valid_score, best);
  EXPECT_DOUBLE_EQ(evaluate(m, valid, cfg.threshold).report.micro_f1, best);
}

TEST(PretrainLm, ReportsHeldOutPerplexity) {
  const auto data = random_examples(18, 20, 10, 4, 8);
  const std::vector<Example> train(data.begin(), data.begin() + 16);
  const std::vector<Example> valid(data.begin() + 16, data.end());
  SequenceModel m(small_config(EncoderKind::kTransformer, 10), 19);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.warmup_steps = 4;
  const TrainSummary s = pretrain_lm(m, train, valid, cfg);
  ASSERT_EQ(s.history.size(), 2u);
  EXPECT_NEAR(s.history.back().valid_score, perplexity(corpus_nll(m, valid)), 1e-9);
  EXPECT_EQ(s.steps, 8u);
}

TEST(CorpusNll, TokenWeightedAndThreadInvariant) {
  const auto data = random_examples(20, 7, 10, 2, 12);
  SequenceModel m(small_config(EncoderKind::kLstm, 10), 21);
  double weighted = 0;
  std::size_t tokens = 0;
  for (const auto& ex : data) {
    NoGradGuard g;
    const std::size_t n = lm_target_count(ex.ids.size());
    weighted += lm_loss(m.lm_head(), m.encode(ex.ids), ex.ids).item() * static_cast<double>(n);
    tokens += n;
  }
  EXPECT_NEAR(corpus_nll(m, data), weighted / static_cast<double>(tokens), 1e-12);
  EXPECT_EQ(corpus_nll(m, data, 1), corpus_nll(m, data, 3));
}
