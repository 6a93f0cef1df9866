// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstdlib>

#include "seqcoder/errors.hpp"
#include "seqcoder/model.hpp"

using namespace seqcoder;

TEST(ParameterCount, MatchesInstantiatedStore) {
  for (EncoderKind kind : {EncoderKind::kLstm, EncoderKind::kTransformer}) {
    for (bool tied : {true, false}) {
      for (bool with_labels : {false, true}) {
        ModelConfig c;
        c.encoder = kind;
        c.vocab_size = 37;
        c.d_model = 12;
        c.n_heads = 3;
        c.d_ff = 20;
        c.n_layers = 2;
        c.tie_lm_head = tied;
        if (with_labels) c.labels = {"a", "b", "c", "d", "e"};
        SequenceModel m(c, 1);
        EXPECT_EQ(parameter_count(c), m.params().scalar_count())
            << to_string(kind) << " tied=" << tied << " labels=" << with_labels;
      }
    }
  }
}

TEST(ParameterCount, MatchedLstmWidthWithinFivePercent) {
  for (std::size_t V : {500u, 2000u, 8000u}) {
    const ModelConfig tf = ModelConfig::desk_transformer(V);
    const std::size_t target = parameter_count(tf);
    ModelConfig lstm = ModelConfig::desk_lstm(V);
    lstm.d_model = matched_lstm_width(tf, target);
    const double ratio = static_cast<double>(parameter_count(lstm)) / static_cast<double>(target);
    EXPECT_NEAR(ratio, 1.0, 0.05) << "V=" << V << " d=" << lstm.d_model;
  }
}

TEST(ModelConfig, PresetsAndValidation) {
  EXPECT_EQ(ModelConfig::desk_transformer(100).d_model, 64u);
  EXPECT_EQ(ModelConfig::paper_transformer(100).n_layers, 6u);
  ModelConfig bad = ModelConfig::desk_transformer(100);
  bad.n_heads = 5;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = ModelConfig::desk_transformer(100);
  bad.vocab_size = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_THROW(encoder_kind_from_string("gru"), ConfigError);
}

TEST(ModelConfig, JsonRoundtrip) {
  ModelConfig c = ModelConfig::desk_lstm(321);
  c.labels = {"otitis", "asthma"};
  c.literal_equations = true;
  c.tie_lm_head = false;
  const ModelConfig back = ModelConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.labels, c.labels);
  EXPECT_EQ(back.encoder, EncoderKind::kLstm);
}

TEST(SequenceModel, SeededInitialisationIsDeterministic) {
  const ModelConfig c = ModelConfig::desk_transformer(50);
  SequenceModel a(c, 9), b(c, 9), other(c, 10);
  EXPECT_EQ(a.params().snapshot(), b.params().snapshot());
  EXPECT_NE(a.params().snapshot(), other.params().snapshot());
  for (const auto& e : a.params().entries()) {
    if (e.name.find("gain") != std::string::npos) {
      for (double v : e.tensor.values()) EXPECT_EQ(v, 1.0);
    }
    if (e.name.find(".b") != std::string::npos && e.name.find("bias") == std::string::npos) {
      for (double v : e.tensor.values()) EXPECT_EQ(v, 0.0) << e.name;
    }
  }
}

TEST(SequenceModel, TiedHeadSharesEmbedding) {
  SequenceModel m(ModelConfig::desk_transformer(30), 2);
  EXPECT_EQ(m.lm_head().projection.values().data(), m.params().get("embedding").values().data());
}

TEST(SequenceModel, TransferSkipsClassifierAndMismatchedShapes) {
  ModelConfig lm = ModelConfig::desk_transformer(40);
  ModelConfig cls = lm;
  cls.labels = {"a", "b"};
  SequenceModel src(lm, 3);
  SequenceModel dst(cls, 4);
  const auto cls_before = dst.params().get("cls.label.W").values();
  const std::vector<double> cls_copy(cls_before.begin(), cls_before.end());
  const std::size_t copied = dst.transfer_from(src);
  EXPECT_EQ(copied, src.params().entries().size());
  for (const auto& e : src.params().entries()) {
    const auto got = dst.params().get(e.name).values();
    EXPECT_TRUE(std::equal(got.begin(), got.end(), e.tensor.values().begin())) << e.name;
  }
  const auto cls_after = dst.params().get("cls.label.W").values();
  EXPECT_TRUE(std::equal(cls_after.begin(), cls_after.end(), cls_copy.begin()));

  ModelConfig wider = lm;
  wider.vocab_size = 41;
  SequenceModel odd(wider, 5);
  EXPECT_LT(odd.transfer_from(src), src.params().entries().size());
}

TEST(ParameterStore, SnapshotRestoreAndErrors) {
  SequenceModel m(ModelConfig::desk_lstm(20), 6);
  const auto snap = m.params().snapshot();
  for (double& v : m.params().entries()[0].tensor.mutable_values()) v = 42.0;
  m.params().restore(snap);
  EXPECT_EQ(m.params().snapshot(), snap);
  EXPECT_THROW(m.params().get("nope"), ContractError);
  EXPECT_THROW(m.params().restore({}), ContractError);
  EXPECT_THROW(m.params().add("embedding", {1, 1}), ContractError);
}
