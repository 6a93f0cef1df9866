// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

#include "fixtures.hpp"
#include "seqcoder/checkpoint.hpp"
#include "seqcoder/errors.hpp"

using namespace seqcoder;
using namespace seqcoder::testing;

namespace {

std::string error_of(const std::string& bytes) {
  try {
    decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Checkpoint, BitExactRoundtripAndIdenticalForward) {
  for (EncoderKind kind : {EncoderKind::kLstm, EncoderKind::kTransformer}) {
    SequenceModel m(small_config(kind, 20, label_names(3)), 1);
    TrainConfig cfg;
    cfg.seed = 77;
    const std::string bytes = encode_checkpoint(make_checkpoint(m, cfg, 0xABCDEF));
    const Checkpoint back = decode_checkpoint(bytes);
    EXPECT_EQ(encode_checkpoint(back), bytes);
    EXPECT_EQ(back.tokenizer_hash, 0xABCDEFu);
    EXPECT_FALSE(back.trainer.has_value());
    EXPECT_EQ(back.train.to_json(), cfg.to_json());

    const SequenceModel loaded = model_from_checkpoint(back);
    EXPECT_EQ(loaded.params().snapshot(), m.params().snapshot());
    const std::vector<int> ids = {2, 7, 9, 11, 3};
    NoGradGuard g;
    Tensor a = label_logits(m.classifier(), attention_pool(m.classifier(), m.encode(ids)));
    Tensor b = label_logits(loaded.classifier(), attention_pool(loaded.classifier(), loaded.encode(ids)));
    EXPECT_TRUE(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
  }
}

TEST(Checkpoint, FileRoundtripWithTrainerState) {
  SequenceModel m(small_config(EncoderKind::kLstm, 12), 2);
  TrainConfig cfg;
  cfg.batch_size = 2;
  Trainer t(m, cfg, Objective::kLanguageModel, random_examples(3, 6, 12, 3, 5));
  t.step();
  t.step();
  const auto path = std::filesystem::temp_directory_path() / "seqcoder_ckpt_test.ckpt";
  save_checkpoint(make_checkpoint(m, cfg, 5, &t), path);
  const Checkpoint back = load_checkpoint(path);
  std::filesystem::remove(path);
  ASSERT_TRUE(back.trainer.has_value());
  EXPECT_EQ(back.trainer->global_step, 2u);
  EXPECT_EQ(back.trainer->batch, 2u);
  EXPECT_EQ(back.trainer->adam.m, t.optimizer_state().m);
  EXPECT_EQ(back.trainer->adam.v, t.optimizer_state().v);
  EXPECT_EQ(back.rng_state, serialize_rng(t.rng()));
}

TEST(Checkpoint, UnknownVersionIsNamed) {
  SequenceModel m(small_config(EncoderKind::kLstm, 12), 4);
  std::string bytes = encode_checkpoint(make_checkpoint(m, TrainConfig{}, 0));
  const std::uint32_t v = 7;
  std::memcpy(bytes.data() + 4, &v, sizeof v);
  const std::string msg = error_of(bytes);
  EXPECT_NE(msg.find("unsupported checkpoint version 7 (expected 1)"), std::string::npos) << msg;
  EXPECT_NE(error_of("XXXX" + bytes.substr(4)), "");
}

TEST(Checkpoint, TruncationNamesTheSection) {
  SequenceModel m(small_config(EncoderKind::kTransformer, 12), 5);
  const std::string bytes = encode_checkpoint(make_checkpoint(m, TrainConfig{}, 0));
  const std::size_t parm = bytes.find("PARM");
  ASSERT_NE(parm, std::string::npos);
  EXPECT_NE(error_of(bytes.substr(0, parm + 40)).find("PARM"), std::string::npos);
  EXPECT_NE(error_of(bytes.substr(0, 20)).find("HEAD"), std::string::npos);
  EXPECT_NE(error_of(bytes.substr(0, bytes.size() - 2)), "");
  for (std::size_t cut = 0; cut < bytes.size(); cut += 97) EXPECT_NE(error_of(bytes.substr(0, cut)), "") << cut;
}

TEST(Checkpoint, TokenizerHashMismatch) {
  SequenceModel m(small_config(EncoderKind::kLstm, 12), 6);
  const Checkpoint c = make_checkpoint(m, TrainConfig{}, 111);
  EXPECT_NO_THROW(check_tokenizer(c, 111));
  EXPECT_THROW(check_tokenizer(c, 112), CompatibilityError);
}

TEST(Checkpoint, ParameterTableMismatch) {
  SequenceModel m(small_config(EncoderKind::kLstm, 12), 7);
  Checkpoint c = make_checkpoint(m, TrainConfig{}, 0);
  SequenceModel other(small_config(EncoderKind::kLstm, 13), 7);
  EXPECT_THROW(load_parameters(other, c), FormatError);
  SequenceModel tf(small_config(EncoderKind::kTransformer, 12), 7);
  EXPECT_THROW(load_parameters(tf, c), FormatError);
  EXPECT_THROW(restore_trainer(*std::make_unique<Trainer>(m, TrainConfig{}, Objective::kLanguageModel,
                                                          random_examples(1, 3, 12, 2, 3)),
                               c),
               FormatError);
}
