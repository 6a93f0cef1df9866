// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint container. Layout (little-endian):
//
//   "SQC1" u32:version
//   "HEAD" str:json{model,train} u64:tokenizer_hash
//   "PARM" u64:count { str:name u8:dtype u32:ndim u64[ndim]:dims f64[]:data }
//   "OPTS" u8:present [u64:adam_step u64:global_step u64:epoch u64:batch
//                      u64:count { f64[]:m f64[]:v }]
//   "RNGS" str:engine_state
//   "END!"
//
// Strings are u64 length followed by bytes.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "seqcoder/model.hpp"
#include "seqcoder/training.hpp"

namespace seqcoder {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct ParameterRecord {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct TrainerSnapshot {
  AdamState adam;
  std::uint64_t global_step = 0;
  std::uint64_t epoch = 0;
  std::uint64_t batch = 0;
};

struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  std::uint64_t tokenizer_hash = 0;
  std::vector<ParameterRecord> params;
  std::optional<TrainerSnapshot> trainer;
  std::string rng_state;  // empty when no trainer was attached
};

/// Captures model parameters and, when `trainer` is given, its optimizer,
/// position and dropout rng.
Checkpoint make_checkpoint(const SequenceModel& model, const TrainConfig& train,
                           std::uint64_t tokenizer_hash, const Trainer* trainer = nullptr);

std::string encode_checkpoint(const Checkpoint& ckpt);
/// FormatError on a bad magic, unknown version, truncated or malformed section.
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Raises CompatibilityError when the hashes differ.
void check_tokenizer(const Checkpoint& ckpt, std::uint64_t tokenizer_hash);

/// Copies parameters into `model`; the name and shape tables must match
/// exactly (FormatError otherwise).
void load_parameters(SequenceModel& model, const Checkpoint& ckpt);

/// A fresh model built from the stored config with the stored parameters.
SequenceModel model_from_checkpoint(const Checkpoint& ckpt);

/// Reinstates optimizer state, position and dropout rng. FormatError when the
/// checkpoint holds no trainer state.
void restore_trainer(Trainer& trainer, const Checkpoint& ckpt);

}  // namespace seqcoder
