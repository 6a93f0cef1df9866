// SPDX-License-Identifier: Apache-2.0
//
// Synthetic two-hospital clinical-note benchmark.
//
// Every note names a patient, carries a Zipf-weighted label subset, states
// each label through a finding sentence (optional context words followed by
// the label's trigger term), is padded with distractor sentences and closes
// with an assessment line repeating the triggers and the patient name.
//
// Hospital B applies a style shift on the same code path: triggers are
// replaced by abbreviations, notes are shorter and distractor words are
// swapped for a hospital-specific vocabulary.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "seqcoder/data.hpp"

namespace seqcoder {

struct SynthConfig {
  std::uint64_t seed = 0;
  std::size_t n_labels = 8;
  std::size_t a_notes = 600;
  std::size_t b_notes = 400;
  std::size_t b_unlabeled = 2000;
  double label_zipf = 1.0;

  std::size_t n_distractors = 300;
  double distractor_zipf = 1.0;
  std::size_t n_names = 200;
  std::size_t n_context_per_label = 4;
  double context_rate = 0.5;   // chance a context word joins its label's finding
  double context_noise = 0.03; // chance it appears in a note without the label
  std::size_t filler_min = 24;  // distractor sentences per note before scaling
  std::size_t filler_max = 36;
  std::size_t dictionary_general = 40;  // distractors also listed in the dictionary
  std::size_t dictionary_skip = 20;     // most frequent distractor ranks left out

  /// Abbreviation rate shared by both hospitals.
  double base_abbrev_rate = 0.03;

  // Hospital B style shift; all zero/one leaves B distributed exactly as A.
  double abbrev_rate = 0.5;   // extra abbreviation probability on top of the base rate
  double length_scale = 0.6;  // multiplies the distractor sentence count
  double swap_rate = 0.5;     // distractor words replaced by B-specific words

  /// Optional explicit trigger terms per label (single words). Generated when empty.
  std::vector<std::vector<std::string>> triggers;

  /// ConfigError on out-of-range knobs or overlapping trigger sets.
  void validate() const;
  nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);
};

/// Hospital writing style.
struct NoteStyle {
  double abbrev_rate = 0.0;
  double length_scale = 1.0;
  double swap_rate = 0.0;

  static NoteStyle hospital_a(const SynthConfig& c);
  static NoteStyle hospital_b(const SynthConfig& c);
};

/// All word lists of a configuration.
struct SynthVocabulary {
  std::vector<std::string> labels;                 // alphabetical
  std::vector<std::vector<std::string>> triggers;  // per label
  std::vector<std::vector<std::string>> abbreviations;  // parallel to triggers
  std::vector<std::vector<std::string>> context;   // per label
  std::vector<std::string> names;
  std::vector<std::string> distractors_a;          // by Zipf rank
  std::vector<std::string> distractors_b;
  std::set<std::string> dictionary;
};

SynthVocabulary synth_vocabulary(const SynthConfig& config);

/// `count` notes in `style` from an independent stream seeded by `stream_seed`.
/// Ids are `<prefix>-NNNNN`.
Dataset generate_notes(const SynthConfig& config, const SynthVocabulary& vocab,
                       const NoteStyle& style, std::size_t count, std::uint64_t stream_seed,
                       const std::string& prefix, bool with_labels = true);

struct SynthCorpora {
  Dataset hospital_a;
  Dataset hospital_b;
  Dataset hospital_b_unlabeled;
  SynthVocabulary vocabulary;
};

SynthCorpora synth_generate(const SynthConfig& config);

/// hospital_a.jsonl, hospital_b.jsonl, hospital_b_unlabeled.jsonl,
/// dictionary.txt and synth_config.json.
void write_corpora(const SynthCorpora& corpora, const SynthConfig& config,
                   const std::filesystem::path& dir);

}  // namespace seqcoder
