// SPDX-License-Identifier: Apache-2.0
//
// Optimization: Noam learning-rate schedule driving an Adam update, the
// mini-batch trainer, and the three training regimes (LM pretraining,
// classifier training with or without the auxiliary LM loss).

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "seqcoder/data.hpp"
#include "seqcoder/metrics.hpp"
#include "seqcoder/model.hpp"
#include "seqcoder/tokenizer.hpp"

namespace seqcoder {

struct NoamSchedule {
  std::size_t d_model = 768;
  std::size_t warmup_steps = 8000;
  double scale = 1.0;

  /// scale · d^{-1/2} · min(step^{-1/2}, step · warmup^{-3/2}); step ≥ 1.
  double lr(std::size_t step) const;
  void validate() const;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  double clip_norm = 1.0;  // global gradient-norm clip; 0 disables
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// Bias-corrected Adam update of every parameter from its accumulated
/// gradient. Clips to `config.clip_norm` first and returns the pre-clip norm.
/// A non-finite gradient raises NumericError naming the parameter.
double adam_step(ParameterStore& params, AdamState& state, double lr, const AdamConfig& config);

enum class Regime { kBase, kPretrain, kAuxiliary, kAuxiliaryPretrain };

std::string to_string(Regime regime);
Regime regime_from_string(const std::string& name);
bool uses_pretraining(Regime regime);
bool uses_auxiliary(Regime regime);

struct TrainConfig {
  std::size_t epochs = 10;
  double dropout = 0.1;
  std::size_t batch_size = 5;
  Regime regime = Regime::kBase;
  double lambda = 0.5;
  std::uint64_t seed = 0;
  std::string precision = "f64";
  double clip_norm = 1.0;
  std::size_t warmup_steps = 8000;
  double lr_scale = 1.0;
  double threshold = 0.5;

  /// Batch 10 for the LSTM, 5 for the Transformer; 10 epochs, 8000 warmup.
  static TrainConfig paper(EncoderKind encoder);
  /// Short-warmup settings for the small desk models.
  static TrainConfig desk(EncoderKind encoder);

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig defaults);
};

/// A framed token sequence with its multi-hot label vector (empty for LM data).
struct Example {
  std::string id;
  std::vector<int> ids;
  std::vector<double> targets;
};

std::vector<Example> make_examples(const Dataset& data, const BpeModel& tokenizer,
                                   const Preprocessor& preprocessor,
                                   const std::vector<std::string>& label_map);

enum class Objective { kLanguageModel, kClassifier };

/// One JSON object per optimizer step: {step, epoch, lr, loss} plus split
/// metrics at epoch ends.
using LogSink = std::function<void(const nlohmann::json&)>;

/// Mini-batch loop over a fixed example list. Batch order is a pure function
/// of (seed, epoch): each epoch draws a fresh permutation from a seed derived
/// from both.
class Trainer {
 public:
  Trainer(SequenceModel& model, TrainConfig config, Objective objective,
          std::vector<Example> examples);

  /// One optimizer step over the next batch; returns the batch mean loss.
  double step();
  /// Steps until the current epoch ends; returns the mean batch loss.
  double run_epoch();

  /// Loss of one example on the current tape (dropout per `ctx`).
  Tensor example_loss(const Example& ex, const ForwardContext& ctx) const;

  std::size_t steps_per_epoch() const;
  std::uint64_t global_step() const { return global_step_; }
  std::size_t epoch() const { return epoch_; }
  std::size_t batch_in_epoch() const { return batch_; }
  const TrainConfig& config() const { return config_; }
  Objective objective() const { return objective_; }
  double current_lr() const;

  const AdamState& optimizer_state() const { return adam_; }
  const Rng& rng() const { return rng_; }

  /// Reinstates optimizer, position and rng (used on resume).
  void restore_state(AdamState adam, std::uint64_t global_step, std::size_t epoch,
                     std::size_t batch, const Rng& rng);

  void set_log(LogSink sink) { log_ = std::move(sink); }

 private:
  std::vector<std::size_t> epoch_order(std::size_t epoch) const;

  SequenceModel& model_;
  TrainConfig config_;
  Objective objective_;
  std::vector<Example> examples_;
  NoamSchedule schedule_;
  AdamConfig adam_config_;
  AdamState adam_;
  Rng rng_;
  std::uint64_t global_step_ = 0;
  std::size_t epoch_ = 0;
  std::size_t batch_ = 0;
  std::vector<std::size_t> order_;
  LogSink log_;
};

/// Token-weighted mean next-token NLL over a corpus (dropout off).
double corpus_nll(const SequenceModel& model, const std::vector<Example>& examples,
                  std::size_t threads = 1);

/// Label probabilities per example (dropout off).
std::vector<std::vector<double>> predict_probs(const SequenceModel& model,
                                               const std::vector<Example>& examples,
                                               std::size_t threads = 1);

struct Evaluation {
  MetricsReport report;
  std::vector<LabelSet> predictions;
  std::vector<LabelSet> golds;
};

Evaluation evaluate(const SequenceModel& model, const std::vector<Example>& examples,
                    double threshold = 0.5, std::size_t threads = 1);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double valid_score = 0.0;  // held-out perplexity (LM) or micro-F1 (classifier)
};

struct TrainSummary {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_score = 0.0;
  std::uint64_t steps = 0;
};

/// LM pretraining. Held-out perplexity is logged per epoch; on a non-finite
/// loss the parameters of the last completed epoch are restored and the
/// NumericError propagates.
TrainSummary pretrain_lm(SequenceModel& model, const std::vector<Example>& train,
                         const std::vector<Example>& valid, const TrainConfig& config,
                         LogSink log = {});

/// Classifier training under config.regime (pretrained weights, if any, must
/// already be loaded). The parameters of the epoch with the best validation
/// micro-F1 are kept; with no validation data the final epoch is kept.
TrainSummary train_classifier(SequenceModel& model, const std::vector<Example>& train,
                              const std::vector<Example>& valid, const TrainConfig& config,
                              LogSink log = {});

}  // namespace seqcoder
