// SPDX-License-Identifier: Apache-2.0
#include "seqcoder/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "seqcoder/errors.hpp"
#include "seqcoder/ops.hpp"

namespace seqcoder {

double NoamSchedule::lr(std::size_t step) const {
  if (step == 0) throw ContractError("Noam schedule is defined for step >= 1");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup_steps);
  return scale / std::sqrt(static_cast<double>(d_model)) *
         std::min(1.0 / std::sqrt(s), s * std::pow(w, -1.5));
}

void NoamSchedule::validate() const {
  if (warmup_steps < 1) throw ConfigError("warmup_steps must be at least 1");
  if (d_model < 1) throw ConfigError("Noam d_model must be positive");
}

double adam_step(ParameterStore& params, AdamState& state, double lr, const AdamConfig& config) {
  auto& entries = params.entries();
  if (state.m.empty()) {
    for (const auto& e : entries) {
      state.m.emplace_back(e.tensor.size(), 0.0);
      state.v.emplace_back(e.tensor.size(), 0.0);
    }
  }
  if (state.m.size() != entries.size()) throw ContractError("optimizer state does not match parameters");

  double sq = 0.0;
  for (const auto& e : entries) {
    for (double g : e.tensor.grad_view()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter " + e.name);
      sq += g * g;
    }
  }
  const double norm = std::sqrt(sq);
  const double clip = (config.clip_norm > 0 && norm > config.clip_norm) ? config.clip_norm / norm : 1.0;

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t p = 0; p < entries.size(); ++p) {
    auto values = entries[p].tensor.mutable_values();
    auto grad = entries[p].tensor.grad_view();
    auto& m = state.m[p];
    auto& v = state.v[p];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad.empty() ? 0.0 : grad[i] * clip;
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
      values[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + config.eps);
    }
  }
  return norm;
}

std::string to_string(Regime regime) {
  switch (regime) {
    case Regime::kBase: return "base";
    case Regime::kPretrain: return "pretrain";
    case Regime::kAuxiliary: return "auxiliary";
    case Regime::kAuxiliaryPretrain: return "auxiliary+pretrain";
  }
  return "base";
}

Regime regime_from_string(const std::string& name) {
  if (name == "base") return Regime::kBase;
  if (name == "pretrain") return Regime::kPretrain;
  if (name == "auxiliary") return Regime::kAuxiliary;
  if (name == "auxiliary+pretrain") return Regime::kAuxiliaryPretrain;
  throw ConfigError("unknown regime `" + name + "` (base|pretrain|auxiliary|auxiliary+pretrain)");
}

bool uses_pretraining(Regime r) { return r == Regime::kPretrain || r == Regime::kAuxiliaryPretrain; }
bool uses_auxiliary(Regime r) { return r == Regime::kAuxiliary || r == Regime::kAuxiliaryPretrain; }

TrainConfig TrainConfig::paper(EncoderKind encoder) {
  TrainConfig c;
  c.batch_size = encoder == EncoderKind::kLstm ? 10 : 5;
  return c;
}

TrainConfig TrainConfig::desk(EncoderKind encoder) {
  TrainConfig c = paper(encoder);
  c.warmup_steps = 400;
  return c;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(dropout >= 0 && dropout < 1)) throw ConfigError("dropout must lie in [0, 1)");
  if (!std::isfinite(lambda) || lambda < 0) throw ConfigError("lambda must be finite and >= 0");
  if (warmup_steps < 1) throw ConfigError("warmup_steps must be at least 1");
  if (precision != "f64") {
    throw ConfigError("precision `" + precision + "` is not supported (only f64 is implemented)");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},       {"dropout", dropout},       {"batch_size", batch_size},
          {"regime", to_string(regime)}, {"lambda", lambda},   {"seed", seed},
          {"precision", precision}, {"clip_norm", clip_norm},   {"warmup_steps", warmup_steps},
          {"lr_scale", lr_scale},   {"threshold", threshold}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }

TrainConfig TrainConfig::from_json(const nlohmann::json& j, TrainConfig c) {
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.dropout = j.value("dropout", c.dropout);
    c.batch_size = j.value("batch_size", c.batch_size);
    if (j.contains("regime")) c.regime = regime_from_string(j.at("regime").get<std::string>());
    c.lambda = j.value("lambda", c.lambda);
    c.seed = j.value("seed", c.seed);
    c.precision = j.value("precision", c.precision);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.lr_scale = j.value("lr_scale", c.lr_scale);
    c.threshold = j.value("threshold", c.threshold);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  return c;
}

std::vector<Example> make_examples(const Dataset& data, const BpeModel& tokenizer,
                                   const Preprocessor& preprocessor,
                                   const std::vector<std::string>& label_map) {
  std::vector<Example> out;
  out.reserve(data.size());
  for (const auto& r : data.records) {
    Example ex;
    ex.id = r.id;
    ex.ids = frame(tokenizer.encode(preprocess(r.text, preprocessor)), preprocessor);
    if (!label_map.empty()) {
      ex.targets.assign(label_map.size(), 0.0);
      for (int j : label_ids(r, label_map)) ex.targets[static_cast<std::size_t>(j)] = 1.0;
    }
    out.push_back(std::move(ex));
  }
  return out;
}

Trainer::Trainer(SequenceModel& model, TrainConfig config, Objective objective,
                 std::vector<Example> examples)
    : model_(model),
      config_(std::move(config)),
      objective_(objective),
      examples_(std::move(examples)),
      rng_(derive_seed(config_.seed, 0xD209)) {
  config_.validate();
  if (examples_.empty()) throw DataError("training set is empty");
  if (objective_ == Objective::kClassifier) {
    if (!model_.has_classifier()) throw ContractError("classifier objective on a model without labels");
    for (const auto& ex : examples_) {
      if (ex.targets.size() != model_.config().labels.size()) {
        throw DataError("example \"" + ex.id + "\" has " + std::to_string(ex.targets.size()) +
                        " targets for " + std::to_string(model_.config().labels.size()) + " labels");
      }
    }
  }
  schedule_.d_model = model_.config().d_model;
  schedule_.warmup_steps = config_.warmup_steps;
  schedule_.scale = config_.lr_scale;
  schedule_.validate();
  adam_config_.clip_norm = config_.clip_norm;
  order_ = epoch_order(0);
}

std::vector<std::size_t> Trainer::epoch_order(std::size_t epoch) const {
  std::vector<std::size_t> order(examples_.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(config_.seed, 1000 + epoch));
  shuffle(order, rng);
  return order;
}

std::size_t Trainer::steps_per_epoch() const {
  return (examples_.size() + config_.batch_size - 1) / config_.batch_size;
}

double Trainer::current_lr() const { return schedule_.lr(global_step_ + 1); }

Tensor Trainer::example_loss(const Example& ex, const ForwardContext& ctx) const {
  Tensor hidden = model_.encode(ex.ids, nullptr, ctx);
  if (objective_ == Objective::kLanguageModel) return lm_loss(model_.lm_head(), hidden, ex.ids);
  const AttnPoolClassifier cls = model_.classifier();
  Tensor bce = bce_loss(label_probs(cls, attention_pool(cls, hidden)), ex.targets);
  if (!uses_auxiliary(config_.regime)) return bce;
  return total_loss(bce, lm_loss(model_.lm_head(), hidden, ex.ids), {config_.lambda});
}

double Trainer::step() {
  const std::size_t begin = batch_ * config_.batch_size;
  const std::size_t end = std::min(begin + config_.batch_size, examples_.size());
  const double inv = 1.0 / static_cast<double>(end - begin);
  ForwardContext ctx{true, config_.dropout, &rng_};

  model_.params().zero_grad();
  double loss_sum = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    Tensor loss = example_loss(examples_[order_[i]], ctx);
    loss_sum += loss.item();
    backward(scale(loss, inv));
  }
  const double lr = current_lr();
  adam_step(model_.params(), adam_, lr, adam_config_);
  ++global_step_;
  const double mean_loss = loss_sum * inv;
  if (log_) {
    log_({{"step", global_step_}, {"epoch", epoch_}, {"lr", lr}, {"loss", mean_loss}});
  }
  if (++batch_ == steps_per_epoch()) {
    batch_ = 0;
    ++epoch_;
    order_ = epoch_order(epoch_);
  }
  return mean_loss;
}

double Trainer::run_epoch() {
  const std::size_t start_epoch = epoch_;
  double total = 0.0;
  std::size_t n = 0;
  while (epoch_ == start_epoch) {
    total += step();
    ++n;
  }
  return n == 0 ? 0.0 : total / static_cast<double>(n);
}

void Trainer::restore_state(AdamState adam, std::uint64_t global_step, std::size_t epoch,
                            std::size_t batch, const Rng& rng) {
  if (batch >= steps_per_epoch()) throw FormatError("checkpoint batch position out of range");
  adam_ = std::move(adam);
  global_step_ = global_step;
  epoch_ = epoch;
  batch_ = batch;
  rng_ = rng;
  order_ = epoch_order(epoch_);
}

namespace {

// Runs fn(i) for every index, split into contiguous chunks across threads.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    NoGradGuard guard;
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t lo = t * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    pool.emplace_back([lo, hi, &fn]() {
      NoGradGuard guard;
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

double corpus_nll(const SequenceModel& model, const std::vector<Example>& examples,
                  std::size_t threads) {
  std::vector<double> sums(examples.size(), 0.0);
  std::vector<std::size_t> counts(examples.size(), 0);
  const LmHead head = model.lm_head();
  parallel_for(examples.size(), threads, [&](std::size_t i) {
    const auto& ids = examples[i].ids;
    if (ids.size() < 2) return;
    Tensor hidden = model.encode(ids);
    counts[i] = ids.size() - 1;
    sums[i] = lm_loss(head, hidden, ids).item() * static_cast<double>(counts[i]);
  });
  const double total = std::accumulate(sums.begin(), sums.end(), 0.0);
  const std::size_t n = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  if (n == 0) throw DataError("corpus_nll: no next-token positions");
  return total / static_cast<double>(n);
}

std::vector<std::vector<double>> predict_probs(const SequenceModel& model,
                                               const std::vector<Example>& examples,
                                               std::size_t threads) {
  std::vector<std::vector<double>> out(examples.size());
  const AttnPoolClassifier cls = model.classifier();
  parallel_for(examples.size(), threads, [&](std::size_t i) {
    Tensor hidden = model.encode(examples[i].ids);
    Tensor p = label_probs(cls, attention_pool(cls, hidden));
    out[i].assign(p.values().begin(), p.values().end());
  });
  return out;
}

Evaluation evaluate(const SequenceModel& model, const std::vector<Example>& examples,
                    double threshold, std::size_t threads) {
  Evaluation ev;
  const auto probs = predict_probs(model, examples, threads);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    ev.predictions.push_back(threshold_labels(probs[i], threshold));
    ev.golds.push_back(threshold_labels(examples[i].targets, 0.5));
  }
  ev.report = compute_report(ev.predictions, ev.golds, model.config().labels);
  return ev;
}

TrainSummary pretrain_lm(SequenceModel& model, const std::vector<Example>& train,
                         const std::vector<Example>& valid, const TrainConfig& config,
                         LogSink log) {
  Trainer trainer(model, config, Objective::kLanguageModel, train);
  trainer.set_log(log);
  TrainSummary summary;
  auto last_good = model.params().snapshot();
  for (std::size_t e = 0; e < config.epochs; ++e) {
    double loss = 0.0;
    try {
      loss = trainer.run_epoch();
    } catch (const NumericError& err) {
      model.params().restore(last_good);
      throw NumericError(std::string(err.what()) + " during epoch " + std::to_string(e) +
                         "; parameters restored to the last completed epoch");
    }
    last_good = model.params().snapshot();
    EpochRecord rec{e, loss, valid.empty() ? perplexity(loss) : perplexity(corpus_nll(model, valid))};
    summary.history.push_back(rec);
    if (e == 0 || rec.valid_score < summary.best_score) {
      summary.best_score = rec.valid_score;
      summary.best_epoch = e;
    }
    if (log) {
      log({{"step", trainer.global_step()}, {"epoch", e}, {"lr", trainer.current_lr()},
           {"loss", loss}, {"valid_ppl", rec.valid_score}});
    }
  }
  summary.steps = trainer.global_step();
  return summary;
}

TrainSummary train_classifier(SequenceModel& model, const std::vector<Example>& train,
                              const std::vector<Example>& valid, const TrainConfig& config,
                              LogSink log) {
  Trainer trainer(model, config, Objective::kClassifier, train);
  trainer.set_log(log);
  TrainSummary summary;
  std::vector<std::vector<double>> best;
  for (std::size_t e = 0; e < config.epochs; ++e) {
    const double loss = trainer.run_epoch();
    EpochRecord rec{e, loss, 0.0};
    if (!valid.empty()) {
      const Evaluation ev = evaluate(model, valid, config.threshold);
      rec.valid_score = ev.report.micro_f1;
      if (log) {
        log({{"step", trainer.global_step()}, {"epoch", e}, {"lr", trainer.current_lr()},
             {"loss", loss}, {"valid", {{"em", ev.report.em}, {"micro_p", ev.report.micro_p},
                                        {"micro_r", ev.report.micro_r},
                                        {"micro_f1", ev.report.micro_f1}}}});
      }
    }
    summary.history.push_back(rec);
    if (valid.empty() || best.empty() || rec.valid_score > summary.best_score) {
      summary.best_score = rec.valid_score;
      summary.best_epoch = e;
      best = model.params().snapshot();
    }
  }
  model.params().restore(best);
  summary.steps = trainer.global_step();
  return summary;
}

}  // namespace seqcoder
