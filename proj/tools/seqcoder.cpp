// SPDX-License-Identifier: Apache-2.0
//
// seqcoder: command-line front end for corpus synthesis, tokenizer training,
// LM pretraining, classifier training, evaluation and keyword extraction.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "seqcoder/baseline.hpp"
#include "seqcoder/checkpoint.hpp"
#include "seqcoder/data.hpp"
#include "seqcoder/errors.hpp"
#include "seqcoder/interpret.hpp"
#include "seqcoder/model.hpp"
#include "seqcoder/synth.hpp"
#include "seqcoder/tokenizer.hpp"
#include "seqcoder/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace seqcoder;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct Options {
  std::string config;
  std::vector<std::string> data;
  std::string out;
  std::string checkpoint;
  std::string tokenizer;
  std::string dictionary;
  std::string test;
  std::string encoder = "transformer";
  std::string regime = "base";
  std::string split = "all";
  std::optional<double> lambda;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> vocab_size;
  std::size_t top_k = 10;
  double saliency = 0.2;
  std::size_t threads = 1;
  bool quiet = false;
};

json read_config(const Options& o) {
  if (o.config.empty()) return json::object();
  std::ifstream is(o.config);
  if (!is) throw ConfigError("cannot open config " + o.config);
  try {
    json j = json::parse(is);
    if (!j.is_object()) throw ConfigError("config " + o.config + " must hold a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + o.config + ": " + e.what());
  }
}

json section(const json& cfg, const char* name) {
  return cfg.contains(name) ? cfg.at(name) : json::object();
}

std::uint64_t resolve_seed(const Options& o, const json& cfg) {
  if (o.seed) return *o.seed;
  if (cfg.contains("seed")) return cfg.at("seed").get<std::uint64_t>();
  if (const char* env = std::getenv("SEQCODER_SEED")) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("SEQCODER_SEED is not an unsigned integer: ") + env);
  }
  return 0;
}

Preprocessor preprocessor_from(const json& cfg) {
  Preprocessor p;
  const json s = section(cfg, "tokenizer");
  p.max_tokens = s.value("max_tokens", p.max_tokens);
  p.validate();
  return p;
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("missing ") + what);
  if (!fs::is_regular_file(path)) throw DataError(std::string(what) + " not found: " + path);
}

fs::path prepare_out(const Options& o) {
  if (o.out.empty()) throw ConfigError("missing --out");
  fs::create_directories(o.out);
  return o.out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

class JsonlLog {
 public:
  JsonlLog(const fs::path& path, bool echo) : os_(path, std::ios::binary), echo_(echo) {
    if (!os_) throw DataError("cannot write " + path.string());
  }
  LogSink sink() {
    return [this](const json& j) {
      os_ << j.dump() << '\n';
      if (echo_ && j.contains("valid_ppl")) std::cerr << j.dump() << '\n';
      if (echo_ && j.contains("valid")) std::cerr << j.dump() << '\n';
    };
  }

 private:
  std::ofstream os_;
  bool echo_;
};

Dataset load_all(const std::vector<std::string>& paths) {
  Dataset all;
  for (const auto& p : paths) {
    require_file(p, "--data file");
    Dataset d = load_jsonl(p);
    all.records.insert(all.records.end(), d.records.begin(), d.records.end());
  }
  return all;
}

// Selects the requested split of a labeled corpus; the partition is the one
// `train` uses for the same seed.
Dataset select_split(const Dataset& data, const std::string& which, std::uint64_t seed) {
  if (which == "all") return data;
  auto [train, valid, test] = split(data, 0.90, 0.05, seed);
  if (which == "train") return train;
  if (which == "valid") return valid;
  if (which == "test") return test;
  throw ConfigError("unknown split `" + which + "` (all|train|valid|test)");
}

// ---------------------------------------------------------------------------

int cmd_synth(const Options& o) {
  const json cfg = read_config(o);
  json s = section(cfg, "synth");
  s["seed"] = resolve_seed(o, cfg);
  const SynthConfig config = SynthConfig::from_json(s);
  const fs::path out = prepare_out(o);
  const SynthCorpora corpora = synth_generate(config);
  write_corpora(corpora, config, out);
  if (!o.quiet) {
    std::cout << "wrote " << corpora.hospital_a.size() << " + " << corpora.hospital_b.size()
              << " labeled and " << corpora.hospital_b_unlabeled.size() << " unlabeled notes to "
              << out.string() << "\n";
  }
  return kExitOk;
}

int cmd_tokenizer_train(const Options& o) {
  const json cfg = read_config(o);
  const Preprocessor pre = preprocessor_from(cfg);
  const fs::path out = prepare_out(o);
  const Dataset data = load_all(o.data);
  std::vector<std::vector<std::string>> corpus;
  corpus.reserve(data.size());
  for (const auto& r : data.records) corpus.push_back(preprocess(r.text, pre));
  const std::size_t vocab =
      o.vocab_size ? *o.vocab_size : section(cfg, "tokenizer").value("vocab_size", kDeskVocabSize);
  const BpeModel model = bpe_train(corpus, vocab);
  model.save(out / "tokenizer.bpe");
  if (!o.quiet) {
    std::cout << "tokenizer: " << model.vocab_size() << " symbols, " << model.merges().size()
              << " merges -> " << (out / "tokenizer.bpe").string() << "\n";
  }
  return kExitOk;
}

ModelConfig model_config_from(const json& cfg, const Options& o, std::size_t vocab_size) {
  const EncoderKind kind = encoder_kind_from_string(section(cfg, "model").value("encoder", o.encoder));
  ModelConfig base = kind == EncoderKind::kLstm ? ModelConfig::desk_lstm(vocab_size)
                                                : ModelConfig::desk_transformer(vocab_size);
  json merged = base.to_json();
  merged.update(section(cfg, "model"));
  merged["encoder"] = to_string(kind);
  ModelConfig c = ModelConfig::from_json(merged);
  c.vocab_size = vocab_size;
  c.validate();
  return c;
}

TrainConfig train_config_from(const json& cfg, const Options& o, EncoderKind kind) {
  TrainConfig t = TrainConfig::from_json(section(cfg, "train"), TrainConfig::desk(kind));
  t.seed = resolve_seed(o, cfg);
  if (o.epochs) t.epochs = *o.epochs;
  t.validate();
  return t;
}

int cmd_pretrain(const Options& o) {
  const json cfg = read_config(o);
  const Preprocessor pre = preprocessor_from(cfg);
  require_file(o.tokenizer, "--tokenizer");
  const fs::path out = prepare_out(o);
  const BpeModel tok = BpeModel::load(o.tokenizer);
  const Dataset data = load_all(o.data);

  const ModelConfig mc = model_config_from(cfg, o, tok.vocab_size());
  TrainConfig tc = train_config_from(cfg, o, mc.encoder);
  tc.regime = Regime::kPretrain;
  auto [train, held, unused] = split(data, 0.95, 0.05, tc.seed);
  (void)unused;

  SequenceModel model(mc, tc.seed);
  JsonlLog log(out / "pretrain_log.jsonl", !o.quiet);
  const auto train_ex = make_examples(train, tok, pre, {});
  const auto held_ex = make_examples(held, tok, pre, {});
  int status = kExitOk;
  TrainSummary summary;
  try {
    summary = pretrain_lm(model, train_ex, held_ex, tc, log.sink());
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    status = kExitNumeric;
  }
  save_checkpoint(make_checkpoint(model, tc, tok.hash()), out / "pretrain.ckpt");
  if (status != kExitOk) return status;

  json report{{"encoder", to_string(mc.encoder)},
              {"parameters", parameter_count(mc)},
              {"train_notes", train.size()},
              {"heldout_notes", held.size()},
              {"heldout_perplexity", summary.history.back().valid_score},
              {"steps", summary.steps}};
  write_json(out / "pretrain_report.json", report);
  if (!o.quiet) std::cout << report.dump(2) << "\n";
  return kExitOk;
}

int cmd_train(const Options& o) {
  const json cfg = read_config(o);
  const Preprocessor pre = preprocessor_from(cfg);
  require_file(o.tokenizer, "--tokenizer");
  const fs::path out = prepare_out(o);
  const BpeModel tok = BpeModel::load(o.tokenizer);
  const Dataset data = load_all(o.data);

  const Regime regime = regime_from_string(o.regime);
  std::optional<Checkpoint> pretrained;
  if (uses_pretraining(regime)) {
    require_file(o.checkpoint, "--checkpoint (pretrained LM)");
    pretrained = load_checkpoint(o.checkpoint);
    check_tokenizer(*pretrained, tok.hash());
  }

  ModelConfig mc = pretrained ? pretrained->model : model_config_from(cfg, o, tok.vocab_size());
  mc.labels = data.label_map();
  if (mc.labels.empty()) throw DataError("training data carries no labels");
  mc.validate();
  TrainConfig tc = train_config_from(cfg, o, mc.encoder);
  tc.regime = regime;
  if (o.lambda) tc.lambda = *o.lambda;
  tc.validate();

  auto [train, valid, test] = split(data, 0.90, 0.05, tc.seed);
  SequenceModel model(mc, tc.seed);
  if (pretrained) model.transfer_from(model_from_checkpoint(*pretrained));

  JsonlLog log(out / "train_log.jsonl", !o.quiet);
  const auto train_ex = make_examples(train, tok, pre, mc.labels);
  const auto valid_ex = make_examples(valid, tok, pre, mc.labels);
  const auto test_ex = make_examples(test, tok, pre, mc.labels);
  const TrainSummary summary = train_classifier(model, train_ex, valid_ex, tc, log.sink());
  save_checkpoint(make_checkpoint(model, tc, tok.hash()), out / "model.ckpt");

  const Evaluation ev = evaluate(model, test_ex, tc.threshold, o.threads);
  json report = ev.report.to_json();
  report["regime"] = to_string(regime);
  report["best_epoch"] = summary.best_epoch;
  report["best_valid_micro_f1"] = summary.best_score;
  write_json(out / "test_report.json", report);
  write_text(out / "test_report.txt", ev.report.to_text());
  if (!o.quiet) std::cout << ev.report.to_text();
  return kExitOk;
}

struct Loaded {
  Checkpoint ckpt;
  BpeModel tokenizer;
};

Loaded load_model_inputs(const Options& o) {
  require_file(o.checkpoint, "--checkpoint");
  require_file(o.tokenizer, "--tokenizer");
  Loaded l{load_checkpoint(o.checkpoint), BpeModel::load(o.tokenizer)};
  check_tokenizer(l.ckpt, l.tokenizer.hash());
  if (l.ckpt.model.labels.empty()) throw DataError("checkpoint has no classifier head");
  return l;
}

int cmd_eval(const Options& o) {
  const json cfg = read_config(o);
  const Preprocessor pre = preprocessor_from(cfg);
  const Loaded in = load_model_inputs(o);
  const fs::path out = prepare_out(o);
  const SequenceModel model = model_from_checkpoint(in.ckpt);
  const Dataset data = select_split(load_all(o.data), o.split, in.ckpt.train.seed);
  const auto ex = make_examples(data, in.tokenizer, pre, in.ckpt.model.labels);
  const Evaluation ev = evaluate(model, ex, in.ckpt.train.threshold, o.threads);
  write_json(out / "eval_report.json", ev.report.to_json());
  write_text(out / "eval_report.txt", ev.report.to_text());
  if (!o.quiet) std::cout << ev.report.to_text();
  return kExitOk;
}

int cmd_explain(const Options& o) {
  const json cfg = read_config(o);
  const Preprocessor pre = preprocessor_from(cfg);
  const Loaded in = load_model_inputs(o);
  require_file(o.dictionary, "--dictionary");
  const fs::path out = prepare_out(o);
  const SequenceModel model = model_from_checkpoint(in.ckpt);
  const Dataset data = select_split(load_all(o.data), o.split, in.ckpt.train.seed);
  KeywordOptions opts;
  opts.top_k = o.top_k;
  opts.saliency_threshold = o.saliency;
  opts.decision_threshold = in.ckpt.train.threshold;
  opts.threads = o.threads;
  const KeywordTable table =
      keyword_table(model, data.records, in.tokenizer, pre, load_dictionary(o.dictionary), opts);
  write_json(out / "keywords.json", table.to_json());
  write_text(out / "keywords.txt", table.to_text());
  if (!o.quiet) std::cout << table.to_text();
  return kExitOk;
}

int cmd_baseline(const Options& o) {
  const json cfg = read_config(o);
  require_file(o.dictionary, "--dictionary");
  const fs::path out = prepare_out(o);
  const std::uint64_t seed = resolve_seed(o, cfg);
  const Dataset data = load_all(o.data);
  Dataset train = data;
  Dataset test;
  if (o.test.empty()) {
    auto [tr, va, te] = split(data, 0.90, 0.05, seed);
    train = std::move(tr);
    test = std::move(te);
  } else {
    require_file(o.test, "--test");
    test = load_jsonl(o.test);
  }
  BowConfig bc;
  const json s = section(cfg, "baseline");
  bc.epochs = s.value("epochs", bc.epochs);
  bc.learning_rate = s.value("learning_rate", bc.learning_rate);
  bc.l2 = s.value("l2", bc.l2);
  bc.seed = seed;
  const BowResult r = bow_baseline(train, test, load_dictionary(o.dictionary), bc);
  write_json(out / "baseline_report.json", r.report.to_json());
  write_text(out / "baseline_report.txt", r.report.to_text());
  if (!o.quiet) std::cout << r.report.to_text();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"seqcoder: sequence encoders for multi-label clinical note coding"};
  app.require_subcommand(1);
  Options o;

  auto common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON config file (sections: seed, synth, tokenizer, model, train, baseline)");
    sub->add_option("--out", o.out, "Output directory")->required();
    sub->add_option("--seed", o.seed, "Random seed (fallback: config, then SEQCODER_SEED, then 0)");
    sub->add_option("--threads", o.threads, "Worker threads for evaluation")->check(CLI::PositiveNumber);
    sub->add_flag("--quiet", o.quiet, "Suppress progress output");
  };

  auto* synth = app.add_subcommand("synth", "Generate the synthetic two-hospital benchmark");
  common(synth);

  auto* tok = app.add_subcommand("tokenizer-train", "Learn a BPE tokenizer from JSONL corpora");
  common(tok);
  tok->add_option("--data", o.data, "JSONL corpora")->required();
  tok->add_option("--vocab-size", o.vocab_size, "Target vocabulary size")->check(CLI::PositiveNumber);

  auto* pre = app.add_subcommand("pretrain", "Train the encoder and LM head on unlabeled notes");
  common(pre);
  pre->add_option("--data", o.data, "Unlabeled JSONL corpora")->required();
  pre->add_option("--tokenizer", o.tokenizer, "Tokenizer file")->required();
  pre->add_option("--encoder", o.encoder, "lstm or transformer")->check(CLI::IsMember({"lstm", "transformer"}));
  pre->add_option("--epochs", o.epochs, "Override the epoch count");

  auto* train = app.add_subcommand("train", "Train the multi-label classifier");
  common(train);
  train->add_option("--data", o.data, "Labeled JSONL corpus (split 90/5/5)")->required();
  train->add_option("--tokenizer", o.tokenizer, "Tokenizer file")->required();
  train->add_option("--regime", o.regime, "base|pretrain|auxiliary|auxiliary+pretrain")
      ->check(CLI::IsMember({"base", "pretrain", "auxiliary", "auxiliary+pretrain"}));
  train->add_option("--lambda", o.lambda, "Auxiliary LM loss weight");
  train->add_option("--checkpoint", o.checkpoint, "Pretrained LM checkpoint (pretrain regimes)");
  train->add_option("--encoder", o.encoder, "lstm or transformer (ignored with a pretrained checkpoint)")
      ->check(CLI::IsMember({"lstm", "transformer"}));
  train->add_option("--epochs", o.epochs, "Override the epoch count");

  auto* eval = app.add_subcommand("eval", "Evaluate a classifier checkpoint");
  common(eval);
  eval->add_option("--data", o.data, "Labeled JSONL corpus")->required();
  eval->add_option("--checkpoint", o.checkpoint, "Classifier checkpoint")->required();
  eval->add_option("--tokenizer", o.tokenizer, "Tokenizer file")->required();
  eval->add_option("--split", o.split, "all, or the train/valid/test part of the training split")
      ->check(CLI::IsMember({"all", "train", "valid", "test"}));

  auto* explain = app.add_subcommand("explain", "Gradient x input keyword table");
  common(explain);
  explain->add_option("--data", o.data, "Labeled JSONL corpus")->required();
  explain->add_option("--checkpoint", o.checkpoint, "Classifier checkpoint")->required();
  explain->add_option("--tokenizer", o.tokenizer, "Tokenizer file")->required();
  explain->add_option("--dictionary", o.dictionary, "Term list, one per line")->required();
  explain->add_option("--split", o.split, "all, or the train/valid/test part of the training split")
      ->check(CLI::IsMember({"all", "train", "valid", "test"}));
  explain->add_option("--top-k", o.top_k, "Keywords per label");
  explain->add_option("--threshold", o.saliency, "Saliency threshold on normalized scores");

  auto* base = app.add_subcommand("baseline", "Bag-of-words logistic regression baseline");
  common(base);
  base->add_option("--data", o.data, "Labeled JSONL training corpus")->required();
  base->add_option("--dictionary", o.dictionary, "Term list, one per line")->required();
  base->add_option("--test", o.test, "Evaluation corpus (default: test split of --data)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(o);
    if (*tok) return cmd_tokenizer_train(o);
    if (*pre) return cmd_pretrain(o);
    if (*train) return cmd_train(o);
    if (*eval) return cmd_eval(o);
    if (*explain) return cmd_explain(o);
    if (*base) return cmd_baseline(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
