// SPDX-License-Identifier: Apache-2.0
#include "seqcoder/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <thread>

#include "seqcoder/errors.hpp"
#include "seqcoder/metrics.hpp"
#include "seqcoder/ops.hpp"

namespace seqcoder {

std::vector<double> gradient_times_input(const std::function<Tensor(const Tensor&)>& f,
                                         const Tensor& inputs) {
  Tensor x = Tensor::from(inputs.shape(), {inputs.values().begin(), inputs.values().end()}, true);
  Tensor out = f(x);
  if (out.size() != 1) throw ContractError("attribution target must be a scalar");
  backward(out);
  const auto g = x.grad();
  std::vector<double> scores(x.rows(), 0.0);
  for (std::size_t t = 0; t < x.rows(); ++t) {
    double s = 0.0;
    for (std::size_t k = 0; k < x.cols(); ++k) s += g[t * x.cols() + k] * x(t, k);
    scores[t] = s;
  }
  return scores;
}

std::vector<double> normalize_max_abs(std::vector<double> scores) {
  double peak = 0.0;
  for (double s : scores) peak = std::max(peak, std::abs(s));
  if (peak > 0) {
    for (double& s : scores) s /= peak;
  }
  return scores;
}

AttributionVector grad_times_input(SequenceModel& model, const std::vector<int>& framed, int label,
                                   const std::string& note_id) {
  const auto m = model.config().labels.size();
  if (label < 0 || static_cast<std::size_t>(label) >= m) {
    throw IndexError("label id " + std::to_string(label) + " outside label map of " +
                     std::to_string(m));
  }
  Tensor embedded;
  {
    NoGradGuard guard;
    embedded = model.embed(framed);
  }
  const AttnPoolClassifier cls = model.classifier();
  AttributionVector a;
  a.note_id = note_id;
  a.label = label;
  a.raw = gradient_times_input(
      [&](const Tensor& x) {
        Tensor logits = label_logits(cls, attention_pool(cls, model.encode_embedded(x)));
        a.logit = logits(0, static_cast<std::size_t>(label));
        return slice_cols(logits, static_cast<std::size_t>(label), 1);
      },
      embedded);
  model.params().zero_grad();
  a.scores = normalize_max_abs(a.raw);
  return a;
}

std::size_t EncodedNote::framed_words() const {
  int last = -1;
  std::size_t n = 0;
  for (int w : word_of_token) {
    if (w >= 0 && w != last) {
      ++n;
      last = w;
    }
  }
  return n;
}

EncodedNote encode_note(const NoteRecord& note, const BpeModel& tokenizer,
                        const Preprocessor& preprocessor) {
  EncodedNote e;
  e.id = note.id;
  e.words = preprocess(note.text, preprocessor);
  std::vector<int> wot;
  const std::vector<int> ids = tokenizer.encode(e.words, wot);
  e.ids = frame(ids, preprocessor);
  const std::size_t body = e.ids.size() - 2;
  e.word_of_token.reserve(e.ids.size());
  e.word_of_token.push_back(-1);
  e.word_of_token.insert(e.word_of_token.end(), wot.begin(), wot.begin() + static_cast<long>(body));
  e.word_of_token.push_back(-1);
  return e;
}

std::vector<SalientWord> salient_words(const AttributionVector& attribution, const EncodedNote& note,
                                       double threshold) {
  if (attribution.scores.size() != note.word_of_token.size()) {
    throw DimensionError("attribution has " + std::to_string(attribution.scores.size()) +
                         " scores for " + std::to_string(note.word_of_token.size()) + " tokens");
  }
  std::map<std::size_t, double> best;
  for (std::size_t t = 0; t < note.word_of_token.size(); ++t) {
    const int w = note.word_of_token[t];
    if (w < 0) continue;
    const auto pos = static_cast<std::size_t>(w);
    const double s = std::abs(attribution.scores[t]);
    auto [it, inserted] = best.emplace(pos, s);
    if (!inserted) it->second = std::max(it->second, s);
  }
  std::vector<SalientWord> out;
  for (const auto& [pos, score] : best) {
    if (score >= threshold) out.push_back({pos, note.words[pos], score});
  }
  return out;
}

namespace {

SequenceModel clone_model(const SequenceModel& model) {
  SequenceModel copy(model.config(), 0);
  const auto& src = model.params().entries();
  auto& dst = copy.params().entries();
  for (std::size_t i = 0; i < src.size(); ++i) {
    std::copy(src[i].tensor.values().begin(), src[i].tensor.values().end(),
              dst[i].tensor.mutable_values().begin());
  }
  return copy;
}

struct NoteResult {
  std::vector<std::pair<int, std::set<std::string>>> hits;  // label, salient dictionary words
  std::size_t attributions = 0;
  double fraction_sum = 0.0;
};

NoteResult explain_note(SequenceModel& model, const NoteRecord& note, const BpeModel& tokenizer,
                        const Preprocessor& preprocessor, const std::set<std::string>& dictionary,
                        const KeywordOptions& options) {
  NoteResult r;
  const EncodedNote enc = encode_note(note, tokenizer, preprocessor);
  const auto& labels = model.config().labels;
  std::vector<double> probs;
  {
    NoGradGuard guard;
    const AttnPoolClassifier cls = model.classifier();
    Tensor p = label_probs(cls, attention_pool(cls, model.encode(enc.ids)));
    probs.assign(p.values().begin(), p.values().end());
  }
  LabelSet targets = threshold_labels(probs, options.decision_threshold);
  for (int j : label_ids(note, labels)) targets.push_back(j);
  std::sort(targets.begin(), targets.end());
  targets.erase(std::unique(targets.begin(), targets.end()), targets.end());

  const double words = static_cast<double>(std::max<std::size_t>(1, enc.framed_words()));
  for (int j : targets) {
    const AttributionVector a = grad_times_input(model, enc.ids, j, note.id);
    const auto salient = salient_words(a, enc, options.saliency_threshold);
    ++r.attributions;
    r.fraction_sum += static_cast<double>(salient.size()) / words;
    std::set<std::string> found;
    for (const auto& s : salient) {
      if (dictionary.count(s.word) != 0) found.insert(s.word);
    }
    r.hits.emplace_back(j, std::move(found));
  }
  return r;
}

}  // namespace

KeywordTable keyword_table(const SequenceModel& model, const std::vector<NoteRecord>& notes,
                           const BpeModel& tokenizer, const Preprocessor& preprocessor,
                           const std::set<std::string>& dictionary, const KeywordOptions& options) {
  if (dictionary.empty()) throw ConfigError("keyword dictionary is empty");
  if (!model.has_classifier()) throw ContractError("keyword_table needs a classifier model");

  std::vector<NoteResult> results(notes.size());
  const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, notes.size()));
  auto work = [&](std::size_t lo, std::size_t hi) {
    SequenceModel local = clone_model(model);
    for (std::size_t i = lo; i < hi; ++i) {
      results[i] = explain_note(local, notes[i], tokenizer, preprocessor, dictionary, options);
    }
  };
  if (threads == 1) {
    work(0, notes.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (notes.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back(work, std::min(notes.size(), t * chunk),
                        std::min(notes.size(), (t + 1) * chunk));
    }
    for (auto& th : pool) th.join();
  }

  const auto& labels = model.config().labels;
  std::vector<std::map<std::string, std::size_t>> counts(labels.size());
  KeywordTable table;
  double fraction_sum = 0.0;
  for (const auto& r : results) {
    table.attributions += r.attributions;
    fraction_sum += r.fraction_sum;
    for (const auto& [j, words] : r.hits) {
      for (const auto& w : words) ++counts[static_cast<std::size_t>(j)][w];
    }
  }
  if (table.attributions > 0) {
    table.mean_salient_fraction = fraction_sum / static_cast<double>(table.attributions);
  }
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (counts[j].empty()) continue;
    std::vector<KeywordCount> ranked;
    for (const auto& [w, n] : counts[j]) ranked.push_back({w, n});
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const KeywordCount& a, const KeywordCount& b) { return a.notes > b.notes; });
    if (ranked.size() > options.top_k) ranked.resize(options.top_k);
    table.rows.push_back({labels[j], std::move(ranked)});
  }
  return table;
}

nlohmann::json KeywordTable::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json words = nlohmann::json::array();
    for (const auto& k : row.keywords) words.push_back({{"word", k.word}, {"notes", k.notes}});
    out.push_back({{"label", row.label}, {"keywords", words}});
  }
  return {{"labels", out},
          {"attributions", attributions},
          {"mean_salient_fraction", mean_salient_fraction}};
}

std::string KeywordTable::to_text() const {
  std::size_t width = 5;
  for (const auto& row : rows) width = std::max(width, row.label.size());
  std::ostringstream os;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-*s  ", static_cast<int>(width), "label");
  os << buf << "keywords\n";
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof buf, "%-*s  ", static_cast<int>(width), row.label.c_str());
    os << buf;
    for (std::size_t i = 0; i < row.keywords.size(); ++i) {
      if (i > 0) os << ", ";
      os << row.keywords[i].word;
    }
    os << '\n';
  }
  std::snprintf(buf, sizeof buf, "\nmean salient fraction %.4f over %zu attributions\n",
                mean_salient_fraction, attributions);
  os << buf;
  return os.str();
}

}  // namespace seqcoder
