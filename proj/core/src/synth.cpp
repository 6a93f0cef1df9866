// SPDX-License-Identifier: Apache-2.0
#include "seqcoder/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "seqcoder/errors.hpp"
#include "seqcoder/rng.hpp"

namespace seqcoder {

namespace {

const std::set<std::string>& template_words() {
  static const std::set<std::string> words = {
      "presented", "today", "noted", "consistent", "with", "signs", "of", "suggest",
      "owner", "reports", "suspect", "on", "exam", "assessment", "plan", "recheck",
      "in", "two", "weeks", "and"};
  return words;
}

void check_unit(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0, 1]");
}

// Consonant-vowel pseudo-words, unique across the whole vocabulary.
class WordFactory {
 public:
  explicit WordFactory(std::uint64_t seed) : rng_(seed), used_(template_words()) {}

  void reserve(const std::string& w) { used_.insert(w); }

  std::string word(std::size_t min_syllables, std::size_t max_syllables) {
    static constexpr char kCons[] = "bcdfghklmnprstvz";
    static constexpr char kVow[] = "aeiou";
    for (;;) {
      const std::size_t n = min_syllables + uniform_index(rng_, max_syllables - min_syllables + 1);
      std::string w;
      for (std::size_t i = 0; i < n; ++i) {
        w.push_back(kCons[uniform_index(rng_, sizeof kCons - 1)]);
        w.push_back(kVow[uniform_index(rng_, sizeof kVow - 1)]);
      }
      if (uniform01(rng_) < 0.3) w.push_back(kCons[uniform_index(rng_, sizeof kCons - 1)]);
      if (used_.insert(w).second) return w;
    }
  }

  // Short consonant clusters such as "ktr".
  std::string abbreviation() {
    static constexpr char kCons[] = "bcdfghklmnprstvxz";
    for (;;) {
      const std::size_t n = 3 + uniform_index(rng_, 2);
      std::string w;
      for (std::size_t i = 0; i < n; ++i) w.push_back(kCons[uniform_index(rng_, sizeof kCons - 1)]);
      if (used_.insert(w).second) return w;
    }
  }

 private:
  Rng rng_;
  std::set<std::string> used_;
};

class ZipfSampler {
 public:
  ZipfSampler(std::size_t n, double exponent) : cdf_(n) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      total += 1.0 / std::pow(static_cast<double>(i + 1), exponent);
      cdf_[i] = total;
    }
    for (double& c : cdf_) c /= total;
  }

  std::size_t operator()(Rng& rng) const {
    const double u = uniform01(rng);
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
  }

 private:
  std::vector<double> cdf_;
};

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

std::string label_name(std::size_t j) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "label_%02zu", j);
  return buf;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_labels < 1) throw ConfigError("n_labels must be at least 1");
  if (n_distractors < 1) throw ConfigError("n_distractors must be at least 1");
  if (n_names < 1) throw ConfigError("n_names must be at least 1");
  if (filler_min > filler_max) throw ConfigError("filler_min exceeds filler_max");
  if (dictionary_skip + dictionary_general > n_distractors) {
    throw ConfigError("dictionary_skip + dictionary_general exceeds n_distractors");
  }
  if (!(label_zipf >= 0) || !(distractor_zipf >= 0)) throw ConfigError("Zipf exponents must be >= 0");
  check_unit(context_rate, "context_rate");
  check_unit(context_noise, "context_noise");
  check_unit(base_abbrev_rate, "base_abbrev_rate");
  check_unit(abbrev_rate, "abbrev_rate");
  check_unit(length_scale, "length_scale");
  check_unit(swap_rate, "swap_rate");
  if (!triggers.empty()) {
    if (triggers.size() != n_labels) {
      throw ConfigError("triggers lists " + std::to_string(triggers.size()) + " labels, n_labels is " +
                        std::to_string(n_labels));
    }
    std::set<std::string> seen;
    for (std::size_t j = 0; j < triggers.size(); ++j) {
      if (triggers[j].empty()) throw ConfigError("label " + std::to_string(j) + " has no trigger");
      for (const auto& t : triggers[j]) {
        if (t.empty() || t.find(' ') != std::string::npos) {
          throw ConfigError("trigger \"" + t + "\" must be a single nonempty word");
        }
        if (template_words().count(t) != 0) {
          throw ConfigError("trigger \"" + t + "\" collides with a template word");
        }
        if (!seen.insert(t).second) throw ConfigError("trigger \"" + t + "\" is shared by two labels");
      }
    }
  }
}

nlohmann::json SynthConfig::to_json() const {
  return {{"seed", seed},
          {"n_labels", n_labels},
          {"a_notes", a_notes},
          {"b_notes", b_notes},
          {"b_unlabeled", b_unlabeled},
          {"label_zipf", label_zipf},
          {"n_distractors", n_distractors},
          {"distractor_zipf", distractor_zipf},
          {"n_names", n_names},
          {"n_context_per_label", n_context_per_label},
          {"context_rate", context_rate},
          {"context_noise", context_noise},
          {"filler_min", filler_min},
          {"filler_max", filler_max},
          {"dictionary_general", dictionary_general},
          {"dictionary_skip", dictionary_skip},
          {"base_abbrev_rate", base_abbrev_rate},
          {"abbrev_rate", abbrev_rate},
          {"length_scale", length_scale},
          {"swap_rate", swap_rate},
          {"triggers", triggers}};
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
  SynthConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.n_labels = j.value("n_labels", c.n_labels);
    c.a_notes = j.value("a_notes", c.a_notes);
    c.b_notes = j.value("b_notes", c.b_notes);
    c.b_unlabeled = j.value("b_unlabeled", c.b_unlabeled);
    c.label_zipf = j.value("label_zipf", c.label_zipf);
    c.n_distractors = j.value("n_distractors", c.n_distractors);
    c.distractor_zipf = j.value("distractor_zipf", c.distractor_zipf);
    c.n_names = j.value("n_names", c.n_names);
    c.n_context_per_label = j.value("n_context_per_label", c.n_context_per_label);
    c.context_rate = j.value("context_rate", c.context_rate);
    c.context_noise = j.value("context_noise", c.context_noise);
    c.filler_min = j.value("filler_min", c.filler_min);
    c.filler_max = j.value("filler_max", c.filler_max);
    c.dictionary_general = j.value("dictionary_general", c.dictionary_general);
    c.dictionary_skip = j.value("dictionary_skip", c.dictionary_skip);
    c.base_abbrev_rate = j.value("base_abbrev_rate", c.base_abbrev_rate);
    c.abbrev_rate = j.value("abbrev_rate", c.abbrev_rate);
    c.length_scale = j.value("length_scale", c.length_scale);
    c.swap_rate = j.value("swap_rate", c.swap_rate);
    c.triggers = j.value("triggers", c.triggers);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  }
  c.validate();
  return c;
}

NoteStyle NoteStyle::hospital_a(const SynthConfig& c) { return {c.base_abbrev_rate, 1.0, 0.0}; }

NoteStyle NoteStyle::hospital_b(const SynthConfig& c) {
  return {c.base_abbrev_rate + c.abbrev_rate * (1.0 - c.base_abbrev_rate), c.length_scale,
          c.swap_rate};
}

SynthVocabulary synth_vocabulary(const SynthConfig& config) {
  config.validate();
  SynthVocabulary v;
  WordFactory words(derive_seed(config.seed, 10));
  for (const auto& list : config.triggers) {
    for (const auto& t : list) words.reserve(t);
  }
  for (std::size_t j = 0; j < config.n_labels; ++j) {
    v.labels.push_back(label_name(j));
    if (config.triggers.empty()) {
      v.triggers.push_back({words.word(3, 4)});
    } else {
      v.triggers.push_back(config.triggers[j]);
    }
    std::vector<std::string> abbrevs;
    for (std::size_t t = 0; t < v.triggers[j].size(); ++t) abbrevs.push_back(words.abbreviation());
    v.abbreviations.push_back(std::move(abbrevs));
    std::vector<std::string> ctx;
    for (std::size_t c = 0; c < config.n_context_per_label; ++c) ctx.push_back(words.word(2, 3));
    v.context.push_back(std::move(ctx));
  }
  for (std::size_t i = 0; i < config.n_names; ++i) v.names.push_back(words.word(2, 3));
  for (std::size_t i = 0; i < config.n_distractors; ++i) v.distractors_a.push_back(words.word(1, 3));
  for (std::size_t i = 0; i < config.n_distractors; ++i) v.distractors_b.push_back(words.word(1, 3));

  for (std::size_t j = 0; j < config.n_labels; ++j) {
    v.dictionary.insert(v.triggers[j].begin(), v.triggers[j].end());
    v.dictionary.insert(v.context[j].begin(), v.context[j].end());
  }
  for (std::size_t i = 0; i < config.dictionary_general; ++i) {
    v.dictionary.insert(v.distractors_a[config.dictionary_skip + i]);
  }
  return v;
}

Dataset generate_notes(const SynthConfig& config, const SynthVocabulary& vocab,
                       const NoteStyle& style, std::size_t count, std::uint64_t stream_seed,
                       const std::string& prefix, bool with_labels) {
  const std::size_t m = vocab.labels.size();
  Rng rng(stream_seed);
  const ZipfSampler label_sampler(m, config.label_zipf);
  const ZipfSampler word_sampler(vocab.distractors_a.size(), config.distractor_zipf);
  static const double kCountProbs[3] = {0.5, 0.35, 0.15};

  Dataset out;
  for (std::size_t n = 0; n < count; ++n) {
    const std::string& name = vocab.names[uniform_index(rng, vocab.names.size())];

    const double u = uniform01(rng);
    std::size_t k = u < kCountProbs[0] ? 1 : (u < kCountProbs[0] + kCountProbs[1] ? 2 : 3);
    k = std::min(k, m);
    std::vector<std::size_t> chosen;
    while (chosen.size() < k) {
      const std::size_t j = label_sampler(rng);
      if (std::find(chosen.begin(), chosen.end(), j) == chosen.end()) chosen.push_back(j);
    }
    std::sort(chosen.begin(), chosen.end());

    std::vector<std::string> surface;
    std::vector<std::vector<std::string>> findings;
    for (std::size_t j : chosen) {
      const std::size_t t = uniform_index(rng, vocab.triggers[j].size());
      const bool abbreviate = uniform01(rng) < style.abbrev_rate;
      surface.push_back(abbreviate ? vocab.abbreviations[j][t] : vocab.triggers[j][t]);
      std::vector<std::string> ctx;
      for (const auto& c : vocab.context[j]) {
        if (uniform01(rng) < config.context_rate) ctx.push_back(c);
      }
      std::vector<std::string> sentence;
      const std::size_t form = uniform_index(rng, 3);
      if (ctx.empty()) {
        sentence = {"on", "exam", ",", surface.back(), "."};
      } else {
        std::vector<std::string> phrase;
        for (std::size_t i = 0; i < ctx.size(); ++i) {
          if (i > 0) phrase.push_back("and");
          phrase.push_back(ctx[i]);
        }
        if (form == 0) {
          sentence = phrase;
          for (const char* w : {"noted", ",", "consistent", "with"}) sentence.push_back(w);
        } else if (form == 1) {
          sentence = {"signs", "of"};
          sentence.insert(sentence.end(), phrase.begin(), phrase.end());
          sentence.push_back("suggest");
        } else {
          sentence = {"owner", "reports"};
          sentence.insert(sentence.end(), phrase.begin(), phrase.end());
          for (const char* w : {";", "suspect"}) sentence.push_back(w);
        }
        sentence.push_back(surface.back());
        sentence.push_back(".");
      }
      findings.push_back(std::move(sentence));
    }

    std::vector<std::string> noise;
    for (std::size_t j = 0; j < m; ++j) {
      if (std::binary_search(chosen.begin(), chosen.end(), j)) continue;
      for (const auto& c : vocab.context[j]) {
        if (uniform01(rng) < config.context_noise) noise.push_back(c);
      }
    }

    const std::size_t base_fill =
        config.filler_min + uniform_index(rng, config.filler_max - config.filler_min + 1);
    const auto n_fill = static_cast<std::size_t>(
        std::max<long long>(1, std::llround(static_cast<double>(base_fill) * style.length_scale)));
    std::vector<std::vector<std::string>> body;
    for (std::size_t s = 0; s < n_fill; ++s) {
      const std::size_t len = 5 + uniform_index(rng, 5);
      std::vector<std::string> sentence;
      for (std::size_t i = 0; i < len; ++i) {
        const std::size_t r = word_sampler(rng);
        const bool swap = uniform01(rng) < style.swap_rate;
        sentence.push_back(swap ? vocab.distractors_b[r] : vocab.distractors_a[r]);
      }
      sentence.push_back(".");
      body.push_back(std::move(sentence));
    }
    for (const auto& w : noise) {
      auto& sentence = body[uniform_index(rng, body.size())];
      sentence.insert(sentence.begin() + static_cast<long>(uniform_index(rng, sentence.size())), w);
    }
    for (auto& f : findings) {
      body.insert(body.begin() + static_cast<long>(uniform_index(rng, body.size() + 1)), std::move(f));
    }

    std::vector<std::string> words = {name, "presented", "today", "."};
    for (const auto& s : body) words.insert(words.end(), s.begin(), s.end());
    words.push_back("assessment");
    words.push_back(":");
    for (std::size_t i = 0; i < surface.size(); ++i) {
      if (i > 0) words.push_back(",");
      words.push_back(surface[i]);
    }
    for (const char* w : {".", "plan", ":", "recheck"}) words.push_back(w);
    words.push_back(name);
    for (const char* w : {"in", "two", "weeks", "."}) words.push_back(w);

    NoteRecord rec;
    char id[48];
    std::snprintf(id, sizeof id, "%s-%05zu", prefix.c_str(), n);
    rec.id = id;
    rec.text = join(words);
    if (with_labels) {
      for (std::size_t j : chosen) rec.labels.insert(vocab.labels[j]);
    }
    out.records.push_back(std::move(rec));
  }
  return out;
}

SynthCorpora synth_generate(const SynthConfig& config) {
  SynthCorpora c;
  c.vocabulary = synth_vocabulary(config);
  c.hospital_a = generate_notes(config, c.vocabulary, NoteStyle::hospital_a(config), config.a_notes,
                                derive_seed(config.seed, 11), "a");
  c.hospital_b = generate_notes(config, c.vocabulary, NoteStyle::hospital_b(config), config.b_notes,
                                derive_seed(config.seed, 12), "b");
  c.hospital_b_unlabeled =
      generate_notes(config, c.vocabulary, NoteStyle::hospital_b(config), config.b_unlabeled,
                     derive_seed(config.seed, 13), "u", false);
  return c;
}

void write_corpora(const SynthCorpora& corpora, const SynthConfig& config,
                   const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_jsonl(corpora.hospital_a, dir / "hospital_a.jsonl");
  write_jsonl(corpora.hospital_b, dir / "hospital_b.jsonl");
  write_jsonl(corpora.hospital_b_unlabeled, dir / "hospital_b_unlabeled.jsonl");
  {
    std::ofstream os(dir / "dictionary.txt", std::ios::binary);
    if (!os) throw DataError("cannot write " + (dir / "dictionary.txt").string());
    os << "# synthetic clinical term list\n";
    for (const auto& t : corpora.vocabulary.dictionary) os << t << '\n';
  }
  std::ofstream os(dir / "synth_config.json", std::ios::binary);
  if (!os) throw DataError("cannot write " + (dir / "synth_config.json").string());
  os << config.to_json().dump(2) << '\n';
}

}  // namespace seqcoder
