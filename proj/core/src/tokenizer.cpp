// SPDX-License-Identifier: Apache-2.0
#include "seqcoder/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_set>

#include "seqcoder/errors.hpp"

namespace seqcoder {

namespace {

bool is_space(unsigned char c) { return std::isspace(c) != 0; }
bool is_punct(unsigned char c) { return c < 0x80 && std::ispunct(c) != 0; }

// One UTF-8 code point per symbol; a stray continuation byte stands alone.
std::vector<std::string> split_chars(std::string_view word) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < word.size()) {
    const auto c = static_cast<unsigned char>(word[i]);
    std::size_t len = 1;
    if (c >= 0xF0) {
      len = 4;
    } else if (c >= 0xE0) {
      len = 3;
    } else if (c >= 0xC0) {
      len = 2;
    }
    len = std::min(len, word.size() - i);
    out.emplace_back(word.substr(i, len));
    i += len;
  }
  return out;
}

bool ends_with_marker(const std::string& s) {
  return s.size() >= kEndOfWord.size() &&
         std::string_view(s).substr(s.size() - kEndOfWord.size()) == kEndOfWord;
}

}  // namespace

void Preprocessor::validate() const {
  if (max_tokens < 3) {
    throw ConfigError("max_tokens must be at least 3 (BOS, one token, EOS), got " +
                      std::to_string(max_tokens));
  }
}

std::vector<std::string> preprocess(std::string_view text, const Preprocessor& options) {
  std::string clean;
  clean.reserve(text.size());
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (options.ascii_only && c >= 0x80) continue;
    clean.push_back(options.lowercase && c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
  }

  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < clean.size()) {
    while (i < clean.size() && is_space(static_cast<unsigned char>(clean[i]))) ++i;
    std::size_t j = i;
    while (j < clean.size() && !is_space(static_cast<unsigned char>(clean[j]))) ++j;
    if (j == i) break;
    std::string_view tok(clean.data() + i, j - i);
    std::size_t lead = 0;
    while (lead < tok.size() && is_punct(static_cast<unsigned char>(tok[lead]))) ++lead;
    std::size_t trail = tok.size();
    while (trail > lead && is_punct(static_cast<unsigned char>(tok[trail - 1]))) --trail;
    for (std::size_t k = 0; k < lead; ++k) words.emplace_back(1, tok[k]);
    if (trail > lead) words.emplace_back(tok.substr(lead, trail - lead));
    for (std::size_t k = trail; k < tok.size(); ++k) words.emplace_back(1, tok[k]);
    i = j;
  }
  return words;
}

BpeModel::BpeModel() {
  add_symbol(std::string(kPadToken));
  add_symbol(std::string(kUnkToken));
  add_symbol(std::string(kBosToken));
  add_symbol(std::string(kEosToken));
  add_symbol(std::string(kEndOfWord));
}

int BpeModel::add_symbol(const std::string& s) {
  auto it = symbol_to_id_.find(s);
  if (it != symbol_to_id_.end()) return it->second;
  const int id = static_cast<int>(id_to_symbol_.size());
  id_to_symbol_.push_back(s);
  symbol_to_id_.emplace(s, id);
  return id;
}

void BpeModel::rebuild_ranks() {
  merge_rank_.clear();
  for (std::size_t r = 0; r < merges_.size(); ++r) merge_rank_.emplace(merges_[r], r);
}

const std::string& BpeModel::symbol(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_symbol_.size()) {
    throw IndexError("token id " + std::to_string(id) + " outside vocabulary of " +
                     std::to_string(id_to_symbol_.size()));
  }
  return id_to_symbol_[static_cast<std::size_t>(id)];
}

int BpeModel::id(std::string_view symbol) const {
  auto it = symbol_to_id_.find(std::string(symbol));
  return it == symbol_to_id_.end() ? -1 : it->second;
}

std::vector<int> BpeModel::encode_word(std::string_view word) const {
  struct Piece {
    std::string text;
    bool known;
  };
  std::vector<Piece> pieces;
  for (auto& ch : split_chars(word)) {
    const bool known = ch != kEndOfWord && symbol_to_id_.count(ch) != 0;
    pieces.push_back({std::move(ch), known});
  }
  pieces.push_back({std::string(kEndOfWord), true});

  while (pieces.size() > 1) {
    std::size_t best_rank = std::numeric_limits<std::size_t>::max();
    for (std::size_t i = 0; i + 1 < pieces.size(); ++i) {
      if (!pieces[i].known || !pieces[i + 1].known) continue;
      auto it = merge_rank_.find({pieces[i].text, pieces[i + 1].text});
      if (it != merge_rank_.end() && it->second < best_rank) {
        best_rank = it->second;
      }
    }
    if (best_rank == std::numeric_limits<std::size_t>::max()) break;
    const auto& pair = merges_[best_rank];
    std::vector<Piece> next;
    next.reserve(pieces.size());
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      if (i + 1 < pieces.size() && pieces[i].known && pieces[i + 1].known &&
          pieces[i].text == pair.first && pieces[i + 1].text == pair.second) {
        next.push_back({pair.first + pair.second, true});
        ++i;
      } else {
        next.push_back(std::move(pieces[i]));
      }
    }
    pieces = std::move(next);
  }

  std::vector<int> ids;
  ids.reserve(pieces.size());
  for (const auto& p : pieces) ids.push_back(p.known ? symbol_to_id_.at(p.text) : kUnkId);
  return ids;
}

std::vector<int> BpeModel::encode(const std::vector<std::string>& words) const {
  std::vector<int> unused;
  return encode(words, unused);
}

std::vector<int> BpeModel::encode(const std::vector<std::string>& words,
                                  std::vector<int>& word_of_token) const {
  std::vector<int> ids;
  word_of_token.clear();
  for (std::size_t w = 0; w < words.size(); ++w) {
    for (int id : encode_word(words[w])) {
      ids.push_back(id);
      word_of_token.push_back(static_cast<int>(w));
    }
  }
  return ids;
}

std::string BpeModel::decode(const std::vector<int>& ids) const {
  std::string out;
  std::string current;
  for (int id : ids) {
    if (id == kPadId || id == kBosId || id == kEosId) continue;
    const std::string& s = symbol(id);
    if (ends_with_marker(s)) {
      current.append(s, 0, s.size() - kEndOfWord.size());
      if (!out.empty()) out.push_back(' ');
      out += current;
      current.clear();
    } else {
      current += s;
    }
  }
  if (!current.empty()) {
    if (!out.empty()) out.push_back(' ');
    out += current;
  }
  return out;
}

std::string BpeModel::serialize() const {
  std::ostringstream os;
  os << "bpe-v1 " << id_to_symbol_.size() << '\n';
  for (const auto& [l, r] : merges_) os << l << ' ' << r << '\n';
  os << "#vocab\n";
  for (std::size_t i = 0; i < id_to_symbol_.size(); ++i) os << id_to_symbol_[i] << '\t' << i << '\n';
  return os.str();
}

BpeModel BpeModel::deserialize(std::string_view text) {
  std::istringstream is{std::string(text)};
  std::string line;
  if (!std::getline(is, line) || line.rfind("bpe-v1 ", 0) != 0) {
    throw FormatError("tokenizer file: missing `bpe-v1` header");
  }
  std::size_t declared = 0;
  try {
    declared = std::stoul(line.substr(7));
  } catch (const std::exception&) {
    throw FormatError("tokenizer file: bad vocabulary size in header");
  }

  BpeModel model;
  model.id_to_symbol_.clear();
  model.symbol_to_id_.clear();
  bool in_vocab = false;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!in_vocab) {
      if (line == "#vocab") {
        in_vocab = true;
        continue;
      }
      const auto sp = line.find(' ');
      if (sp == std::string::npos || sp == 0 || sp + 1 >= line.size() ||
          line.find(' ', sp + 1) != std::string::npos) {
        throw FormatError("tokenizer file line " + std::to_string(line_no) + ": bad merge");
      }
      model.merges_.emplace_back(line.substr(0, sp), line.substr(sp + 1));
    } else {
      const auto tab = line.rfind('\t');
      if (tab == std::string::npos) {
        throw FormatError("tokenizer file line " + std::to_string(line_no) + ": bad vocab entry");
      }
      const std::string sym = line.substr(0, tab);
      std::size_t id = 0;
      try {
        id = std::stoul(line.substr(tab + 1));
      } catch (const std::exception&) {
        throw FormatError("tokenizer file line " + std::to_string(line_no) + ": bad id");
      }
      if (id != model.id_to_symbol_.size() || model.symbol_to_id_.count(sym)) {
        throw FormatError("tokenizer file line " + std::to_string(line_no) +
                          ": ids must be dense and symbols unique");
      }
      model.add_symbol(sym);
    }
  }
  if (!in_vocab) throw FormatError("tokenizer file: missing #vocab section");
  if (model.id_to_symbol_.size() != declared) {
    throw FormatError("tokenizer file: header declares " + std::to_string(declared) +
                      " symbols, found " + std::to_string(model.id_to_symbol_.size()));
  }
  if (model.id_to_symbol_.size() < 5 || model.symbol(kPadId) != kPadToken ||
      model.symbol(kUnkId) != kUnkToken || model.symbol(kBosId) != kBosToken ||
      model.symbol(kEosId) != kEosToken) {
    throw FormatError("tokenizer file: special tokens missing or out of place");
  }
  for (const auto& [l, r] : model.merges_) {
    if (!model.symbol_to_id_.count(l + r)) {
      throw FormatError("tokenizer file: merge result `" + l + r + "` missing from vocab");
    }
  }
  model.rebuild_ranks();
  return model;
}

void BpeModel::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write tokenizer file " + path.string());
  os << serialize();
}

BpeModel BpeModel::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open tokenizer file " + path.string());
  std::stringstream buf;
  buf << is.rdbuf();
  return deserialize(buf.str());
}

std::uint64_t BpeModel::hash() const { return fnv1a64(serialize()); }

BpeModel bpe_train(const std::vector<std::vector<std::string>>& corpus, std::size_t vocab_size) {
  std::map<std::string, std::uint64_t> word_counts;
  for (const auto& doc : corpus) {
    for (const auto& w : doc) ++word_counts[w];
  }
  if (word_counts.empty()) throw DataError("bpe_train: corpus has no words");

  BpeModel model;
  std::set<std::string> alphabet;
  for (const auto& [w, _] : word_counts) {
    for (auto& ch : split_chars(w)) {
      if (ch != kEndOfWord) alphabet.insert(std::move(ch));
    }
  }
  for (const auto& ch : alphabet) model.add_symbol(ch);
  if (vocab_size < model.vocab_size()) {
    throw ConfigError("vocab_size " + std::to_string(vocab_size) + " is below the " +
                      std::to_string(model.vocab_size()) + " base symbols");
  }

  struct Word {
    std::vector<int> syms;
    std::uint64_t count;
  };
  std::vector<Word> words;
  words.reserve(word_counts.size());
  const int eow = model.id(kEndOfWord);
  for (const auto& [w, c] : word_counts) {
    Word word{{}, c};
    for (const auto& ch : split_chars(w)) {
      if (ch != kEndOfWord) word.syms.push_back(model.id(ch));
    }
    word.syms.push_back(eow);
    words.push_back(std::move(word));
  }

  auto key = [](int a, int b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
           static_cast<std::uint32_t>(b);
  };
  std::unordered_map<std::uint64_t, std::int64_t> pair_counts;
  std::unordered_map<std::uint64_t, std::unordered_set<std::size_t>> where;
  auto add_word = [&](std::size_t wi, std::int64_t sign) {
    const auto& s = words[wi].syms;
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      const auto k = key(s[i], s[i + 1]);
      pair_counts[k] += sign * static_cast<std::int64_t>(words[wi].count);
      if (sign > 0) where[k].insert(wi);
    }
  };
  for (std::size_t wi = 0; wi < words.size(); ++wi) add_word(wi, +1);

  const std::set<std::string> reserved{std::string(kPadToken), std::string(kUnkToken),
                                       std::string(kBosToken), std::string(kEosToken),
                                       std::string(kEndOfWord)};
  std::unordered_set<std::uint64_t> banned;

  while (model.vocab_size() < vocab_size) {
    std::uint64_t best = 0;
    std::int64_t best_count = 0;
    for (const auto& [k, c] : pair_counts) {
      if (c < 2 || banned.count(k)) continue;
      if (c > best_count) {
        best = k;
        best_count = c;
      } else if (c == best_count) {
        const auto& bl = model.symbol(static_cast<int>(best >> 32));
        const auto& br = model.symbol(static_cast<int>(best & 0xffffffffu));
        const auto& kl = model.symbol(static_cast<int>(k >> 32));
        const auto& kr = model.symbol(static_cast<int>(k & 0xffffffffu));
        if (std::tie(kl, kr) < std::tie(bl, br)) best = k;
      }
    }
    if (best_count < 2) break;

    const int left = static_cast<int>(best >> 32);
    const int right = static_cast<int>(best & 0xffffffffu);
    const std::string merged = model.symbol(left) + model.symbol(right);
    if (reserved.count(merged) || model.id(merged) >= 0) {
      // The concatenation would alias an existing symbol; never merge it.
      banned.insert(best);
      continue;
    }
    const int merged_id = model.add_symbol(merged);
    model.merges_.emplace_back(model.symbol(left), model.symbol(right));

    std::vector<std::size_t> affected(where[best].begin(), where[best].end());
    std::sort(affected.begin(), affected.end());
    for (std::size_t wi : affected) {
      auto& s = words[wi].syms;
      bool present = false;
      for (std::size_t i = 0; i + 1 < s.size(); ++i) {
        if (s[i] == left && s[i + 1] == right) {
          present = true;
          break;
        }
      }
      if (!present) continue;
      add_word(wi, -1);
      std::vector<int> next;
      next.reserve(s.size());
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (i + 1 < s.size() && s[i] == left && s[i + 1] == right) {
          next.push_back(merged_id);
          ++i;
        } else {
          next.push_back(s[i]);
        }
      }
      s = std::move(next);
      add_word(wi, +1);
    }
    where.erase(best);
    for (auto it = pair_counts.begin(); it != pair_counts.end();) {
      it = it->second == 0 ? pair_counts.erase(it) : std::next(it);
    }
  }
  model.rebuild_ranks();
  return model;
}

std::vector<int> frame(const std::vector<int>& ids, const Preprocessor& options) {
  options.validate();
  const std::size_t keep = std::min(ids.size(), options.max_tokens - 2);
  std::vector<int> out;
  out.reserve(keep + 2);
  out.push_back(BpeModel::kBosId);
  out.insert(out.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(keep));
  out.push_back(BpeModel::kEosId);
  return out;
}

PaddedBatch pad_batch(const std::vector<std::vector<int>>& framed) {
  std::size_t longest = 0;
  for (const auto& f : framed) longest = std::max(longest, f.size());
  PaddedBatch batch;
  for (const auto& f : framed) {
    std::vector<int> ids = f;
    std::vector<std::uint8_t> valid(f.size(), 1);
    ids.resize(longest, BpeModel::kPadId);
    valid.resize(longest, 0);
    batch.ids.push_back(std::move(ids));
    batch.valid.push_back(std::move(valid));
  }
  return batch;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace seqcoder
