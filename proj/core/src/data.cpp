// SPDX-License-Identifier: Apache-2.0
#include "seqcoder/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "seqcoder/errors.hpp"
#include "seqcoder/rng.hpp"

namespace seqcoder {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  std::stringstream buf;
  buf << is.rdbuf();
  return buf.str();
}

}  // namespace

std::vector<std::string> Dataset::label_map() const {
  std::set<std::string> all;
  for (const auto& r : records) all.insert(r.labels.begin(), r.labels.end());
  return {all.begin(), all.end()};
}

Dataset parse_jsonl(const std::string& content, const std::string& source) {
  Dataset data;
  std::unordered_set<std::string> seen;
  std::istringstream is(content);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": malformed JSON (" + e.what() + ")");
    }
    if (!j.is_object()) throw DataError(where + ": expected a JSON object");
    NoteRecord r;
    try {
      if (!j.contains("id")) throw DataError(where + ": missing \"id\"");
      if (!j.contains("text")) throw DataError(where + ": missing \"text\"");
      r.id = j.at("id").get<std::string>();
      r.text = j.at("text").get<std::string>();
      if (j.contains("labels")) {
        if (!j.at("labels").is_array()) throw DataError(where + ": \"labels\" must be an array");
        for (const auto& l : j.at("labels")) r.labels.insert(l.get<std::string>());
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": bad field type (" + e.what() + ")");
    }
    if (preprocess(r.text).empty()) throw DataError(where + ": text is empty after preprocessing");
    if (!seen.insert(r.id).second) throw DataError(where + ": duplicate id \"" + r.id + "\"");
    data.records.push_back(std::move(r));
  }
  return data;
}

Dataset load_jsonl(const std::filesystem::path& path) {
  return parse_jsonl(read_file(path), path.string());
}

std::string to_jsonl(const Dataset& data) {
  std::string out;
  for (const auto& r : data.records) {
    nlohmann::json j{{"id", r.id}, {"text", r.text}, {"labels", r.labels}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

void write_jsonl(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os << to_jsonl(data);
}

std::tuple<Dataset, Dataset, Dataset> split(const Dataset& data, double train_fraction,
                                            double valid_fraction, std::uint64_t seed) {
  const double test_fraction = 1.0 - train_fraction - valid_fraction;
  if (train_fraction < 0 || valid_fraction < 0 || test_fraction < -1e-9) {
    throw ConfigError("split fractions must be nonnegative and sum to 1");
  }
  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  shuffle(order, rng);
  const auto n_train = std::min<std::size_t>(n, std::llround(train_fraction * static_cast<double>(n)));
  const auto n_valid =
      std::min<std::size_t>(n - n_train, std::llround(valid_fraction * static_cast<double>(n)));
  Dataset train, valid, test;
  for (std::size_t i = 0; i < n; ++i) {
    const NoteRecord& r = data.records[order[i]];
    if (i < n_train) {
      train.records.push_back(r);
    } else if (i < n_train + n_valid) {
      valid.records.push_back(r);
    } else {
      test.records.push_back(r);
    }
  }
  return {std::move(train), std::move(valid), std::move(test)};
}

LabelSet label_ids(const NoteRecord& record, const std::vector<std::string>& label_map) {
  LabelSet out;
  for (const auto& l : record.labels) {
    auto it = std::lower_bound(label_map.begin(), label_map.end(), l);
    if (it == label_map.end() || *it != l) {
      throw DataError("record \"" + record.id + "\" has label \"" + l + "\" outside the label map");
    }
    out.push_back(static_cast<int>(it - label_map.begin()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::set<std::string> parse_dictionary(const std::string& content) {
  std::set<std::string> terms;
  std::istringstream is(content);
  std::string line;
  while (std::getline(is, line)) {
    const auto start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos || line[start] == '#') continue;
    std::string joined;
    for (const auto& w : preprocess(line)) {
      if (!joined.empty()) joined.push_back(' ');
      joined += w;
    }
    if (!joined.empty()) terms.insert(joined);
  }
  return terms;
}

std::set<std::string> load_dictionary(const std::filesystem::path& path) {
  return parse_dictionary(read_file(path));
}

}  // namespace seqcoder
