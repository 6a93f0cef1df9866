// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "seqcoder/metrics.hpp"
#include "seqcoder/tokenizer.hpp"

namespace seqcoder {

struct NoteRecord {
  std::string id;
  std::string text;
  std::set<std::string> labels;  // empty for unlabeled corpora

  bool operator==(const NoteRecord&) const = default;
};

struct Dataset {
  std::vector<NoteRecord> records;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }

  /// Alphabetical union of every record's labels.
  std::vector<std::string> label_map() const;
};

/// `{"id": str, "text": str, "labels": [str]}` per line. Unknown fields are
/// ignored; blank lines are skipped. Malformed lines and duplicate ids raise
/// DataError naming the line. Records whose text preprocesses to nothing
/// are rejected the same way.
Dataset load_jsonl(const std::filesystem::path& path);
Dataset parse_jsonl(const std::string& content, const std::string& source = "<memory>");
void write_jsonl(const Dataset& data, const std::filesystem::path& path);
std::string to_jsonl(const Dataset& data);

/// Seeded permutation followed by a contiguous cut. Train and validation
/// sizes are rounded to nearest; the test split takes the remainder.
std::tuple<Dataset, Dataset, Dataset> split(const Dataset& data, double train_fraction = 0.90,
                                            double valid_fraction = 0.05, std::uint64_t seed = 0);

/// Label ids of a record under `label_map`; an unknown label is a DataError.
LabelSet label_ids(const NoteRecord& record, const std::vector<std::string>& label_map);

/// One-line-per-term dictionary; `#` starts a comment line. Terms are
/// normalized with preprocess() and joined by single spaces.
std::set<std::string> load_dictionary(const std::filesystem::path& path);
std::set<std::string> parse_dictionary(const std::string& content);

}  // namespace seqcoder
