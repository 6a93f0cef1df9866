// SPDX-License-Identifier: Apache-2.0
//
// Multi-label evaluation: exact match, micro-averaged P/R/F1 and the
// per-label breakdown. Label sets are sorted vectors of label ids. Empty
// denominators yield 0, and F1 of (0, 0) is 0.

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace seqcoder {

using LabelSet = std::vector<int>;

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct LabelRow {
  std::string label;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;  // gold count
};

struct MetricsReport {
  double em = 0.0;
  double micro_p = 0.0;
  double micro_r = 0.0;
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  std::size_t documents = 0;
  std::vector<LabelRow> per_label;

  nlohmann::json to_json() const;
  /// Aligned plain-text table.
  std::string to_text() const;
};

double f1_score(double precision, double recall);
Prf prf_from_counts(std::size_t tp, std::size_t fp, std::size_t fn);

double exact_match(const std::vector<LabelSet>& preds, const std::vector<LabelSet>& golds);
Prf micro_prf(const std::vector<LabelSet>& preds, const std::vector<LabelSet>& golds);

/// One row per entry of `label_names`, in label-id order.
std::vector<LabelRow> per_label_report(const std::vector<LabelSet>& preds,
                                       const std::vector<LabelSet>& golds,
                                       const std::vector<std::string>& label_names);

/// Rows sorted by support descending (ties by label name), truncated to k.
std::vector<LabelRow> top_k_by_support(std::vector<LabelRow> rows, std::size_t k);

MetricsReport compute_report(const std::vector<LabelSet>& preds, const std::vector<LabelSet>& golds,
                             const std::vector<std::string>& label_names);

/// Labels whose probability clears the threshold, ascending.
LabelSet threshold_labels(const std::vector<double>& probs, double threshold = 0.5);

}  // namespace seqcoder
