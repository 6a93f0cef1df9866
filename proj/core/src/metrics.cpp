// SPDX-License-Identifier: Apache-2.0
#include "seqcoder/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "seqcoder/errors.hpp"

namespace seqcoder {

namespace {

void check_lengths(const std::vector<LabelSet>& preds, const std::vector<LabelSet>& golds) {
  if (preds.size() != golds.size()) {
    throw ContractError("metrics: " + std::to_string(preds.size()) + " predictions vs " +
                        std::to_string(golds.size()) + " gold sets");
  }
}

LabelSet normalized(LabelSet s) {
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

double f1_score(double precision, double recall) {
  return precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
}

Prf prf_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  Prf r;
  r.precision = ratio(tp, tp + fp);
  r.recall = ratio(tp, tp + fn);
  r.f1 = f1_score(r.precision, r.recall);
  return r;
}

double exact_match(const std::vector<LabelSet>& preds, const std::vector<LabelSet>& golds) {
  check_lengths(preds, golds);
  if (preds.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (normalized(preds[i]) == normalized(golds[i])) ++hits;
  }
  return ratio(hits, preds.size());
}

Prf micro_prf(const std::vector<LabelSet>& preds, const std::vector<LabelSet>& golds) {
  check_lengths(preds, golds);
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const LabelSet p = normalized(preds[i]);
    const LabelSet g = normalized(golds[i]);
    LabelSet both;
    std::set_intersection(p.begin(), p.end(), g.begin(), g.end(), std::back_inserter(both));
    tp += both.size();
    fp += p.size() - both.size();
    fn += g.size() - both.size();
  }
  return prf_from_counts(tp, fp, fn);
}

std::vector<LabelRow> per_label_report(const std::vector<LabelSet>& preds,
                                       const std::vector<LabelSet>& golds,
                                       const std::vector<std::string>& label_names) {
  check_lengths(preds, golds);
  const std::size_t m = label_names.size();
  std::vector<std::size_t> tp(m, 0), fp(m, 0), fn(m, 0);
  auto in_range = [m](int j) {
    if (j < 0 || static_cast<std::size_t>(j) >= m) {
      throw IndexError("label id " + std::to_string(j) + " outside label map of " +
                       std::to_string(m));
    }
    return static_cast<std::size_t>(j);
  };
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const LabelSet p = normalized(preds[i]);
    const LabelSet g = normalized(golds[i]);
    for (int j : p) {
      if (std::binary_search(g.begin(), g.end(), j)) {
        ++tp[in_range(j)];
      } else {
        ++fp[in_range(j)];
      }
    }
    for (int j : g) {
      if (!std::binary_search(p.begin(), p.end(), j)) ++fn[in_range(j)];
    }
  }
  std::vector<LabelRow> rows;
  rows.reserve(m);
  for (std::size_t j = 0; j < m; ++j) {
    const Prf s = prf_from_counts(tp[j], fp[j], fn[j]);
    rows.push_back({label_names[j], s.precision, s.recall, s.f1, tp[j] + fn[j]});
  }
  return rows;
}

std::vector<LabelRow> top_k_by_support(std::vector<LabelRow> rows, std::size_t k) {
  std::stable_sort(rows.begin(), rows.end(), [](const LabelRow& a, const LabelRow& b) {
    if (a.support != b.support) return a.support > b.support;
    return a.label < b.label;
  });
  if (rows.size() > k) rows.resize(k);
  return rows;
}

MetricsReport compute_report(const std::vector<LabelSet>& preds, const std::vector<LabelSet>& golds,
                             const std::vector<std::string>& label_names) {
  MetricsReport r;
  r.documents = preds.size();
  r.em = exact_match(preds, golds);
  const Prf micro = micro_prf(preds, golds);
  r.micro_p = micro.precision;
  r.micro_r = micro.recall;
  r.micro_f1 = micro.f1;
  r.per_label = per_label_report(preds, golds, label_names);
  double macro = 0.0;
  for (const auto& row : r.per_label) macro += row.f1;
  r.macro_f1 = r.per_label.empty() ? 0.0 : macro / static_cast<double>(r.per_label.size());
  return r;
}

LabelSet threshold_labels(const std::vector<double>& probs, double threshold) {
  LabelSet out;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (probs[j] >= threshold) out.push_back(static_cast<int>(j));
  }
  return out;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : per_label) {
    rows.push_back({{"label", r.label},
                    {"precision", r.precision},
                    {"recall", r.recall},
                    {"f1", r.f1},
                    {"support", r.support}});
  }
  return {{"documents", documents}, {"em", em},       {"micro_p", micro_p},
          {"micro_r", micro_r},     {"micro_f1", micro_f1}, {"macro_f1", macro_f1},
          {"per_label", rows}};
}

std::string MetricsReport::to_text() const {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "documents %zu\n%-8s %6s %6s %6s %6s\n", documents, "", "EM", "P",
                "R", "F1");
  os << buf;
  std::snprintf(buf, sizeof buf, "%-8s %6.1f %6.1f %6.1f %6.1f\n\n", "micro", 100 * em,
                100 * micro_p, 100 * micro_r, 100 * micro_f1);
  os << buf;
  std::size_t width = 5;
  for (const auto& r : per_label) width = std::max(width, r.label.size());
  std::snprintf(buf, sizeof buf, "%-*s %6s %6s %6s %6s\n", static_cast<int>(width), "label", "P",
                "R", "F1", "N");
  os << buf;
  for (const auto& r : per_label) {
    std::snprintf(buf, sizeof buf, "%-*s %6.1f %6.1f %6.1f %6zu\n", static_cast<int>(width),
                  r.label.c_str(), 100 * r.precision, 100 * r.recall, 100 * r.f1, r.support);
    os << buf;
  }
  return os.str();
}

}  // namespace seqcoder
