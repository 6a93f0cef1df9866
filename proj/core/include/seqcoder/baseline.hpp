// SPDX-License-Identifier: Apache-2.0
//
// Bag-of-words baseline: dictionary-filtered term frequencies fed to one
// logistic-regression classifier per label.

#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "seqcoder/data.hpp"
#include "seqcoder/metrics.hpp"

namespace seqcoder {

struct BowConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double learning_rate = 0.5;
  double l2 = 1e-4;
  double threshold = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Ordered dictionary terms; multi-word terms are matched as consecutive words.
class BowFeaturizer {
 public:
  explicit BowFeaturizer(const std::set<std::string>& dictionary);

  std::size_t dim() const { return terms_.size(); }
  const std::vector<std::string>& terms() const { return terms_; }

  /// log(1 + count) per term.
  std::vector<double> features(const std::string& text) const;

 private:
  std::vector<std::string> terms_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t max_words_ = 1;
};

struct BowModel {
  std::vector<std::string> labels;
  std::vector<std::vector<double>> weights;  // per label, one weight per term
  std::vector<double> bias;

  std::vector<double> probs(const std::vector<double>& x) const;
};

BowModel bow_train(const Dataset& train, const BowFeaturizer& featurizer,
                   const std::vector<std::string>& labels, const BowConfig& config);

struct BowResult {
  BowModel model;
  MetricsReport report;
};

/// Trains on `train` and reports metrics on `test`. The label map is the
/// alphabetical union of both datasets' labels.
BowResult bow_baseline(const Dataset& train, const Dataset& test,
                       const std::set<std::string>& dictionary, const BowConfig& config = {});

}  // namespace seqcoder
