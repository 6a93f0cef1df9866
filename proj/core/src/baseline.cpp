// SPDX-License-Identifier: Apache-2.0
#include "seqcoder/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "seqcoder/errors.hpp"
#include "seqcoder/rng.hpp"

namespace seqcoder {

namespace {

double logistic(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

void BowConfig::validate() const {
  if (epochs < 1) throw ConfigError("baseline epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("baseline batch_size must be at least 1");
  if (!(learning_rate > 0)) throw ConfigError("baseline learning_rate must be positive");
  if (!(l2 >= 0)) throw ConfigError("baseline l2 must be >= 0");
}

BowFeaturizer::BowFeaturizer(const std::set<std::string>& dictionary)
    : terms_(dictionary.begin(), dictionary.end()) {
  for (std::size_t i = 0; i < terms_.size(); ++i) index_.emplace(terms_[i], i);
  for (const auto& t : terms_) {
    max_words_ = std::max<std::size_t>(max_words_, 1 + std::count(t.begin(), t.end(), ' '));
  }
}

std::vector<double> BowFeaturizer::features(const std::string& text) const {
  const auto words = preprocess(text);
  std::vector<double> x(terms_.size(), 0.0);
  for (std::size_t i = 0; i < words.size(); ++i) {
    std::string gram;
    for (std::size_t n = 0; n < max_words_ && i + n < words.size(); ++n) {
      if (n > 0) gram.push_back(' ');
      gram += words[i + n];
      auto it = index_.find(gram);
      if (it != index_.end()) x[it->second] += 1.0;
    }
  }
  for (double& v : x) v = std::log1p(v);
  return x;
}

std::vector<double> BowModel::probs(const std::vector<double>& x) const {
  std::vector<double> p(labels.size());
  for (std::size_t j = 0; j < labels.size(); ++j) {
    p[j] = logistic(std::inner_product(x.begin(), x.end(), weights[j].begin(), bias[j]));
  }
  return p;
}

BowModel bow_train(const Dataset& train, const BowFeaturizer& featurizer,
                   const std::vector<std::string>& labels, const BowConfig& config) {
  config.validate();
  const std::size_t m = labels.size();
  const std::size_t dim = featurizer.dim();
  BowModel model{labels, std::vector<std::vector<double>>(m, std::vector<double>(dim, 0.0)),
                 std::vector<double>(m, 0.0)};
  std::vector<std::vector<double>> xs;
  std::vector<std::vector<double>> ys;
  for (const auto& r : train.records) {
    xs.push_back(featurizer.features(r.text));
    std::vector<double> y(m, 0.0);
    for (int j : label_ids(r, labels)) y[static_cast<std::size_t>(j)] = 1.0;
    ys.push_back(std::move(y));
  }
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(config.seed, 0xB0));
  for (std::size_t e = 0; e < config.epochs; ++e) {
    shuffle(order, rng);
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      const std::size_t end = std::min(order.size(), b + config.batch_size);
      const double step = config.learning_rate / static_cast<double>(end - b);
      std::vector<std::vector<double>> gw(m, std::vector<double>(dim, 0.0));
      std::vector<double> gb(m, 0.0);
      for (std::size_t i = b; i < end; ++i) {
        const auto& x = xs[order[i]];
        const auto p = model.probs(x);
        for (std::size_t j = 0; j < m; ++j) {
          const double err = p[j] - ys[order[i]][j];
          gb[j] += err;
          for (std::size_t k = 0; k < dim; ++k) gw[j][k] += err * x[k];
        }
      }
      for (std::size_t j = 0; j < m; ++j) {
        model.bias[j] -= step * gb[j];
        for (std::size_t k = 0; k < dim; ++k) {
          model.weights[j][k] -= step * gw[j][k] + config.learning_rate * config.l2 * model.weights[j][k];
        }
      }
    }
  }
  return model;
}

BowResult bow_baseline(const Dataset& train, const Dataset& test,
                       const std::set<std::string>& dictionary, const BowConfig& config) {
  std::set<std::string> all;
  for (const auto* d : {&train, &test}) {
    for (const auto& l : d->label_map()) all.insert(l);
  }
  const std::vector<std::string> labels(all.begin(), all.end());
  const BowFeaturizer featurizer(dictionary);
  BowResult result{bow_train(train, featurizer, labels, config), {}};
  std::vector<LabelSet> preds, golds;
  for (const auto& r : test.records) {
    preds.push_back(threshold_labels(result.model.probs(featurizer.features(r.text)), config.threshold));
    golds.push_back(label_ids(r, labels));
  }
  result.report = compute_report(preds, golds, labels);
  return result;
}

}  // namespace seqcoder
