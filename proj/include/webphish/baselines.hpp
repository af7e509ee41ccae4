#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "webphish/common.hpp"
#include "webphish/corpus.hpp"
#include "webphish/table.hpp"

namespace webphish {

namespace detail {

inline std::size_t check_rows(const Matrix& rows) {
  if (rows.empty()) throw DataError("no training rows");
  const std::size_t p = rows.front().size();
  if (p == 0) throw DataError("rows have no features");
  for (const auto& r : rows) {
    if (r.size() != p) throw DataError("ragged feature rows");
    for (double v : r)
      if (!std::isfinite(v)) throw NumericError("non-finite feature value");
  }
  return p;
}

inline void check_labels(const Matrix& rows, const std::vector<int>& labels) {
  if (labels.size() != rows.size()) throw DataError("row/label count mismatch");
  for (int y : labels)
    if (y != 0 && y != 1) throw DataError("labels must be 0 or 1");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Standardization

struct StandardScaler {
  std::vector<double> means;
  std::vector<double> stds;  // population standard deviation; 1 for constant columns

  Row apply(const Row& row) const {
    if (row.size() != means.size()) throw DataError("row width does not match scaler");
    Row out(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) out[j] = (row[j] - means[j]) / stds[j];
    return out;
  }

  Matrix apply(const Matrix& rows) const {
    Matrix out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(apply(r));
    return out;
  }
};

inline StandardScaler fit_scaler(const Matrix& rows) {
  const std::size_t p = detail::check_rows(rows);
  StandardScaler s{std::vector<double>(p, 0.0), std::vector<double>(p, 0.0)};
  const double n = static_cast<double>(rows.size());
  for (const auto& r : rows)
    for (std::size_t j = 0; j < p; ++j) s.means[j] += r[j];
  for (auto& m : s.means) m /= n;
  for (const auto& r : rows)
    for (std::size_t j = 0; j < p; ++j) s.stds[j] += (r[j] - s.means[j]) * (r[j] - s.means[j]);
  for (auto& v : s.stds) {
    v = std::sqrt(v / n);
    if (!(v > 0.0)) v = 1.0;
  }
  return s;
}

// ---------------------------------------------------------------------------
// L1-regularized logistic regression

inline double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

struct LogRegConfig {
  double l1_lambda = 1e-3;
  std::size_t epochs = 500;
  double learning_rate = 0.1;
};

struct LogRegModel {
  std::vector<double> weights;
  double bias = 0.0;
  double l1_lambda = 1e-3;

  double score(const Row& x) const {
    if (x.size() != weights.size()) throw DataError("row width does not match model");
    double q = bias;
    for (std::size_t j = 0; j < x.size(); ++j) q += weights[j] * x[j];
    return 1.0 / (1.0 + std::exp(-q));
  }

  Prediction predict(const Row& x) const {
    const double s = score(x);
    return {decide(s), s};
  }
};

/// Full-batch proximal gradient on mean log-loss + lambda * |w|_1 (bias unpenalized):
/// a gradient step followed by soft-thresholding the weights by lr * lambda.
inline LogRegModel train_logreg(const Matrix& rows, const std::vector<int>& labels, const LogRegConfig& cfg = {}) {
  const std::size_t p = detail::check_rows(rows);
  detail::check_labels(rows, labels);
  if (!(cfg.learning_rate > 0.0) || cfg.l1_lambda < 0.0) throw ConfigError("invalid logistic regression settings");
  LogRegModel m{std::vector<double>(p, 0.0), 0.0, cfg.l1_lambda};
  const double n = static_cast<double>(rows.size());
  std::vector<double> grad(p);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double gb = 0.0, loss = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      double q = m.bias;
      for (std::size_t j = 0; j < p; ++j) q += m.weights[j] * rows[i][j];
      const double pr = 1.0 / (1.0 + std::exp(-q));
      // log(1 + e^q) - y q, evaluated stably.
      loss += (q > 0 ? q + std::log1p(std::exp(-q)) : std::log1p(std::exp(q))) - labels[i] * q;
      const double r = pr - labels[i];
      gb += r;
      for (std::size_t j = 0; j < p; ++j) grad[j] += r * rows[i][j];
    }
    if (!std::isfinite(loss))
      throw NumericError("logistic regression diverged at epoch " + std::to_string(epoch + 1));
    const double step = cfg.learning_rate;
    for (std::size_t j = 0; j < p; ++j)
      m.weights[j] = soft_threshold(m.weights[j] - step * grad[j] / n, step * cfg.l1_lambda);
    m.bias -= step * gb / n;
  }
  for (double w : m.weights)
    if (!std::isfinite(w)) throw NumericError("logistic regression produced non-finite weights");
  return m;
}

// ---------------------------------------------------------------------------
// Random forest

struct TreeNode {
  int feature = -1;  // -1 for a leaf
  double threshold = 0.0;  // go left iff x[feature] <= threshold
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;  // fraction of phishing among the node's bootstrap rows
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  std::vector<double> importance;  // weighted impurity decrease per feature
  std::size_t bootstrap_size = 0;

  double leaf_value(const Row& x) const {
    std::size_t k = 0;
    while (nodes[k].feature >= 0)
      k = static_cast<std::size_t>(x[static_cast<std::size_t>(nodes[k].feature)] <= nodes[k].threshold ? nodes[k].left
                                                                                                          : nodes[k].right);
    return nodes[k].value;
  }
};

struct ForestConfig {
  std::size_t trees = 70;
  std::size_t candidate_features = 0;  // 0 = floor(sqrt(p))
  std::uint64_t seed = 0;
};

struct RandomForestModel {
  std::vector<DecisionTree> trees;
  std::size_t feature_count = 0;
  std::uint64_t seed = 0;

  /// Fraction of trees whose leaf majority is phishing.
  double score(const Row& x) const {
    if (x.size() != feature_count) throw DataError("row width does not match forest");
    std::size_t votes = 0;
    for (const auto& t : trees) votes += t.leaf_value(x) > 0.5 ? 1 : 0;
    return static_cast<double>(votes) / static_cast<double>(trees.size());
  }

  Prediction predict(const Row& x) const {
    const double s = score(x);
    return {decide(s), s};
  }
};

namespace detail {

inline double gini(double pos, double total) {
  if (total <= 0.0) return 0.0;
  const double q = pos / total;
  return 2.0 * q * (1.0 - q);
}

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& rows, const std::vector<int>& labels, std::size_t mtry, Rng& rng)
      : rows_(rows), labels_(labels), p_(rows.front().size()), mtry_(mtry), rng_(rng) {}

  DecisionTree build(std::vector<std::size_t> sample) {
    tree_.importance.assign(p_, 0.0);
    tree_.bootstrap_size = sample.size();
    root_size_ = static_cast<double>(sample.size());
    grow(sample);
    return std::move(tree_);
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double decrease = -1.0;
  };

  std::int32_t grow(std::vector<std::size_t>& idx) {
    const auto id = static_cast<std::int32_t>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    double pos = 0.0;
    for (auto i : idx) pos += labels_[i];
    const double n = static_cast<double>(idx.size());
    tree_.nodes[id].value = pos / n;
    if (pos == 0.0 || pos == n) return id;

    const Split s = best_split(idx, pos);
    if (s.feature < 0) return id;  // every row identical on every feature

    std::vector<std::size_t> left, right;
    for (auto i : idx) (rows_[i][static_cast<std::size_t>(s.feature)] <= s.threshold ? left : right).push_back(i);
    tree_.importance[static_cast<std::size_t>(s.feature)] += s.decrease * n / root_size_;
    idx.clear();
    idx.shrink_to_fit();
    const auto l = grow(left);
    const auto r = grow(right);
    tree_.nodes[id].feature = s.feature;
    tree_.nodes[id].threshold = s.threshold;
    tree_.nodes[id].left = l;
    tree_.nodes[id].right = r;
    return id;
  }

  /// Examines features in random order until `mtry` non-constant ones have been
  /// tried (more if none of those allowed a split).
  Split best_split(const std::vector<std::size_t>& idx, double pos) {
    std::vector<std::size_t> features(p_);
    std::iota(features.begin(), features.end(), std::size_t{0});
    const double n = static_cast<double>(idx.size());
    const double parent = gini(pos, n);
    Split best;
    std::size_t tried = 0;
    std::vector<std::pair<double, int>> col(idx.size());
    for (std::size_t k = 0; k < p_; ++k) {
      if (tried >= mtry_ && best.feature >= 0) break;
      std::swap(features[k], features[k + uniform_index(rng_, p_ - k)]);
      const std::size_t f = features[k];
      for (std::size_t i = 0; i < idx.size(); ++i) col[i] = {rows_[idx[i]][f], labels_[idx[i]]};
      std::sort(col.begin(), col.end());
      if (col.front().first == col.back().first) continue;
      ++tried;
      double left_pos = 0.0;
      for (std::size_t i = 0; i + 1 < col.size(); ++i) {
        left_pos += col[i].second;
        if (col[i].first == col[i + 1].first) continue;
        const double nl = static_cast<double>(i + 1), nr = n - nl;
        const double child = (nl * gini(left_pos, nl) + nr * gini(pos - left_pos, nr)) / n;
        const double dec = parent - child;
        if (dec > best.decrease) {
          best.decrease = dec;
          best.feature = static_cast<int>(f);
          best.threshold = col[i].first + (col[i + 1].first - col[i].first) / 2.0;
          // Guard against a midpoint that rounds onto the upper value.
          if (!(best.threshold < col[i + 1].first)) best.threshold = col[i].first;
        }
      }
    }
    if (best.feature >= 0) best.decrease = std::max(0.0, best.decrease);
    return best;
  }

  const Matrix& rows_;
  const std::vector<int>& labels_;
  std::size_t p_;
  std::size_t mtry_;
  Rng& rng_;
  DecisionTree tree_;
  double root_size_ = 1.0;
};

}  // namespace detail

/// Bagged Gini trees grown to purity (min leaf 1, unlimited depth). Tree i draws its
/// bootstrap sample and candidate features from its own generator seeded seed + i.
inline RandomForestModel train_random_forest(const Matrix& rows, const std::vector<int>& labels,
                                             const ForestConfig& cfg = {}) {
  const std::size_t p = detail::check_rows(rows);
  detail::check_labels(rows, labels);
  if (cfg.trees == 0) throw ConfigError("forest needs at least one tree");
  const std::size_t mtry =
      cfg.candidate_features ? std::min(cfg.candidate_features, p)
                             : std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(p)))));
  RandomForestModel m;
  m.feature_count = p;
  m.seed = cfg.seed;
  for (std::size_t t = 0; t < cfg.trees; ++t) {
    Rng rng(cfg.seed + t);
    std::vector<std::size_t> sample(rows.size());
    for (auto& i : sample) i = uniform_index(rng, rows.size());
    detail::TreeBuilder builder(rows, labels, mtry, rng);
    m.trees.push_back(builder.build(std::move(sample)));
  }
  return m;
}

/// Mean over trees of each tree's normalized impurity decrease, normalized to sum 1.
/// All zeros when no tree split.
inline std::vector<double> feature_importance(const RandomForestModel& m) {
  std::vector<double> imp(m.feature_count, 0.0);
  for (const auto& t : m.trees) {
    const double sum = std::accumulate(t.importance.begin(), t.importance.end(), 0.0);
    if (sum <= 0.0) continue;
    for (std::size_t j = 0; j < imp.size(); ++j) imp[j] += t.importance[j] / sum;
  }
  const double total = std::accumulate(imp.begin(), imp.end(), 0.0);
  if (total > 0.0)
    for (auto& v : imp) v /= total;
  return imp;
}

/// feature_name,importance sorted by importance, descending (ties keep feature order).
inline void write_importance_csv(std::ostream& out, const std::vector<double>& importance,
                                 std::span<const std::string_view> names) {
  if (names.size() != importance.size()) throw DataError("importance/name count mismatch");
  std::vector<std::size_t> order(importance.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return importance[a] > importance[b]; });
  out << "feature_name,importance\n";
  out.precision(17);
  for (auto j : order) out << names[j] << ',' << importance[j] << '\n';
}

}  // namespace webphish
