#include <sstream>

#include <gtest/gtest.h>

#include "webphish/baselines.hpp"
#include "webphish/features.hpp"

using namespace webphish;

namespace {

struct Dataset {
  Matrix rows;
  std::vector<int> labels;
};

// Feature 0 alone decides the label (with a margin); the rest are noise.
Dataset planted(std::size_t n, std::size_t p, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    Row r(p);
    for (auto& v : r) v = standard_normal(rng);
    const int y = static_cast<int>(uniform_index(rng, 2));
    r[0] = (y ? 1.0 : -1.0) + 0.3 * standard_normal(rng);
    d.rows.push_back(r);
    d.labels.push_back(y);
  }
  return d;
}

template <typename Model>
double accuracy(const Model& m, const Dataset& d) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < d.rows.size(); ++i) ok += label_value(m.predict(d.rows[i]).label) == d.labels[i];
  return static_cast<double>(ok) / static_cast<double>(d.rows.size());
}

}  // namespace

TEST(Scaler, TwoPointAndConstantColumns) {
  const Matrix rows{{0.0, 5.0}, {2.0, 5.0}};
  const auto s = fit_scaler(rows);
  EXPECT_EQ(s.means, (std::vector<double>{1.0, 5.0}));
  EXPECT_EQ(s.stds, (std::vector<double>{1.0, 1.0}));
  const auto t = s.apply(rows);
  EXPECT_EQ(t[0], (Row{-1.0, 0.0}));
  EXPECT_EQ(t[1], (Row{1.0, 0.0}));
  EXPECT_THROW(fit_scaler({}), DataError);
}

TEST(Scaler, FittedRowsAreCentered) {
  const auto d = planted(200, 6, 1);
  const auto t = fit_scaler(d.rows).apply(d.rows);
  for (std::size_t j = 0; j < 6; ++j) {
    double m = 0.0;
    for (const auto& r : t) m += r[j];
    EXPECT_NEAR(m / 200.0, 0.0, 1e-9);
  }
}

TEST(LogReg, SoftThreshold) {
  EXPECT_DOUBLE_EQ(soft_threshold(1.0, 0.3), 0.7);
  EXPECT_EQ(soft_threshold(-0.2, 0.3), 0.0);
  EXPECT_DOUBLE_EQ(soft_threshold(-1.0, 0.3), -0.7);
}

TEST(LogReg, SeparableTwoFeatureData) {
  Rng rng(3);
  Dataset d;
  for (int i = 0; i < 300; ++i) {
    const double a = uniform(rng, -1, 1), b = uniform(rng, -1, 1);
    if (std::abs(a + b) < 0.1) continue;  // margin
    d.rows.push_back({a, b});
    d.labels.push_back(a + b > 0 ? 1 : 0);
  }
  const auto m = train_logreg(d.rows, d.labels);
  EXPECT_GE(accuracy(m, d), 0.99);
}

TEST(LogReg, L1SuppressesNoiseFeature) {
  const auto d = planted(400, 2, 5);
  LogRegConfig cfg;
  cfg.l1_lambda = 0.1;
  const auto m = train_logreg(fit_scaler(d.rows).apply(d.rows), d.labels, cfg);
  EXPECT_LT(std::abs(m.weights[1]), std::abs(m.weights[0]) / 10.0);
}

TEST(LogReg, ScoresAndHandComputedRow) {
  LogRegModel zero{{0.0, 0.0}, 0.0};
  EXPECT_EQ(zero.score({3.0, -1.0}), 0.5);
  EXPECT_EQ(zero.predict({3.0, -1.0}).label, Label::legitimate);
  LogRegModel m{{0.5, -2.0}, 0.25};
  // q = 0.25 + 0.5*2 - 2*0.5 = 0.25
  EXPECT_NEAR(m.score({2.0, 0.5}), 1.0 / (1.0 + std::exp(-0.25)), 1e-15);
  EXPECT_EQ(m.predict({2.0, 0.5}).label, Label::phishing);
  double prev = 0.0;
  for (double x = -3; x <= 3; x += 0.5) {
    const double s = m.score({x, 0.0});
    EXPECT_GT(s, prev);
    prev = s;
  }
}

TEST(RandomForest, ConstantLabelData) {
  const auto d = planted(40, 4, 2);
  const std::vector<int> ones(40, 1);
  const auto m = train_random_forest(d.rows, ones, {.trees = 70, .seed = 1});
  ASSERT_EQ(m.trees.size(), 70u);
  for (const auto& r : d.rows) {
    EXPECT_EQ(m.predict(r).label, Label::phishing);
    EXPECT_EQ(m.score(r), 1.0);
  }
  for (double v : feature_importance(m)) EXPECT_EQ(v, 0.0);
}

TEST(RandomForest, HeldOutAccuracyAndPlantedImportance) {
  const auto train = planted(400, 31, 11);
  const auto test = planted(200, 31, 12);
  const auto m = train_random_forest(train.rows, train.labels, {.seed = 7});
  EXPECT_EQ(m.trees.size(), 70u);
  EXPECT_GE(accuracy(m, test), 0.95);
  const auto imp = feature_importance(m);
  EXPECT_GT(imp[0], 0.5);
  EXPECT_EQ(std::max_element(imp.begin(), imp.end()) - imp.begin(), 0);
  EXPECT_NEAR(std::accumulate(imp.begin(), imp.end(), 0.0), 1.0, 1e-9);
  for (const auto& t : m.trees) EXPECT_EQ(t.bootstrap_size, train.rows.size());
}

TEST(RandomForest, DeterministicAndScaleInvariant) {
  const auto train = planted(150, 8, 21);
  const auto test = planted(80, 8, 22);
  const auto a = train_random_forest(train.rows, train.labels, {.seed = 3});
  const auto b = train_random_forest(train.rows, train.labels, {.seed = 3});
  const auto scaler = fit_scaler(train.rows);
  const auto c = train_random_forest(scaler.apply(train.rows), train.labels, {.seed = 3});
  for (const auto& r : test.rows) {
    EXPECT_EQ(a.score(r), b.score(r));
    EXPECT_EQ(a.predict(r).label, c.predict(scaler.apply(r)).label);
  }
  EXPECT_EQ(feature_importance(a), feature_importance(b));
}

TEST(RandomForest, VoteGranularityAndTies) {
  const auto train = planted(60, 5, 31);
  const auto m = train_random_forest(train.rows, train.labels, {.seed = 4});
  for (const auto& r : planted(50, 5, 32).rows) {
    const double s = m.score(r) * 70.0;
    EXPECT_EQ(s, std::round(s));
  }
  // A 35/70 split is a tie and resolves to legitimate.
  EXPECT_EQ(decide(35.0 / 70.0), Label::legitimate);
}

TEST(RandomForest, ImportanceCsvSortedDescending) {
  std::ostringstream os;
  const std::vector<double> imp{0.1, 0.6, 0.3};
  const std::vector<std::string_view> names{"a", "b", "c"};
  write_importance_csv(os, imp, names);
  EXPECT_EQ(os.str(), "feature_name,importance\nb,0.59999999999999998\nc,0.29999999999999999\na,0.10000000000000001\n");
}
