#include <gtest/gtest.h>

#include "radt/metrics.hpp"
#include "radt/rng.hpp"

using namespace radt;

namespace {

std::vector<double> onehot(std::size_t c, std::size_t n) {
  std::vector<double> p(n, 0.0);
  p[c] = 1.0;
  return p;
}

double pairwise_auc(const std::vector<double>& s, const std::vector<bool>& pos) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (pos[i] && !pos[j]) {
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return wins / pairs;
}

}  // namespace

TEST(Metrics, PerfectPredictionsScoreOne) {
  std::vector<EvalRecord> recs;
  for (std::size_t i = 0; i < 9; ++i) recs.push_back({i % 3, onehot(i % 3, 3)});
  const auto m = evaluate_records(recs);
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(*m.auc.value, 1.0);
  EXPECT_EQ(m.f1_macro.value, 1.0);
  EXPECT_EQ(m.f1_micro.value, 1.0);
  EXPECT_EQ(m.precision_macro.value, 1.0);
  EXPECT_EQ(m.recall_macro.value, 1.0);
  EXPECT_EQ(m.f1_macro.per_class, (std::vector<double>{1, 1, 1}));
}

TEST(Metrics, SingleClassPredictionsOnBalancedSet) {
  std::vector<EvalRecord> recs;
  for (std::size_t i = 0; i < 10; ++i) recs.push_back({i % 2, {0.8, 0.2}});
  EXPECT_EQ(accuracy(recs), 0.5);
  const auto r = recall(recs, Averaging::none);
  EXPECT_EQ(r.per_class, (std::vector<double>{1.0, 0.0}));
  const auto p = precision(recs, Averaging::none);
  EXPECT_EQ(p.per_class[1], 0.0);
  EXPECT_EQ(p.zero_division, (std::vector<std::size_t>{1}));
  EXPECT_EQ(*auc(recs).value, 0.5);  // all scores tied
}

TEST(Metrics, MacroF1MatchesConfusionOracle) {
  // rows: true class, columns: predicted
  const std::size_t cm[3][3] = {{5, 2, 1}, {1, 7, 3}, {0, 2, 4}};
  std::vector<EvalRecord> recs;
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t p = 0; p < 3; ++p)
      for (std::size_t k = 0; k < cm[t][p]; ++k) recs.push_back({t, onehot(p, 3)});
  double f_sum = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    double tp = double(cm[c][c]), fp = 0, fn = 0;
    for (std::size_t o = 0; o < 3; ++o)
      if (o != c) fp += double(cm[o][c]), fn += double(cm[c][o]);
    const double pr = tp / (tp + fp), rc = tp / (tp + fn);
    f_sum += 2 * pr * rc / (pr + rc);
  }
  EXPECT_NEAR(f1(recs, Averaging::macro).value, f_sum / 3, 1e-9);
  EXPECT_NEAR(f1(recs, Averaging::micro).value, accuracy(recs), 1e-12);
  EXPECT_THROW((void)accuracy({}), Error);
}

TEST(Metrics, RankAucMatchesPairwiseOracle) {
  CounterRng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<EvalRecord> recs;
    for (int i = 0; i < 100; ++i) {
      // coarse scores produce plenty of ties
      const double a = std::round(rng.uniform() * 10) / 10, b = rng.uniform(), c = rng.uniform();
      const double s = a + b + c;
      recs.push_back({std::size_t(rng.below(3)), {a / s, b / s, c / s}});
    }
    const auto r = auc(recs);
    double macro = 0;
    for (std::size_t c = 0; c < 3; ++c) {
      std::vector<double> s;
      std::vector<bool> pos;
      for (const auto& rec : recs) s.push_back(rec.probs[c]), pos.push_back(rec.label == c);
      const double want = pairwise_auc(s, pos);
      EXPECT_NEAR(*r.per_class[c], want, 1e-9);
      macro += want / 3;
    }
    EXPECT_NEAR(*r.value, macro, 1e-9);
  }
}

TEST(Metrics, AucInvariantUnderMonotoneTransform) {
  CounterRng rng(2);
  std::vector<EvalRecord> a, b;
  for (int i = 0; i < 60; ++i) {
    const double p = rng.uniform();
    const std::size_t y = rng.uniform() < p ? 1 : 0;
    a.push_back({y, {1 - p, p}});
    b.push_back({y, {1 - std::pow(p, 3), std::pow(p, 3)}});
  }
  EXPECT_NEAR(*auc(a).value, *auc(b).value, 1e-12);
}

TEST(Metrics, ClassWithoutPositivesIsExcluded) {
  std::vector<EvalRecord> recs{{0, {0.7, 0.2, 0.1}}, {1, {0.2, 0.7, 0.1}}, {0, {0.5, 0.4, 0.1}}};
  const auto r = auc(recs);
  EXPECT_EQ(r.excluded, (std::vector<std::size_t>{2}));
  EXPECT_FALSE(r.per_class[2].has_value());
  EXPECT_EQ(*r.value, 1.0);
}

TEST(Metrics, JsonFieldsAndRange) {
  CounterRng rng(3);
  std::vector<EvalRecord> recs;
  for (int i = 0; i < 30; ++i) {
    const double p = rng.uniform();
    recs.push_back({std::size_t(rng.below(2)), {p, 1 - p}});
  }
  const auto j = to_json(evaluate_records(recs));
  for (const char* k : {"accuracy", "auc", "f1_per_class", "f1_macro", "f1_micro", "precision", "recall"})
    EXPECT_TRUE(j.contains(k)) << k;
  for (const char* k : {"accuracy", "auc", "f1_macro", "f1_micro", "precision", "recall"}) {
    EXPECT_GE(j[k].get<double>(), 0.0);
    EXPECT_LE(j[k].get<double>(), 1.0);
  }
}
