#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "prereq/eval.hpp"
#include "prereq/train.hpp"
#include "support/gradcheck.hpp"

using namespace prereq;

namespace {

ScoredPairs make(std::vector<double> scores, std::vector<int> labels) {
  ScoredPairs sp;
  sp.scores = std::move(scores);
  sp.labels = std::move(labels);
  return sp;
}

// Random fixture of size <= 50 with both classes; a third of the scores are
// snapped to a coarse grid so ties show up.
ScoredPairs random_fixture(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> size(2, 50);
  std::uniform_real_distribution<double> u(0.001, 0.999);
  const int n = size(rng);
  ScoredPairs sp;
  for (int i = 0; i < n; ++i) {
    double s = u(rng);
    if (u(rng) < 0.33) s = std::round(s * 10) / 10;
    s = std::clamp(s, 0.001, 0.999);
    sp.scores.push_back(s);
    sp.labels.push_back(u(rng) < 0.4 ? 1 : 0);
    sp.pairs.emplace_back(i % 7, (i * 3 + 1) % 11);
  }
  sp.labels[0] = 1;
  sp.labels[1] = 0;
  return sp;
}

double oracle_accuracy(const ScoredPairs& sp, double t) {
  int hit = 0;
  for (std::size_t i = 0; i < sp.size(); ++i) hit += ((sp.scores[i] >= t) == (sp.labels[i] == 1));
  return static_cast<double>(hit) / static_cast<double>(sp.size());
}

double oracle_f1(const ScoredPairs& sp, double t) {
  // confusion matrix, then F1 of each class
  double tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < sp.size(); ++i) {
    const bool pred = sp.scores[i] >= t;
    const bool pos = sp.labels[i] == 1;
    tp += pred && pos;
    fp += pred && !pos;
    fn += !pred && pos;
    tn += !pred && !pos;
  }
  const double f_pos = (tp + fp + fn) > 0 ? 2 * tp / (2 * tp + fp + fn) : 0.0;
  const double f_neg = (tn + fn + fp) > 0 ? 2 * tn / (2 * tn + fn + fp) : 0.0;
  return (f_pos + f_neg) / 2;
}

double oracle_auc(const ScoredPairs& sp) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < sp.size(); ++i)
    for (std::size_t j = 0; j < sp.size(); ++j) {
      if (sp.labels[i] != 1 || sp.labels[j] != 0) continue;
      pairs += 1;
      if (sp.scores[i] > sp.scores[j]) wins += 1;
      if (sp.scores[i] == sp.scores[j]) wins += 0.5;
    }
  return wins / pairs;
}

// Rank of item i = 1 + items strictly ahead of it (higher key, or equal key
// earlier in input order).
double oracle_ap(const ScoredPairs& sp, int cls) {
  auto key = [&](std::size_t i) { return cls == 1 ? sp.scores[i] : 1.0 - sp.scores[i]; };
  auto ahead = [&](std::size_t j, std::size_t i) { return key(j) > key(i) || (key(j) == key(i) && j < i); };
  double total = 0;
  int hits = 0;
  for (std::size_t i = 0; i < sp.size(); ++i) {
    if (sp.labels[i] != cls) continue;
    int rank = 1, hits_at = 1;
    for (std::size_t j = 0; j < sp.size(); ++j)
      if (j != i && ahead(j, i)) {
        ++rank;
        hits_at += sp.labels[j] == cls;
      }
    total += static_cast<double>(hits_at) / rank;
    ++hits;
  }
  return total / hits;
}

double cube_into_unit(double x) {
  const double c = 2 * x - 1;
  return (c * c * c + 1) / 2;
}

}  // namespace

TEST(Accuracy, Examples) {
  EXPECT_EQ(accuracy(make({0.9, 0.1, 0.7}, {1, 0, 1})), 1.0);
  EXPECT_EQ(accuracy(make({0.5, 0.5, 0.5, 0.5}, {1, 1, 0, 0}), 0.5), 0.5);
  const auto ten = make({0.9, 0.2, 0.6, 0.4, 0.5, 0.1, 0.8, 0.3, 0.55, 0.45}, {1, 0, 0, 1, 1, 0, 1, 1, 0, 0});
  // predicted positive: 0.9 0.6 0.5 0.8 0.55 -> correct at 0, 1, 4, 5, 6, 9
  EXPECT_DOUBLE_EQ(accuracy(ten), 0.6);
  EXPECT_THROW(accuracy(make({}, {})), ValidationError);
  EXPECT_THROW(accuracy(make({0.5}, {1}), 1.0), ValidationError);
}

TEST(MacroF1, Examples) {
  EXPECT_EQ(macro_f1(make({0.9, 0.1, 0.7, 0.2}, {1, 0, 1, 0})), 1.0);
  EXPECT_DOUBLE_EQ(macro_f1(make({0.9, 0.8, 0.7, 0.6}, {1, 1, 0, 0})), 1.0 / 3.0);
  EXPECT_THROW(macro_f1(make({}, {})), ValidationError);
}

TEST(Auc, Examples) {
  EXPECT_EQ(auc(make({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0})), 1.0);
  EXPECT_EQ(auc(make({0.4, 0.4, 0.4, 0.4, 0.4}, {1, 0, 1, 0, 0})), 0.5);
  EXPECT_THROW(auc(make({0.4, 0.6}, {1, 1})), ValidationError);
  EXPECT_THROW(auc(make({0.4, 0.6}, {0, 0})), ValidationError);
}

TEST(Map, Examples) {
  EXPECT_EQ(map(make({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0})), 1.0);
  for (int n : {2, 5, 17}) {
    ScoredPairs sp;
    for (int i = 0; i < n; ++i) {
      sp.scores.push_back(0.9 - 0.8 * i / n);
      sp.labels.push_back(i == n - 1 ? 1 : 0);
    }
    EXPECT_DOUBLE_EQ(average_precision(sp, 1), 1.0 / n);
  }
  EXPECT_THROW(map(make({0.4, 0.6}, {0, 0})), ValidationError);
}

TEST(Metrics, MatchBruteForceOraclesOn200Fixtures) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const ScoredPairs sp = random_fixture(rng);
    for (double t : {0.5, 0.3, 0.7}) {
      EXPECT_NEAR(accuracy(sp, t), oracle_accuracy(sp, t), 1e-12);
      EXPECT_NEAR(macro_f1(sp, t), oracle_f1(sp, t), 1e-12);
    }
    EXPECT_NEAR(auc(sp), oracle_auc(sp), 1e-12);
    EXPECT_NEAR(map(sp), (oracle_ap(sp, 1) + oracle_ap(sp, 0)) / 2, 1e-12);
  }
}

TEST(Metrics, AllInUnitInterval) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const MetricSet m = evaluate(random_fixture(rng));
    for (std::size_t k = 0; k < kMetricNames.size(); ++k) {
      EXPECT_GE(metric_value(m, k), 0.0);
      EXPECT_LE(metric_value(m, k), 1.0);
    }
  }
}

TEST(Metrics, RankMetricsInvariantUnderMonotoneTransform) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    ScoredPairs sp = random_fixture(rng);
    ScoredPairs cubed = sp;
    for (auto& s : cubed.scores) s = cube_into_unit(s);
    EXPECT_NEAR(auc(sp), auc(cubed), 1e-12);
    EXPECT_NEAR(map(sp), map(cubed), 1e-12);
  }
}

TEST(PerQueryMap, GroupsByTargetConcept) {
  ScoredPairs sp;
  sp.pairs = {{0, 5}, {1, 5}, {2, 5}, {0, 6}, {1, 6}, {3, 7}};
  sp.scores = {0.9, 0.8, 0.1, 0.2, 0.7, 0.4};
  sp.labels = {0, 1, 0, 1, 0, 0};
  // query 5: hit at rank 2 -> 1/2; query 6: hit at rank 2 -> 1/2; query 7 has no positive
  EXPECT_DOUBLE_EQ(per_query_map(sp), 0.5);
}

TEST(Report, MeanIsArithmeticMeanOfSeeds) {
  std::mt19937_64 rng(9);
  std::vector<std::pair<std::uint64_t, MetricSet>> per_seed;
  for (std::uint64_t s = 1; s <= 5; ++s) per_seed.emplace_back(s, evaluate(random_fixture(rng)));
  const EvalReport r = make_report(per_seed);
  for (std::size_t k = 0; k < kMetricNames.size(); ++k) {
    double total = 0;
    for (const auto& [seed, m] : per_seed) total += metric_value(m, k);
    EXPECT_EQ(metric_value(r.mean, k), total / 5.0);
  }
  const std::string text = serialize_report(r);
  const auto lines = io::split(text, '\n');
  EXPECT_EQ(lines.size(), 4u * 6u + 1u);  // trailing newline
  EXPECT_EQ(lines[0].substr(0, 6), "acc\t1\t");
  EXPECT_EQ(lines[5].substr(0, 9), "acc\tmean\t");
  EXPECT_THROW(make_report({}), ValidationError);
}

TEST(ScoredPairsFile, RoundTrip) {
  std::mt19937_64 rng(10);
  const ScoredPairs sp = random_fixture(rng);
  const ScoredPairs back = parse_scored_pairs(serialize_scored_pairs(sp), "s.tsv");
  EXPECT_EQ(back.pairs, sp.pairs);
  EXPECT_EQ(back.labels, sp.labels);
  EXPECT_EQ(back.scores, sp.scores);
  EXPECT_THROW(parse_scored_pairs("0\t1\t2\t0.5\n", "s.tsv"), ValidationError);
  EXPECT_THROW(parse_scored_pairs("0\t1\t1\n", "s.tsv"), ParseError);
}

TEST(AverageDegree, CollapsesReciprocalPairs) {
  EXPECT_EQ(average_degree({}, 4), 0.0);
  EXPECT_EQ(average_degree({{0, 1}, {1, 0}, {2, 3}}, 4), 1.0);
  EXPECT_THROW(average_degree({}, 0), ValidationError);
}

TEST(AverageDegree, GoldAnnotationGraphSize) {
  // 1551 pairs with p < q over 322 concepts, as in the gold annotation set
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> pick(0, 321);
  std::set<ConceptPair> edges;
  while (edges.size() < 1551) {
    const int a = pick(rng), b = pick(rng);
    if (a != b) edges.insert({std::min(a, b), std::max(a, b)});
  }
  const double d = average_degree({edges.begin(), edges.end()}, 322);
  EXPECT_NEAR(d, 2.0 * 1551 / 322, 1e-12);
  EXPECT_NEAR(d, 9.63, 0.005);
}

TEST(Analysis, EmptyNearThresholdOne) {
  std::mt19937_64 rng(12);
  const Matrix s = prereq::testing::random_matrix(5, 5, rng, 0.0, 0.99);
  const auto a = analyze_scores(s, 0.999999);
  EXPECT_TRUE(a.predicted.empty());
  EXPECT_EQ(a.average_degree, 0.0);
}

TEST(Analysis, FourConceptCheckpointMatchesBruteForce) {
  ModelConfig c;
  c.encoder.variational = false;
  c.encoder.hidden_dim = 3;
  c.encoder.latent_dim = 2;
  const Model m = init_model(c, 4, 3);
  std::mt19937_64 rng(13);
  const Matrix latent = prereq::testing::random_matrix(6, 2, rng, -2, 2);
  Checkpoint ck = model_checkpoint(m);
  ck.matrices.emplace_back("latent", latent);
  const ConceptList concepts({"alpha", "beta", "gamma", "delta"});
  const Matrix r = m.decoder.value();
  for (double t : {0.3, 0.5, 0.7}) {
    const auto a = analyze_concept_graph(ck, concepts, t);
    std::size_t total = 0;
    for (int q = 0; q < 4; ++q) {
      std::vector<std::pair<double, int>> expect;
      for (int p = 0; p < 4; ++p) {
        if (p == q) continue;
        double dot = 0;
        for (int i = 0; i < 2; ++i)
          for (int j = 0; j < 2; ++j) dot += latent(p, i) * r(i, j) * latent(q, j);
        const double s = 1 / (1 + std::exp(-dot));
        if (s >= t) expect.emplace_back(s, p);
      }
      std::sort(expect.begin(), expect.end(), std::greater<>());
      const auto& got = a.prerequisites[static_cast<std::size_t>(q)];
      ASSERT_EQ(got.size(), expect.size());
      for (std::size_t k = 0; k < got.size(); ++k) {
        EXPECT_EQ(got[k].first, expect[k].second);
        EXPECT_NEAR(got[k].second, expect[k].first, 1e-12);
      }
      total += expect.size();
    }
    EXPECT_EQ(a.predicted.size(), total);
    const auto text = serialize_analysis(a, concepts, 1.5);
    EXPECT_EQ(text.rfind("#average_degree\t", 0), 0u);
    EXPECT_NE(text.find("#gold_average_degree\t1.5"), std::string::npos);
  }
}
