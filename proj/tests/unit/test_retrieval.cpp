#include <gtest/gtest.h>

#include <set>

#include "constructions.hpp"
#include "test_support.hpp"
#include "vault/error.hpp"
#include "vault/retrieval.hpp"

using namespace vault;

namespace {

using Fixture = test::RetrievalFixture;
using test::lexical_perfect;
using test::random_fixture;
using test::semantic_perfect;

std::vector<std::string> ranking(const Fixture& f, const ExamplePair& q, FusionConfig cfg) {
  return retrieve_context(q, f.corpus, f.index, f.store, cfg).shot_ids();
}

}  // namespace

TEST(ZScore, PopulationStddevAndDegenerateCase) {
  const std::vector<double> s{1, 2, 3, 4};
  const auto z = zscore(s);
  EXPECT_DOUBLE_EQ(z.mean, 2.5);
  EXPECT_DOUBLE_EQ(z.stddev, std::sqrt(1.25));
  EXPECT_NEAR(z.values[0], -1.5 / std::sqrt(1.25), 1e-15);
  const std::vector<double> flat{7, 7, 7};
  for (double v : zscore(flat).values) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(zscore(std::vector<double>{}), Error);
}

TEST(CombinedScore, InterpolatesAndRejectsBadAlpha) {
  EXPECT_DOUBLE_EQ(combined_score(0.83, 1.0, -1.0), 0.83 - 0.17);
  EXPECT_EQ(combined_score(1.0, 0.25, 9.0), 0.25);
  EXPECT_EQ(combined_score(0.0, 9.0, 0.25), 0.25);
  EXPECT_THROW(combined_score(1.01, 0, 0), Error);
  EXPECT_THROW(combined_score(-0.01, 0, 0), Error);
}

TEST(Defaults, KIsOneAndAlphaIsPointEightThree) {
  const FusionConfig cfg;
  EXPECT_EQ(cfg.k, 1u);
  EXPECT_EQ(cfg.alpha, 0.83);
  EXPECT_EQ(cfg.mode, RetrievalMode::kComb);
  EXPECT_EQ(cfg.metric, MetricKind::kCosine);
  EXPECT_EQ(cfg.bm25.k1, 1.5);
  EXPECT_EQ(cfg.bm25.b, 0.75);
}

TEST(Retrieve, BalancedContextsForThousandRandomQueries) {
  std::mt19937_64 rng(61);
  const auto f = random_fixture(rng, 90);
  const RetrievalMode modes[] = {RetrievalMode::kSem, RetrievalMode::kLex, RetrievalMode::kComb};
  for (int trial = 0; trial < 1000; ++trial) {
    const auto& q = f.corpus.at(rng() % f.corpus.size());
    FusionConfig cfg;
    cfg.mode = modes[rng() % 3];
    cfg.k = 1 + rng() % 4;
    cfg.alpha = static_cast<double>(rng() % 101) / 100.0;
    cfg.metric = kAllMetrics[rng() % 6];
    const auto ctx = retrieve_context(q, f.corpus, f.index, f.store, cfg);
    ASSERT_EQ(ctx.shots.size(), 3 * cfg.k);
    ASSERT_TRUE(ctx.balanced());
    std::set<std::string> ids;
    for (std::size_t i = 0; i < ctx.shots.size(); ++i) {
      EXPECT_EQ(ctx.shots[i].example.label, kAllLabels[i / cfg.k]);
      EXPECT_NE(ctx.shots[i].example.id, q.id);
      ids.insert(ctx.shots[i].example.id);
    }
    EXPECT_EQ(ids.size(), ctx.shots.size());
  }
}

TEST(Retrieve, TooFewCandidatesIsAnError) {
  std::vector<ExamplePair> ex{{"a", "x y", "h", NliLabel::kEntailment, "t"},
                              {"b", "y z", "h", NliLabel::kNeutral, "t"},
                              {"c", "z x", "h", NliLabel::kContradiction, "t"}};
  const auto corpus = LabeledCorpus::from_examples(ex);
  const auto index = Bm25Index::build(corpus);
  FusionConfig cfg;
  cfg.mode = RetrievalMode::kLex;
  try {
    retrieve_context(corpus.at(0), corpus, index, EmbeddingStore{}, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(std::string(e.what()), "label 'entailment' has 0 eligible candidates, need k=1");
  }
}

TEST(Retrieve, NormalizationPoolIsWholeCorpusMinusQuery) {
  std::mt19937_64 rng(67);
  const auto f = random_fixture(rng, 30);
  const auto& q = f.corpus.at(4);
  NormalizationStats stats;
  retrieve_context(q, f.corpus, f.index, f.store, FusionConfig{}, &stats);
  std::vector<double> sem;
  std::vector<double> lex;
  for (const auto& ex : f.corpus.examples()) {
    if (ex.id == q.id) continue;
    const auto a = f.store.get(q.id);
    const auto b = f.store.get(ex.id);
    sem.push_back(test::oracle_cosine({a.begin(), a.end()}, {b.begin(), b.end()}));
    lex.push_back(bm25_score(f.index, q.premise, ex.id));
  }
  auto mean_sd = [](const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m += x;
    m /= double(v.size());
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::pair{m, std::sqrt(s / double(v.size()))};
  };
  EXPECT_NEAR(stats.mu_sem, mean_sd(sem).first, 1e-12);
  EXPECT_NEAR(stats.sigma_sem, mean_sd(sem).second, 1e-12);
  EXPECT_NEAR(stats.mu_lex, mean_sd(lex).first, 1e-12);
  EXPECT_NEAR(stats.sigma_lex, mean_sd(lex).second, 1e-12);
}

TEST(Retrieve, AlphaBoundariesReduceToSingleModes) {
  std::mt19937_64 rng(71);
  for (int fixture = 0; fixture < 100; ++fixture) {
    const auto f = random_fixture(rng, 24 + rng() % 30, 6, 12);
    const auto& q = f.corpus.at(rng() % f.corpus.size());
    FusionConfig cfg;
    cfg.k = 6;  // rank most of each partition, not just the head
    cfg.metric = fixture % 2 == 0 ? MetricKind::kCosine : MetricKind::kL2;
    auto sem = cfg, lex = cfg, comb = cfg;
    sem.mode = RetrievalMode::kSem;
    lex.mode = RetrievalMode::kLex;
    comb.mode = RetrievalMode::kComb;
    comb.alpha = 1.0;
    ASSERT_EQ(ranking(f, q, comb), ranking(f, q, sem)) << "fixture " << fixture;
    comb.alpha = 0.0;
    ASSERT_EQ(ranking(f, q, comb), ranking(f, q, lex)) << "fixture " << fixture;
  }
}

TEST(Retrieve, ContextJsonCarriesScores) {
  std::mt19937_64 rng(73);
  const auto f = random_fixture(rng, 12);
  const auto doc = to_json(retrieve_context(f.corpus.at(0), f.corpus, f.index, f.store, FusionConfig{}));
  EXPECT_EQ(doc["query_id"], f.corpus.at(0).id);
  EXPECT_EQ(doc["shots"].size(), 3u);
  EXPECT_TRUE(doc["shots"][0].contains("score"));
}

TEST(RocAuc, MatchesPairwiseOracleOnRandomInstances) {
  std::mt19937_64 rng(79);
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = 2 + rng() % 120;
    std::vector<double> scores(n);
    std::vector<bool> rel(n);
    for (std::size_t j = 0; j < n; ++j) {
      // Coarse values force plenty of ties.
      scores[j] = i % 2 == 0 ? static_cast<double>(rng() % 7) : std::uniform_real_distribution<>(0, 1)(rng);
      rel[j] = rng() % 2 == 0;
    }
    rel[0] = true;
    rel[1] = false;
    ASSERT_NEAR(roc_auc(scores, rel), test::oracle_auc(scores, rel), 1e-12);
  }
}

TEST(RocAuc, PerfectSeparationAndAllTies) {
  const std::vector<double> s{0.1, 0.2, 0.8, 0.9};
  EXPECT_EQ(roc_auc(s, {false, false, true, true}), 1.0);
  EXPECT_EQ(roc_auc(s, {true, true, false, false}), 0.0);
  const std::vector<double> ties(6, 3.0);
  EXPECT_EQ(roc_auc(ties, {true, false, true, false, true, false}), 0.5);
  EXPECT_THROW(roc_auc(s, {true, true, true, true}), Error);
}

TEST(RocCurve, RunsFromOriginToOneOne) {
  const std::vector<double> s{0.9, 0.8, 0.7, 0.6};
  const auto curve = roc_curve(s, {true, false, true, false});
  EXPECT_EQ(curve.front().fpr, 0.0);
  EXPECT_EQ(curve.front().tpr, 0.0);
  EXPECT_EQ(curve.back().fpr, 1.0);
  EXPECT_EQ(curve.back().tpr, 1.0);
  EXPECT_EQ(curve.size(), 5u);
}

TEST(AlphaGrid, HundredthStepsOverUnitInterval) {
  const auto grid = alpha_grid(0.01);
  ASSERT_EQ(grid.size(), 101u);
  for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_EQ(grid[i], static_cast<double>(i) / 100.0);
  EXPECT_THROW(alpha_grid(0.3), Error);
  EXPECT_THROW(alpha_grid(0.0), Error);
}

TEST(AlphaTuner, SemanticPerfectConstructionPicksOne) {
  const auto f = semantic_perfect(12, 83);
  const auto result = tune_alpha(f.corpus, f.index, f.store, 0.01);
  EXPECT_EQ(result.best_alpha, 1.0);
  EXPECT_EQ(result.best_auc, 1.0);
  EXPECT_LT(result.grid[99].auc, 1.0);
  EXPECT_EQ(result.grid.size(), 101u);
  EXPECT_EQ(result.pairs, 36u * 35u);
  EXPECT_EQ(result.positives, 36u * 11u);
}

TEST(AlphaTuner, MirroredConstructionPicksZero) {
  const auto f = lexical_perfect(12, 89);
  const auto result = tune_alpha(f.corpus, f.index, f.store, 0.01);
  EXPECT_EQ(result.best_alpha, 0.0);
  EXPECT_EQ(result.best_auc, 1.0);
  EXPECT_LT(result.grid.back().auc, 1.0);
}

TEST(AlphaTuner, WorkerCountDoesNotChangeTheResult) {
  std::mt19937_64 rng(97);
  const auto f = random_fixture(rng, 45);
  const auto one = tune_alpha(f.corpus, f.index, f.store, 0.05, MetricKind::kCosine, 1);
  const auto three = tune_alpha(f.corpus, f.index, f.store, 0.05, MetricKind::kCosine, 3);
  EXPECT_EQ(one, three);
}

TEST(AlphaTuner, SweepJsonlHasGridThenSummary) {
  std::mt19937_64 rng(101);
  const auto f = random_fixture(rng, 21);
  std::vector<RocPoint> curve;
  const auto result = tune_alpha(f.corpus, f.index, f.store, 0.25, MetricKind::kCosine, 1, &curve);
  EXPECT_FALSE(curve.empty());
  const auto text = sweep_to_jsonl(result, 0.25);
  std::vector<nlohmann::json> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) lines.push_back(nlohmann::json::parse(line));
  ASSERT_EQ(lines.size(), 6u);
  EXPECT_EQ(lines[2]["alpha"], 0.5);
  EXPECT_EQ(lines[5]["summary"]["best_alpha"], result.best_alpha);
  EXPECT_EQ(lines[5]["summary"]["grid_points"], 5);
}
