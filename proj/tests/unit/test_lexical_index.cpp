#include <gtest/gtest.h>

#include <chrono>
#include <map>

#include "test_support.hpp"
#include "vault/error.hpp"
#include "vault/lexical_index.hpp"

using namespace vault;

namespace {

LabeledCorpus tiny_corpus(const std::vector<std::string>& premises) {
  std::vector<ExamplePair> out;
  for (std::size_t i = 0; i < premises.size(); ++i) {
    out.push_back({"d" + std::to_string(i), premises[i], std::nullopt, NliLabel::kNeutral, "t"});
  }
  return LabeledCorpus::from_examples(std::move(out));
}

}  // namespace

TEST(Bm25, BuildStatistics) {
  const auto index = build_index(tiny_corpus({"a b", "a a c", "b c c"}));
  EXPECT_EQ(index.doc_count(), 3u);
  EXPECT_DOUBLE_EQ(index.avgdl(), 8.0 / 3.0);
  EXPECT_EQ(index.postings().at("a").size(), 2u);
}

TEST(Bm25, EmptyCorpusIsAnError) { EXPECT_THROW(build_index(LabeledCorpus{}), Error); }

TEST(Bm25, PunctuationOnlyPremiseHasLengthZero) {
  const auto index = build_index(tiny_corpus({"!!", "a"}));
  EXPECT_EQ(index.doc_lengths()[0], 0u);
  EXPECT_EQ(bm25_score(index, "a", "d0"), 0.0);
}

TEST(Bm25, NoOverlapScoresZero) {
  const auto index = build_index(tiny_corpus({"a b", "a a c", "b c c"}));
  EXPECT_EQ(bm25_score(index, "zebra", "d0"), 0.0);
}

TEST(Bm25, UnknownDocIsAnError) {
  const auto index = build_index(tiny_corpus({"a b"}));
  EXPECT_THROW(bm25_score(index, "a", "nope"), NotFoundError);
}

// Values frozen from an independent script applying the equation term by term.
TEST(Bm25, MatchesFrozenReferenceValues) {
  const auto index = build_index(tiny_corpus({"a b", "a a c", "b c c"}));
  EXPECT_NEAR(bm25_score(index, "a c", "d0"), 0.5295815540797021, 1e-9);
  EXPECT_NEAR(bm25_score(index, "a c", "d1"), 1.0904723967770629, 1e-9);
  EXPECT_NEAR(bm25_score(index, "a c", "d2"), 0.6454985466035854, 1e-9);
}

TEST(Bm25, DoublingK1FollowsClosedForm) {
  const auto index = build_index(tiny_corpus({"a b", "a a c", "b c c"}), {3.0, 0.75});
  EXPECT_NEAR(bm25_score(index, "b", "d0"), 0.5469133140314014, 1e-9);
  EXPECT_NEAR(bm25_score(index, "b", "d2"), 0.43912747841937344, 1e-9);
}

TEST(Bm25, RepeatedQueryTokensCountPerOccurrence) {
  const auto index = build_index(tiny_corpus({"a b", "a a c", "b c c"}));
  EXPECT_NEAR(bm25_score(index, "a a", "d1"), 2.0 * bm25_score(index, "a", "d1"), 1e-12);
}

TEST(Bm25, PostingsMatchBruteForceCounts) {
  std::mt19937_64 rng(5);
  std::vector<std::string> premises;
  for (int i = 0; i < 200; ++i) premises.push_back(test::random_sentence(rng, 60, 1, 15));
  const auto index = build_index(tiny_corpus(premises));
  std::map<std::string, std::map<std::string, std::uint32_t>> oracle;
  for (std::size_t i = 0; i < premises.size(); ++i) {
    for (const auto& t : test::oracle_tokens(premises[i])) ++oracle[t]["d" + std::to_string(i)];
  }
  ASSERT_EQ(index.postings().size(), oracle.size());
  for (const auto& [term, docs] : oracle) {
    const auto& postings = index.postings().at(term);
    ASSERT_EQ(postings.size(), docs.size()) << term;
    for (const auto& p : postings) {
      EXPECT_EQ(p.tf, docs.at(index.doc_ids()[p.doc])) << term;
    }
  }
}

TEST(Bm25, TwoHundredDocsFiftyQueriesMatchOracle) {
  std::mt19937_64 rng(17);
  std::vector<std::string> premises;
  std::vector<std::vector<std::string>> tokens;
  for (int i = 0; i < 200; ++i) {
    premises.push_back(test::random_sentence(rng, 80, 1, 20));
    tokens.push_back(test::oracle_tokens(premises.back()));
  }
  const auto index = build_index(tiny_corpus(premises));
  for (int q = 0; q < 50; ++q) {
    const auto query = test::random_sentence(rng, 100, 1, 8);
    const auto qt = test::oracle_tokens(query);
    for (std::size_t d = 0; d < premises.size(); ++d) {
      ASSERT_NEAR(bm25_score(index, query, "d" + std::to_string(d)), test::oracle_bm25(tokens, qt, d), 1e-9);
    }
  }
}

TEST(Bm25, TopKMatchesExhaustiveSort) {
  std::mt19937_64 rng(23);
  std::vector<std::string> premises;
  for (int i = 0; i < 50; ++i) premises.push_back(test::random_sentence(rng, 10, 1, 6));
  const auto index = build_index(tiny_corpus(premises));
  std::vector<std::string> ids;
  for (int i = 0; i < 50; i += 2) ids.push_back("d" + std::to_string(i));
  const std::string query = "w1 w2 w3";
  std::vector<std::pair<double, std::string>> all;
  for (const auto& id : ids) all.push_back({bm25_score(index, query, id), id});
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  const auto top = top_k_lexical(index, query, ids, 7);
  ASSERT_EQ(top.size(), 7u);
  for (std::size_t i = 0; i < 7; ++i) {
    EXPECT_EQ(top[i].id, all[i].second);
    EXPECT_EQ(top[i].score, all[i].first);
  }
  EXPECT_EQ(top_k_lexical(index, query, ids, 100).size(), ids.size());
}

TEST(Bm25, JsonRoundTripPreservesScores) {
  std::mt19937_64 rng(31);
  std::vector<std::string> premises;
  for (int i = 0; i < 30; ++i) premises.push_back(test::random_sentence(rng, 20, 1, 8));
  const auto index = build_index(tiny_corpus(premises), {1.2, 0.5});
  const auto restored = Bm25Index::from_json(nlohmann::json::parse(index.to_json().dump()));
  EXPECT_EQ(restored.params(), index.params());
  EXPECT_EQ(restored.to_json(), index.to_json());
  for (int d = 0; d < 30; ++d) {
    EXPECT_EQ(bm25_score(restored, "w1 w4 w7", "d" + std::to_string(d)),
              bm25_score(index, "w1 w4 w7", "d" + std::to_string(d)));
  }
}
