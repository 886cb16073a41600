#include <gtest/gtest.h>

#include "test_support.hpp"
#include "vault/corpus.hpp"
#include "vault/error.hpp"
#include "vault/text.hpp"

using namespace vault;
using vault::test::TempDir;

namespace {

std::filesystem::path write_lines(const TempDir& dir, const std::string& name, const std::string& body) {
  const auto path = dir / name;
  vault::test::spit(path, body);
  return path;
}

}  // namespace

TEST(Tokenizer, LowercasesAndSplitsOnPunctuation) {
  EXPECT_EQ(tokenize("Hello, WORLD!!"), (std::vector<std::string>{"hello", "world"}));
  EXPECT_TRUE(tokenize("  ,;  ").empty());
  EXPECT_EQ(tokenize("a1-b2_c3"), (std::vector<std::string>{"a1", "b2", "c3"}));
}

TEST(Tokenizer, KeepsUtf8WordsIntact) {
  EXPECT_EQ(tokenize("Café crème"), (std::vector<std::string>{"café", "crème"}));
  EXPECT_EQ(utf8_length("Café"), 4u);
  EXPECT_EQ(utf8_length("a b"), 3u);
}

TEST(Labels, AcceptsAliasesCaseInsensitively) {
  EXPECT_EQ(parse_label("Entail"), NliLabel::kEntailment);
  EXPECT_EQ(parse_label("CONTRADICT"), NliLabel::kContradiction);
  EXPECT_EQ(parse_label("neutral"), NliLabel::kNeutral);
  EXPECT_THROW(parse_label("maybe"), ParseError);
}

TEST(LoadJsonl, SixLineFixtureHasTwoPerLabel) {
  TempDir dir;
  std::string body;
  for (int i = 0; i < 6; ++i) {
    body += R"({"premise":"p)" + std::to_string(i) + R"(","hypothesis":"h","label":")" +
            std::string(label_name(kAllLabels[i % 3])) + "\"}\n";
  }
  const auto corpus = load_jsonl(write_lines(dir, "six.jsonl", body));
  for (NliLabel label : kAllLabels) {
    EXPECT_EQ(partition(corpus, label).size(), 2u);
  }
  EXPECT_EQ(corpus.at(0).id, "six-1");
  EXPECT_EQ(corpus.at(5).id, "six-6");
  EXPECT_EQ(corpus.at(0).source, "six");
}

TEST(LoadJsonl, UnknownLabelNamesValueAndLine) {
  TempDir dir;
  const auto path = write_lines(dir, "bad.jsonl", R"({"premise":"x","label":"maybe"})" "\n");
  try {
    load_jsonl(path);
    FAIL() << "expected an error";
  } catch (const ParseError& e) {
    EXPECT_EQ(std::string(e.what()), "unknown label 'maybe' at line 1");
  }
}

TEST(LoadJsonl, MalformedLineNamesLineNumber) {
  TempDir dir;
  const auto path = write_lines(dir, "bad.jsonl",
                                R"({"premise":"x","label":"neutral"})" "\n{not json\n");
  try {
    load_jsonl(path);
    FAIL() << "expected an error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(LoadJsonl, DuplicateIdIsAnErrorButDuplicatePremiseIsNot) {
  TempDir dir;
  EXPECT_THROW(load_jsonl(write_lines(dir, "dup.jsonl",
                                      R"({"id":"a","premise":"x","label":"neutral"})" "\n"
                                      R"({"id":"a","premise":"y","label":"neutral"})" "\n")),
               ParseError);
  const auto ok = load_jsonl(write_lines(dir, "same.jsonl",
                                         R"({"id":"a","premise":"x","label":"neutral"})" "\n"
                                         R"({"id":"b","premise":"x","label":"neutral"})" "\n"));
  EXPECT_EQ(ok.size(), 2u);
}

TEST(LoadJsonl, EmptyPartitionIsAllowed) {
  TempDir dir;
  const auto corpus = load_jsonl(write_lines(dir, "c.jsonl",
                                             R"({"premise":"x","label":"neutral"})" "\n"));
  EXPECT_TRUE(partition(corpus, NliLabel::kContradiction).empty());
}

TEST(LoadJsonl, ThousandLinePartitionsMatchLineCounts) {
  TempDir dir;
  std::mt19937_64 rng(99);
  std::string body;
  std::array<std::size_t, 3> expected{};
  std::array<std::vector<std::string>, 3> expected_ids;
  for (int i = 0; i < 1000; ++i) {
    const auto label = kAllLabels[rng() % 3];
    ++expected[label_index(label)];
    const std::string id = "r" + std::to_string(i);
    expected_ids[label_index(label)].push_back(id);
    body += nlohmann::json{{"id", id}, {"premise", "p"}, {"label", label_name(label)}}.dump() + "\n";
  }
  const auto corpus = load_jsonl(write_lines(dir, "big.jsonl", body));
  std::size_t total = 0;
  for (NliLabel label : kAllLabels) {
    const auto slice = partition(corpus, label);
    ASSERT_EQ(slice.size(), expected[label_index(label)]);
    for (std::size_t i = 0; i < slice.size(); ++i) {
      EXPECT_EQ(slice[i].id, expected_ids[label_index(label)][i]);
    }
    total += slice.size();
  }
  EXPECT_EQ(total, corpus.size());
}

TEST(LoadJsonl, RoundTripAndIdempotence) {
  TempDir dir;
  const auto original = load_jsonl(vault::test::fixture_path("corpus30.jsonl"));
  EXPECT_EQ(original, load_jsonl(vault::test::fixture_path("corpus30.jsonl")));
  write_jsonl(dir / "copy.jsonl", original.examples());
  const auto reloaded = load_jsonl(dir / "copy.jsonl");
  EXPECT_EQ(original, reloaded);
}

TEST(LoadJsonl, NullHypothesisSurvivesRoundTrip) {
  TempDir dir;
  const auto corpus = load_jsonl(write_lines(dir, "n.jsonl",
                                             R"({"id":"a","premise":"x","hypothesis":null,"label":"neutral"})" "\n"));
  EXPECT_FALSE(corpus.at(0).hypothesis.has_value());
  write_jsonl(dir / "m.jsonl", corpus.examples());
  EXPECT_EQ(load_jsonl(dir / "m.jsonl"), corpus);
}

TEST(LoadJsonl, MissingPremiseIsRejected) {
  TempDir dir;
  EXPECT_THROW(load_jsonl(write_lines(dir, "p.jsonl", R"({"label":"neutral"})" "\n")), ParseError);
}
