#include <gtest/gtest.h>

#include "test_support.hpp"
#include "vault/curation.hpp"
#include "vault/error.hpp"

using namespace vault;
using vault::test::TempDir;

namespace {

std::shared_ptr<EndpointClient> client(std::string name, std::shared_ptr<Transport> transport) {
  ModelEndpoint ep;
  ep.name = std::move(name);
  ep.base_url = "http://x.invalid";
  ep.max_retries = 1;
  ep.backoff_initial = std::chrono::milliseconds(0);
  ep.backoff_max = std::chrono::milliseconds(0);
  return std::make_shared<EndpointClient>(ep, std::move(transport));
}

std::shared_ptr<EndpointClient> judge_saying(std::string name, std::optional<NliLabel> label) {
  const std::string reply = label ? std::string(label_name(*label)) : "cannot say";
  return client(std::move(name),
                std::make_shared<test::ScriptedTransport>(std::vector<int>{200}, test::chat_body(reply)));
}

std::shared_ptr<EndpointClient> classifier_saying(NliLabel label) {
  return client("target", std::make_shared<test::ScriptedTransport>(
                              std::vector<int>{200},
                              nlohmann::json{{"label", label_name(label)}, {"scores", {}}}.dump()));
}

FewShotContext context_of(std::size_t k) {
  FewShotContext ctx;
  ctx.query_id = "q";
  for (NliLabel label : kAllLabels) {
    for (std::size_t i = 0; i < k; ++i) {
      const std::string tag = std::string(label_name(label)).substr(0, 1) + std::to_string(i);
      ctx.shots.push_back({{tag, "premise " + tag, "hypothesis " + tag, label, "t"}, 1.0});
    }
    ctx.per_label_counts[label_index(label)] = k;
  }
  return ctx;
}

AdversarialCandidate candidate(std::string id, NliLabel target, Stage stage = Stage::kGenerated) {
  AdversarialCandidate c;
  c.id = std::move(id);
  c.premise_id = "p";
  c.premise = "A dog runs on the beach.";
  c.hypothesis = "An animal is outside.";
  c.target_label = target;
  c.stage = stage;
  return c;
}

}  // namespace

TEST(GenerationPrompt, MatchesExpectedLayout) {
  const ExamplePair query{"q", "Two kids play chess.", std::nullopt, NliLabel::kNeutral, "t"};
  const auto msgs = build_generation_prompt(query, context_of(1), NliLabel::kContradiction);
  ASSERT_EQ(msgs.size(), 1u);
  EXPECT_EQ(msgs[0].role, Role::kUser);
  const std::string expected =
      "Shot 1\nPremise: premise e0\nLabel: entailment.\nHypothesis: hypothesis e0\n\n"
      "Shot 2\nPremise: premise n0\nLabel: neutral.\nHypothesis: hypothesis n0\n\n"
      "Shot 3\nPremise: premise c0\nLabel: contradiction.\nHypothesis: hypothesis c0\n\n"
      "Premise: Two kids play chess.\n\n"
      "Now generate a one-sentence hypothesis that contradicts the premise above. "
      "Return only the hypothesis without narration.";
  EXPECT_EQ(msgs[0].content, expected);
}

TEST(GenerationPrompt, VerbFollowsTargetAndShotsStayInLabelOrder) {
  const ExamplePair query{"q", "x", std::nullopt, NliLabel::kNeutral, "t"};
  auto ctx = context_of(2);
  std::reverse(ctx.shots.begin(), ctx.shots.end());
  const auto text = build_generation_prompt(query, ctx, NliLabel::kEntailment)[0].content;
  EXPECT_NE(text.find("that entails the premise"), std::string::npos);
  EXPECT_LT(text.find("Label: entailment."), text.find("Label: neutral."));
  EXPECT_LT(text.find("Label: neutral."), text.find("Label: contradiction."));
  EXPECT_NE(text.find("Shot 6\n"), std::string::npos);
  EXPECT_NE(build_generation_prompt(query, ctx, NliLabel::kNeutral)[0].content.find("is neutral with"),
            std::string::npos);
}

TEST(GenerationPrompt, UnbalancedContextIsRejected) {
  auto ctx = context_of(1);
  ctx.per_label_counts[2] = 0;
  ctx.shots.pop_back();
  const ExamplePair query{"q", "x", std::nullopt, NliLabel::kNeutral, "t"};
  EXPECT_THROW(build_generation_prompt(query, ctx, NliLabel::kNeutral), Error);
}

TEST(CleanHypothesis, FirstLineTrimmedAndUnquoted) {
  EXPECT_EQ(clean_hypothesis("\n\n  \"A man sleeps.\"  \nextra"), "A man sleeps.");
  EXPECT_EQ(clean_hypothesis("'single'"), "single");
  EXPECT_EQ(clean_hypothesis("\xE2\x80\x9C" "curly" "\xE2\x80\x9D"), "curly");
  EXPECT_EQ(clean_hypothesis("\"\"nested\"\""), "\"nested\"");
  EXPECT_EQ(clean_hypothesis("no quotes"), "no quotes");
  EXPECT_FALSE(clean_hypothesis("  \n \n").has_value());
  EXPECT_FALSE(clean_hypothesis("\"\"").has_value());
}

TEST(GenerateHypothesis, BlankCompletionIsAnError) {
  auto gen = client("generator", std::make_shared<test::ScriptedTransport>(std::vector<int>{200},
                                                                           test::chat_body("\"  \"")));
  const std::vector<ChatMessage> prompt{{Role::kUser, "go"}};
  EXPECT_THROW(generate_hypothesis(*gen, prompt), Error);
}

TEST(AdversarialFilter, KeepsExactlyTheMisclassifiedCandidates) {
  // 30 candidates cycling through the targets against a constant-neutral target model.
  auto target = classifier_saying(NliLabel::kNeutral);
  std::size_t kept = 0;
  std::size_t expected_kept = 0;
  for (int i = 0; i < 30; ++i) {
    const NliLabel label = kAllLabels[i % 3];
    const auto out = adversarial_filter(*target, candidate("c" + std::to_string(i), label));
    EXPECT_EQ(out.target_prediction, NliLabel::kNeutral);
    if (label != NliLabel::kNeutral) ++expected_kept;
    if (out.stage == Stage::kKeptByFilter) ++kept;
    else EXPECT_EQ(out.stage, Stage::kDroppedByFilter);
  }
  EXPECT_EQ(kept, expected_kept);
  EXPECT_EQ(kept, 20u);
}

TEST(AdversarialFilter, ClassifierFailureDropsWithNote) {
  auto target = client("target", std::make_shared<test::ScriptedTransport>(std::vector<int>{503}));
  const auto out = adversarial_filter(*target, candidate("c", NliLabel::kEntailment));
  EXPECT_EQ(out.stage, Stage::kDroppedByFilter);
  EXPECT_FALSE(out.target_prediction.has_value());
  EXPECT_EQ(out.note.rfind("classifier error: ", 0), 0u);
}

TEST(AdversarialFilter, OnlyAcceptsGeneratedCandidates) {
  auto target = classifier_saying(NliLabel::kNeutral);
  EXPECT_THROW(adversarial_filter(*target, candidate("c", NliLabel::kEntailment, Stage::kKeptByFilter)),
               Error);
}

TEST(Unanimity, ExhaustiveThreeJudgeTable) {
  // Every verdict triple over {E, N, C, abstain} for every target: 64 x 3 cases.
  const std::optional<NliLabel> options[] = {NliLabel::kEntailment, NliLabel::kNeutral,
                                             NliLabel::kContradiction, std::nullopt};
  std::size_t cases = 0;
  std::size_t validated = 0;
  for (NliLabel target : kAllLabels) {
    for (const auto& a : options) {
      for (const auto& b : options) {
        for (const auto& c : options) {
          EnsembleConfig ensemble{{judge_saying("j1", a), judge_saying("j2", b), judge_saying("j3", c)}};
          const auto out = validate_unanimous(ensemble, candidate("x", target, Stage::kKeptByFilter));
          ++cases;
          ASSERT_EQ(out.verdicts.size(), 3u);
          const bool expect = a == target && b == target && c == target;
          EXPECT_EQ(out.stage == Stage::kValidated, expect);
          if (out.stage == Stage::kValidated) ++validated;
          else EXPECT_EQ(out.stage, Stage::kRejected);
        }
      }
    }
  }
  EXPECT_EQ(cases, 192u);
  EXPECT_EQ(validated, 3u);
}

TEST(Unanimity, AddingJudgesNeverAdmitsMore) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 500; ++t) {
    const NliLabel target = kAllLabels[rng() % 3];
    std::vector<JudgeVerdict> verdicts;
    const std::size_t n = 1 + rng() % 6;
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = rng() % 5;
      std::optional<NliLabel> p;
      if (r < 3) p = kAllLabels[r];
      else if (r == 3) p = target;
      verdicts.push_back({"j" + std::to_string(i), p, ""});
    }
    for (std::size_t m = 1; m < n; ++m) {
      const std::vector<JudgeVerdict> prefix(verdicts.begin(), verdicts.begin() + static_cast<long>(m));
      if (unanimous(verdicts, target)) EXPECT_TRUE(unanimous(prefix, target));
    }
  }
  EXPECT_FALSE(unanimous({}, NliLabel::kNeutral));
}

TEST(Unanimity, JudgeFailureFailsClosedWithoutShortCircuit) {
  auto down = client("judge-down", std::make_shared<test::ScriptedTransport>(std::vector<int>{503}));
  auto late = std::make_shared<test::ScriptedTransport>(std::vector<int>{200}, test::chat_body("neutral"));
  EnsembleConfig ensemble{{judge_saying("judge-a", NliLabel::kContradiction), down, client("judge-c", late)}};
  const auto out = validate_unanimous(ensemble, candidate("x", NliLabel::kNeutral, Stage::kKeptByFilter));
  EXPECT_EQ(out.stage, Stage::kRejected);
  ASSERT_EQ(out.verdicts.size(), 3u);
  EXPECT_TRUE(out.verdicts[1].abstained());
  EXPECT_EQ(out.verdicts[1].judge_id, "judge-down");
  EXPECT_EQ(out.verdicts[1].raw_text.rfind("error: ", 0), 0u);
  EXPECT_EQ(late->attempts(), 1u);  // the first judge's disagreement did not stop the third
}

TEST(Unanimity, AllAbstainIsRejected) {
  EnsembleConfig ensemble{{judge_saying("a", std::nullopt), judge_saying("b", std::nullopt)}};
  EXPECT_EQ(validate_unanimous(ensemble, candidate("x", NliLabel::kNeutral, Stage::kKeptByFilter)).stage,
            Stage::kRejected);
  EXPECT_THROW(validate_unanimous(EnsembleConfig{}, candidate("x", NliLabel::kNeutral, Stage::kKeptByFilter)),
               Error);
}

TEST(Candidates, JsonRoundTripAndTrainingRecord) {
  TempDir dir;
  auto c = candidate("r0-p7", NliLabel::kContradiction, Stage::kValidated);
  c.round = 2;
  c.context_ids = {"a", "b", "c"};
  c.target_prediction = NliLabel::kEntailment;
  c.verdicts = {{"j1", NliLabel::kContradiction, "contradiction"}, {"j2", std::nullopt, "hmm"}};
  auto d = candidate("r0-p8", NliLabel::kNeutral);
  test::spit(dir / "c.jsonl", candidates_to_jsonl({c, d}));
  const auto back = load_candidates(dir / "c.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0], c);
  EXPECT_EQ(back[1], d);
  const auto ex = to_example(c);
  EXPECT_EQ(ex.source, "vault-r2");
  EXPECT_EQ(ex.label, NliLabel::kContradiction);
  EXPECT_EQ(ex.hypothesis, "An animal is outside.");
  EXPECT_EQ(to_json(c)["verdicts"][1]["predicted"], "abstain");
}

TEST(Candidates, MalformedLineReportsLineNumber) {
  TempDir dir;
  test::spit(dir / "c.jsonl", candidates_to_jsonl({candidate("a", NliLabel::kNeutral)}) + "{\"id\":\"b\"}\n");
  try {
    load_candidates(dir / "c.jsonl");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}
