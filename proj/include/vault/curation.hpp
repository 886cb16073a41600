#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vault/corpus.hpp"
#include "vault/gateway.hpp"
#include "vault/retrieval.hpp"

namespace vault {

/// Lifecycle: generated -> (kept_by_filter | dropped_by_filter) ->
/// (validated | rejected). Only kept candidates reach validation.
enum class Stage { kGenerated, kKeptByFilter, kDroppedByFilter, kValidated, kRejected };

std::string_view stage_name(Stage stage);
Stage parse_stage(std::string_view name);

struct AdversarialCandidate {
  std::string id;
  std::size_t round = 0;
  std::string premise_id;
  std::string premise;
  NliLabel target_label = NliLabel::kEntailment;
  std::vector<std::string> context_ids;
  std::string hypothesis;
  std::optional<NliLabel> target_prediction;
  std::vector<JudgeVerdict> verdicts;
  Stage stage = Stage::kGenerated;
  std::string note;  // why a candidate was failed closed, if it was

  bool operator==(const AdversarialCandidate&) const = default;
};

nlohmann::json to_json(const AdversarialCandidate& candidate);
AdversarialCandidate candidate_from_json(const nlohmann::json& doc);

std::string candidates_to_jsonl(const std::vector<AdversarialCandidate>& candidates);
std::vector<AdversarialCandidate> load_candidates(const std::filesystem::path& path);

/// The validated candidate as a training record (corpus schema).
ExamplePair to_example(const AdversarialCandidate& candidate);

struct EnsembleConfig {
  std::vector<std::shared_ptr<EndpointClient>> judges;
};

/// "entails" / "is neutral with" / "contradicts".
std::string_view instruction_verb(NliLabel label);

/// One user message: the shots in label order as Shot/Premise/Label/
/// Hypothesis blocks, the query premise, then the generation instruction.
/// Throws on an unbalanced context.
std::vector<ChatMessage> build_generation_prompt(const ExamplePair& query,
                                                 const FewShotContext& context,
                                                 NliLabel target_label);

/// First non-empty line of a completion, trimmed of whitespace and one layer
/// of surrounding quotes. Returns nullopt when nothing is left.
std::optional<std::string> clean_hypothesis(std::string_view completion);

/// Throws vault::Error when the cleaned completion is empty.
std::string generate_hypothesis(EndpointClient& generator, const std::vector<ChatMessage>& prompt);

/// Keeps the candidate iff the target model gets it wrong. Classifier
/// failures drop the candidate with the reason in `note`.
AdversarialCandidate adversarial_filter(EndpointClient& target, AdversarialCandidate candidate);

/// Asks every judge (no short-circuit). Validated only when every verdict
/// names target_label; abstains and transport failures count as
/// disagreement.
AdversarialCandidate validate_unanimous(const EnsembleConfig& ensemble,
                                        AdversarialCandidate candidate);

/// The unanimity rule by itself.
bool unanimous(const std::vector<JudgeVerdict>& verdicts, NliLabel target);

}  // namespace vault
