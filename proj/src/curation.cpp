#include "vault/curation.hpp"

#include <spdlog/spdlog.h>

#include "vault/error.hpp"
#include "vault/io.hpp"
#include "vault/text.hpp"

namespace vault {

std::string_view stage_name(Stage stage) {
  switch (stage) {
    case Stage::kGenerated:
      return "generated";
    case Stage::kKeptByFilter:
      return "kept_by_filter";
    case Stage::kDroppedByFilter:
      return "dropped_by_filter";
    case Stage::kValidated:
      return "validated";
    case Stage::kRejected:
      return "rejected";
  }
  return "generated";
}

Stage parse_stage(std::string_view name) {
  for (Stage s : {Stage::kGenerated, Stage::kKeptByFilter, Stage::kDroppedByFilter,
                  Stage::kValidated, Stage::kRejected}) {
    if (stage_name(s) == name) {
      return s;
    }
  }
  throw ParseError("unknown candidate stage '" + std::string(name) + "'");
}

nlohmann::json to_json(const AdversarialCandidate& c) {
  nlohmann::json verdicts = nlohmann::json::array();
  for (const auto& v : c.verdicts) {
    verdicts.push_back(to_json(v));
  }
  return {{"id", c.id},
          {"round", c.round},
          {"premise_id", c.premise_id},
          {"premise", c.premise},
          {"target_label", label_name(c.target_label)},
          {"context_ids", c.context_ids},
          {"hypothesis", c.hypothesis},
          {"target_prediction", c.target_prediction
                                    ? nlohmann::json(label_name(*c.target_prediction))
                                    : nlohmann::json(nullptr)},
          {"verdicts", std::move(verdicts)},
          {"stage", stage_name(c.stage)},
          {"note", c.note}};
}

AdversarialCandidate candidate_from_json(const nlohmann::json& doc) {
  try {
    AdversarialCandidate c;
    c.id = doc.at("id").get<std::string>();
    c.round = doc.at("round").get<std::size_t>();
    c.premise_id = doc.at("premise_id").get<std::string>();
    c.premise = doc.at("premise").get<std::string>();
    c.target_label = parse_label(doc.at("target_label").get<std::string>());
    c.context_ids = doc.at("context_ids").get<std::vector<std::string>>();
    c.hypothesis = doc.at("hypothesis").get<std::string>();
    if (const auto& p = doc.at("target_prediction"); !p.is_null()) {
      c.target_prediction = parse_label(p.get<std::string>());
    }
    for (const auto& v : doc.at("verdicts")) {
      c.verdicts.push_back(verdict_from_json(v));
    }
    c.stage = parse_stage(doc.at("stage").get<std::string>());
    c.note = doc.value("note", "");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed candidate record: ") + e.what());
  }
}

std::string candidates_to_jsonl(const std::vector<AdversarialCandidate>& candidates) {
  std::string out;
  for (const auto& c : candidates) {
    out += to_json(c).dump();
    out += '\n';
  }
  return out;
}

std::vector<AdversarialCandidate> load_candidates(const std::filesystem::path& path) {
  std::vector<AdversarialCandidate> out;
  for_each_jsonl(path, [&](std::size_t line, const nlohmann::json& record) {
    try {
      out.push_back(candidate_from_json(record));
    } catch (const ParseError& e) {
      throw ParseError(std::string(e.what()) + " at line " + std::to_string(line));
    }
  });
  return out;
}

ExamplePair to_example(const AdversarialCandidate& c) {
  return {c.id, c.premise, c.hypothesis, c.target_label, "vault-r" + std::to_string(c.round)};
}

std::string_view instruction_verb(NliLabel label) {
  switch (label) {
    case NliLabel::kEntailment:
      return "entails";
    case NliLabel::kNeutral:
      return "is neutral with";
    case NliLabel::kContradiction:
      return "contradicts";
  }
  return "contradicts";
}

std::vector<ChatMessage> build_generation_prompt(const ExamplePair& query,
                                                 const FewShotContext& context,
                                                 NliLabel target_label) {
  if (!context.balanced()) {
    throw Error("few-shot context for '" + context.query_id + "' is not label-balanced");
  }
  std::string body;
  std::size_t shot_number = 0;
  for (NliLabel label : kAllLabels) {
    for (const auto& shot : context.shots) {
      if (shot.example.label != label) {
        continue;
      }
      body += "Shot " + std::to_string(++shot_number) + "\n";
      body += "Premise: " + shot.example.premise + "\n";
      body += "Label: " + std::string(label_name(label)) + ".\n";
      if (shot.example.hypothesis) {
        body += "Hypothesis: " + *shot.example.hypothesis + "\n";
      }
      body += "\n";
    }
  }
  body += "Premise: " + query.premise + "\n\n";
  body += "Now generate a one-sentence hypothesis that " + std::string(instruction_verb(target_label)) +
          " the premise above. Return only the hypothesis without narration.";
  return {ChatMessage{Role::kUser, std::move(body)}};
}

namespace {

bool strip_pair(std::string& text, std::string_view open, std::string_view close) {
  if (text.size() >= open.size() + close.size() && text.starts_with(open) && text.ends_with(close)) {
    text = trim(std::string_view(text).substr(open.size(), text.size() - open.size() - close.size()));
    return true;
  }
  return false;
}

}  // namespace

std::optional<std::string> clean_hypothesis(std::string_view completion) {
  std::string line;
  std::size_t start = 0;
  while (start <= completion.size()) {
    const auto end = completion.find('\n', start);
    line = trim(completion.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    if (!line.empty() || end == std::string_view::npos) {
      break;
    }
    start = end + 1;
  }
  strip_pair(line, "\"", "\"") || strip_pair(line, "'", "'") ||
      strip_pair(line, "\xE2\x80\x9C", "\xE2\x80\x9D") || strip_pair(line, "\xE2\x80\x98", "\xE2\x80\x99");
  if (line.empty()) {
    return std::nullopt;
  }
  return line;
}

std::string generate_hypothesis(EndpointClient& generator, const std::vector<ChatMessage>& prompt) {
  if (prompt.empty()) {
    throw Error("generation prompt is empty");
  }
  auto cleaned = clean_hypothesis(chat_complete(generator, prompt));
  if (!cleaned) {
    throw Error(generator.config().name + ": completion is empty after cleanup");
  }
  return *cleaned;
}

AdversarialCandidate adversarial_filter(EndpointClient& target, AdversarialCandidate candidate) {
  if (candidate.stage != Stage::kGenerated) {
    throw Error("candidate '" + candidate.id + "' is not in the generated stage");
  }
  try {
    candidate.target_prediction = classify_nli(target, candidate.premise, candidate.hypothesis);
  } catch (const Error& e) {
    spdlog::warn("{}: classifier failed, dropping: {}", candidate.id, e.what());
    candidate.stage = Stage::kDroppedByFilter;
    candidate.note = std::string("classifier error: ") + e.what();
    return candidate;
  }
  candidate.stage = *candidate.target_prediction != candidate.target_label ? Stage::kKeptByFilter
                                                                           : Stage::kDroppedByFilter;
  return candidate;
}

bool unanimous(const std::vector<JudgeVerdict>& verdicts, NliLabel target) {
  if (verdicts.empty()) {
    return false;
  }
  for (const auto& v : verdicts) {
    if (!v.predicted || *v.predicted != target) {
      return false;
    }
  }
  return true;
}

AdversarialCandidate validate_unanimous(const EnsembleConfig& ensemble,
                                        AdversarialCandidate candidate) {
  if (candidate.stage != Stage::kKeptByFilter) {
    throw Error("candidate '" + candidate.id + "' was not kept by the filter");
  }
  if (ensemble.judges.empty()) {
    throw Error("judge ensemble is empty");
  }
  candidate.verdicts.clear();
  for (const auto& judge : ensemble.judges) {
    try {
      candidate.verdicts.push_back(judge_label(*judge, candidate.premise, candidate.hypothesis));
    } catch (const Error& e) {
      spdlog::warn("{}: judge {} failed, counting as abstain: {}", candidate.id,
                   judge->config().name, e.what());
      candidate.verdicts.push_back({judge->config().name, std::nullopt, std::string("error: ") + e.what()});
      candidate.note = "judge error";
    }
  }
  candidate.stage =
      unanimous(candidate.verdicts, candidate.target_label) ? Stage::kValidated : Stage::kRejected;
  return candidate;
}

}  // namespace vault
