#include "vault/corpus.hpp"

#include "vault/error.hpp"
#include "vault/io.hpp"
#include "vault/text.hpp"

namespace vault {

std::string_view label_name(NliLabel label) {
  switch (label) {
    case NliLabel::kEntailment:
      return "entailment";
    case NliLabel::kNeutral:
      return "neutral";
    case NliLabel::kContradiction:
      return "contradiction";
  }
  return "unknown";
}

std::optional<NliLabel> try_parse_label(std::string_view text) {
  const std::string lowered = to_lower(trim(text));
  if (lowered == "entailment" || lowered == "entail") {
    return NliLabel::kEntailment;
  }
  if (lowered == "neutral") {
    return NliLabel::kNeutral;
  }
  if (lowered == "contradiction" || lowered == "contradict") {
    return NliLabel::kContradiction;
  }
  return std::nullopt;
}

NliLabel parse_label(std::string_view text) {
  if (auto label = try_parse_label(text)) {
    return *label;
  }
  throw ParseError("unknown label '" + std::string(text) + "'");
}

nlohmann::json to_json(const ExamplePair& example) {
  nlohmann::json out;
  out["id"] = example.id;
  out["premise"] = example.premise;
  out["hypothesis"] = example.hypothesis ? nlohmann::json(*example.hypothesis) : nlohmann::json(nullptr);
  out["label"] = label_name(example.label);
  out["source"] = example.source;
  return out;
}

LabeledCorpus LabeledCorpus::from_examples(std::vector<ExamplePair> examples) {
  LabeledCorpus corpus;
  corpus.by_id_.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    if (ex.premise.empty()) {
      throw ParseError("empty premise for id '" + ex.id + "'");
    }
    if (!corpus.by_id_.emplace(ex.id, i).second) {
      throw ParseError("duplicate id '" + ex.id + "'");
    }
    corpus.partitions_[label_index(ex.label)].push_back(i);
  }
  corpus.examples_ = std::move(examples);
  return corpus;
}

const ExamplePair* LabeledCorpus::find(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  return it == by_id_.end() ? nullptr : &examples_[it->second];
}

std::optional<std::size_t> LabeledCorpus::index_of(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  if (it == by_id_.end()) {
    return std::nullopt;
  }
  return it->second;
}

std::vector<ExamplePair> partition(const LabeledCorpus& corpus, NliLabel label) {
  std::vector<ExamplePair> out;
  for (std::size_t index : corpus.partition_indices(label)) {
    out.push_back(corpus.at(index));
  }
  return out;
}

namespace {

std::optional<std::string> optional_string(const nlohmann::json& record, const char* key,
                                           std::size_t line) {
  auto it = record.find(key);
  if (it == record.end() || it->is_null()) {
    return std::nullopt;
  }
  if (!it->is_string()) {
    throw ParseError(std::string("field '") + key + "' must be a string at line " +
                     std::to_string(line));
  }
  return it->get<std::string>();
}

}  // namespace

LabeledCorpus load_jsonl(const std::filesystem::path& path, std::string default_source) {
  if (default_source.empty()) {
    default_source = path.stem().string();
  }
  std::vector<ExamplePair> examples;
  std::unordered_map<std::string, std::size_t> seen;
  for_each_jsonl(path, [&](std::size_t line, const nlohmann::json& record) {
    ExamplePair ex;
    auto premise = optional_string(record, "premise", line);
    if (!premise || premise->empty()) {
      throw ParseError("missing premise at line " + std::to_string(line));
    }
    ex.premise = std::move(*premise);

    auto label_text = optional_string(record, "label", line);
    if (!label_text) {
      throw ParseError("missing label at line " + std::to_string(line));
    }
    auto label = try_parse_label(*label_text);
    if (!label) {
      throw ParseError("unknown label '" + *label_text + "' at line " + std::to_string(line));
    }
    ex.label = *label;

    ex.hypothesis = optional_string(record, "hypothesis", line);
    if (ex.hypothesis && ex.hypothesis->empty()) {
      ex.hypothesis.reset();
    }
    ex.source = optional_string(record, "source", line).value_or(default_source);
    ex.id = optional_string(record, "id", line).value_or(ex.source + "-" + std::to_string(line));

    if (auto [it, inserted] = seen.emplace(ex.id, line); !inserted) {
      throw ParseError("duplicate id '" + ex.id + "' at line " + std::to_string(line) +
                       " (first seen at line " + std::to_string(it->second) + ")");
    }
    examples.push_back(std::move(ex));
  });
  return LabeledCorpus::from_examples(std::move(examples));
}

std::string to_jsonl(const std::vector<ExamplePair>& examples) {
  std::string out;
  for (const auto& ex : examples) {
    out += to_json(ex).dump();
    out += '\n';
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<ExamplePair>& examples) {
  write_file_atomic(path, to_jsonl(examples));
}

}  // namespace vault
