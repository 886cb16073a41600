#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace vault {

enum class NliLabel { kEntailment = 0, kNeutral = 1, kContradiction = 2 };

inline constexpr std::array<NliLabel, 3> kAllLabels = {
    NliLabel::kEntailment, NliLabel::kNeutral, NliLabel::kContradiction};

std::string_view label_name(NliLabel label);

/// Case-insensitive; accepts "entail"/"entailment", "neutral",
/// "contradict"/"contradiction". Throws ParseError("unknown label '...'").
NliLabel parse_label(std::string_view text);
std::optional<NliLabel> try_parse_label(std::string_view text);

inline std::size_t label_index(NliLabel label) { return static_cast<std::size_t>(label); }

struct ExamplePair {
  std::string id;
  std::string premise;
  std::optional<std::string> hypothesis;
  NliLabel label = NliLabel::kEntailment;
  std::string source;

  bool operator==(const ExamplePair&) const = default;
};

nlohmann::json to_json(const ExamplePair& example);

/// A labeled NLI corpus. Immutable once built; iteration follows insertion
/// order and every id lives in exactly one label partition.
class LabeledCorpus {
 public:
  LabeledCorpus() = default;

  /// Validates unique ids and non-empty premises.
  static LabeledCorpus from_examples(std::vector<ExamplePair> examples);

  const std::vector<ExamplePair>& examples() const noexcept { return examples_; }
  std::size_t size() const noexcept { return examples_.size(); }
  bool empty() const noexcept { return examples_.empty(); }

  const ExamplePair& at(std::size_t index) const { return examples_.at(index); }
  const ExamplePair* find(std::string_view id) const;
  std::optional<std::size_t> index_of(std::string_view id) const;

  /// Positions (into examples()) of the records carrying `label`.
  const std::vector<std::size_t>& partition_indices(NliLabel label) const {
    return partitions_[label_index(label)];
  }

  bool operator==(const LabeledCorpus& other) const { return examples_ == other.examples_; }

 private:
  std::vector<ExamplePair> examples_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::array<std::vector<std::size_t>, 3> partitions_;
};

/// The D_y' slice in stable corpus order.
std::vector<ExamplePair> partition(const LabeledCorpus& corpus, NliLabel label);

/// Loads corpus JSONL. Records without an id receive "{source}-{line}";
/// records without a source receive `default_source` (the file stem when
/// empty).
LabeledCorpus load_jsonl(const std::filesystem::path& path, std::string default_source = {});

std::string to_jsonl(const std::vector<ExamplePair>& examples);
void write_jsonl(const std::filesystem::path& path, const std::vector<ExamplePair>& examples);

}  // namespace vault
