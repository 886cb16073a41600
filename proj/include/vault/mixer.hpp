#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vault/corpus.hpp"

namespace vault {

/// splitmix64: a 64-bit state advanced by a Weyl increment and finalized by
/// two xor-shift-multiply rounds. Small, seedable, identical on every
/// platform.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next();
  /// Uniform in [0, bound) by rejection; bound must be positive.
  std::uint64_t below(std::uint64_t bound);

 private:
  std::uint64_t state_;
};

/// Fisher-Yates, swapping from the back.
template <typename T>
void shuffle(std::vector<T>& items, SplitMix64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[rng.below(i)]);
  }
}

/// orig_parts originals for every adv_parts adversarial records. all_originals
/// keeps the whole original corpus (the D ∪ D_adv variant).
struct MixingRatio {
  std::uint64_t orig_parts = 1;
  std::uint64_t adv_parts = 4;
  bool all_originals = false;

  static MixingRatio parse(std::string_view text);  // "1:4", "0:1", "all"
  std::string to_string() const;                     // "1:4" or "all"
  /// File-name form: "1to4" or "all".
  std::string slug() const;

  bool operator==(const MixingRatio&) const = default;
};

struct MixManifest {
  std::string ratio;
  std::size_t n_orig = 0;
  std::size_t n_adv = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> sources;
  bool rounded = false;  // n_adv * orig_parts was not divisible by adv_parts

  std::size_t n_total() const { return n_orig + n_adv; }
  bool operator==(const MixManifest&) const = default;
};

nlohmann::json to_json(const MixManifest& manifest);

struct MixedDataset {
  std::vector<ExamplePair> records;
  MixManifest manifest;
};

/// Number of originals the ratio asks for given n_adv adversarial records.
std::size_t required_originals(const MixingRatio& ratio, std::size_t n_adv,
                               std::size_t n_available);

/// Every adversarial record plus floor(n_adv * orig / adv) originals sampled
/// without replacement, all shuffled. Only originals with a hypothesis are
/// eligible. Sampling and shuffling share one SplitMix64 stream seeded with
/// `seed`.
MixedDataset mix(const LabeledCorpus& originals, const std::vector<ExamplePair>& adversarial,
                 const MixingRatio& ratio, std::uint64_t seed,
                 std::vector<std::string> sources = {});

/// Writes the records as corpus JSONL to `path` and the manifest to
/// `manifest.json` next to it. Throws on an empty dataset.
void emit_training_file(const MixedDataset& dataset, const std::filesystem::path& path);

}  // namespace vault
