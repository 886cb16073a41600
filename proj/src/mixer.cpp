#include "vault/mixer.hpp"

#include <charconv>
#include <limits>
#include <unordered_set>

#include "vault/error.hpp"
#include "vault/io.hpp"
#include "vault/text.hpp"

namespace vault {

std::uint64_t SplitMix64::next() {
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t SplitMix64::below(std::uint64_t bound) {
  if (bound == 0) {
    throw Error("SplitMix64::below needs a positive bound");
  }
  // Reject the top sliver so every residue is equally likely.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x = next();
  while (x >= limit) {
    x = next();
  }
  return x % bound;
}

namespace {

std::uint64_t parse_count(std::string_view text, std::string_view whole) {
  std::uint64_t value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end || text.empty()) {
    throw ParseError("invalid mixing ratio '" + std::string(whole) + "'");
  }
  return value;
}

}  // namespace

MixingRatio MixingRatio::parse(std::string_view text) {
  const std::string trimmed = trim(text);
  if (to_lower(trimmed) == "all") {
    return {0, 1, true};
  }
  const auto colon = trimmed.find(':');
  if (colon == std::string::npos) {
    throw ParseError("invalid mixing ratio '" + std::string(text) + "', expected orig:adv");
  }
  MixingRatio ratio{parse_count(std::string_view(trimmed).substr(0, colon), text),
                    parse_count(std::string_view(trimmed).substr(colon + 1), text), false};
  if (ratio.adv_parts == 0) {
    throw ParseError("invalid mixing ratio '" + std::string(text) + "', adversarial parts must be positive");
  }
  return ratio;
}

std::string MixingRatio::to_string() const {
  return all_originals ? "all" : std::to_string(orig_parts) + ":" + std::to_string(adv_parts);
}

std::string MixingRatio::slug() const {
  return all_originals ? "all" : std::to_string(orig_parts) + "to" + std::to_string(adv_parts);
}

nlohmann::json to_json(const MixManifest& m) {
  return {{"ratio", m.ratio},     {"n_orig", m.n_orig},   {"n_adv", m.n_adv},
          {"n_total", m.n_total()}, {"seed", m.seed},     {"sources", m.sources},
          {"rounded", m.rounded}};
}

std::size_t required_originals(const MixingRatio& ratio, std::size_t n_adv,
                               std::size_t n_available) {
  if (ratio.all_originals) {
    return n_available;
  }
  return static_cast<std::size_t>(static_cast<unsigned __int128>(n_adv) * ratio.orig_parts /
                                  ratio.adv_parts);
}

MixedDataset mix(const LabeledCorpus& originals, const std::vector<ExamplePair>& adversarial,
                 const MixingRatio& ratio, std::uint64_t seed, std::vector<std::string> sources) {
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < originals.size(); ++i) {
    if (originals.at(i).hypothesis) {
      pool.push_back(i);
    }
  }
  const std::size_t n_orig = required_originals(ratio, adversarial.size(), pool.size());
  if (n_orig > pool.size()) {
    throw Error("insufficient originals for ratio " + ratio.to_string() + ": need " +
                std::to_string(n_orig) + ", have " + std::to_string(pool.size()));
  }

  SplitMix64 rng(seed);
  if (!ratio.all_originals) {
    for (std::size_t i = 0; i < n_orig; ++i) {
      std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
    }
  }

  MixedDataset out;
  out.records.reserve(adversarial.size() + n_orig);
  std::unordered_set<std::string> seen;
  for (const auto& record : adversarial) {
    if (!seen.insert(record.id).second) {
      throw Error("duplicate id '" + record.id + "' in adversarial records");
    }
    out.records.push_back(record);
  }
  for (std::size_t i = 0; i < n_orig; ++i) {
    const auto& record = originals.at(pool[i]);
    if (!seen.insert(record.id).second) {
      throw Error("original id '" + record.id + "' collides with an adversarial id");
    }
    out.records.push_back(record);
  }
  shuffle(out.records, rng);

  out.manifest.ratio = ratio.to_string();
  out.manifest.n_orig = n_orig;
  out.manifest.n_adv = adversarial.size();
  out.manifest.seed = seed;
  out.manifest.sources = std::move(sources);
  out.manifest.rounded =
      !ratio.all_originals && (adversarial.size() * ratio.orig_parts) % ratio.adv_parts != 0;
  return out;
}

void emit_training_file(const MixedDataset& dataset, const std::filesystem::path& path) {
  if (dataset.records.empty()) {
    throw Error("refusing to write an empty training file: " + path.string());
  }
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  write_file_atomic(path, to_jsonl(dataset.records));
  write_file_atomic(path.parent_path() / "manifest.json", to_json(dataset.manifest).dump(2) + "\n");
}

}  // namespace vault
