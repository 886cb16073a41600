#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "vault/corpus.hpp"
#include "vault/ranking.hpp"

namespace vault {

struct Bm25Params {
  double k1 = 1.5;
  double b = 0.75;

  bool operator==(const Bm25Params&) const = default;
};

struct Posting {
  std::uint32_t doc = 0;  // ordinal into doc_ids()
  std::uint32_t tf = 0;

  bool operator==(const Posting&) const = default;
};

/// Okapi BM25 over corpus premises.
///
/// IDF(t) = ln(1 + (N - df + 0.5) / (df + 0.5)), which keeps every term
/// contribution non-negative. Query tokens are summed per occurrence, so a
/// repeated query term counts twice.
class Bm25Index {
 public:
  /// Throws vault::Error on an empty corpus.
  static Bm25Index build(const LabeledCorpus& corpus, Bm25Params params = {});

  static Bm25Index from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;

  double score(std::string_view query, std::string_view doc_id) const;
  double score_tokens(std::span<const std::string> query_tokens, std::uint32_t doc) const;

  /// Scores for every indexed document, indexed by ordinal.
  std::vector<double> score_all(std::span<const std::string> query_tokens) const;

  /// Top `k` of `candidates` by (score desc, id asc).
  std::vector<ScoredId> top_k(std::string_view query, std::span<const std::string> candidates,
                              std::size_t k) const;

  double idf(std::string_view term) const;

  const Bm25Params& params() const noexcept { return params_; }
  std::size_t doc_count() const noexcept { return doc_ids_.size(); }
  double avgdl() const noexcept { return avgdl_; }
  const std::vector<std::string>& doc_ids() const noexcept { return doc_ids_; }
  const std::vector<std::uint32_t>& doc_lengths() const noexcept { return doc_lengths_; }
  const std::map<std::string, std::vector<Posting>, std::less<>>& postings() const noexcept {
    return postings_;
  }
  std::uint32_t ordinal(std::string_view doc_id) const;

 private:
  void finalize();

  Bm25Params params_;
  std::vector<std::string> doc_ids_;
  std::unordered_map<std::string, std::uint32_t> ordinals_;
  std::vector<std::uint32_t> doc_lengths_;
  std::map<std::string, std::vector<Posting>, std::less<>> postings_;
  double avgdl_ = 0.0;
};

/// Free-function spellings of the index operations.
Bm25Index build_index(const LabeledCorpus& corpus, Bm25Params params = {});
double bm25_score(const Bm25Index& index, std::string_view query, std::string_view doc_id);
std::vector<ScoredId> top_k_lexical(const Bm25Index& index, std::string_view query,
                                    std::span<const std::string> candidates, std::size_t k);

}  // namespace vault
