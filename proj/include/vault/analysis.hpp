#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vault/corpus.hpp"
#include "vault/embedding_store.hpp"

namespace vault {

/// Version tag of the shipped English stopword list.
inline constexpr const char* kStopwordListVersion = "vault-en-1";
const std::unordered_set<std::string>& stopwords();

struct DatasetVector {
  std::string name;
  std::map<std::string, double> tfidf;
};

struct SimilarityReport {
  std::vector<std::string> names;
  std::vector<std::vector<double>> matrix;
  std::string metric;
  std::vector<std::string> warnings;
};

nlohmann::json to_json(const SimilarityReport& report);
/// Header row of names, then one row per dataset.
std::string to_csv(const SimilarityReport& report);

/// TF is the raw count of each token over a dataset's premises and
/// hypotheses; weight = TF * ln(N / DF) with N the number of datasets.
std::vector<DatasetVector> tfidf_vectors(std::span<const LabeledCorpus> datasets,
                                         const std::vector<std::string>& names);

/// Cosine between TF-IDF vectors. A dataset whose vector is all zero gets a
/// zero row and column (diagonal included) and a warning. Needs >= 2 datasets.
SimilarityReport tfidf_matrix(std::span<const LabeledCorpus> datasets,
                              const std::vector<std::string>& names);

struct BertScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

using TokenEmbeddings = std::vector<std::vector<float>>;

/// Greedy cosine alignment without IDF weighting. P averages over the tokens
/// of `a`, R over the tokens of `b`.
BertScore bertscore_f1(const TokenEmbeddings& a, const TokenEmbeddings& b);

/// Pairwise F1 where each dataset is represented by one bag of token
/// embeddings.
SimilarityReport bertscore_matrix(const std::vector<TokenEmbeddings>& datasets,
                                  const std::vector<std::string>& names);

struct LengthStats {
  double mean_chars = 0.0;  // Unicode scalar values
  double mean_words = 0.0;  // tokenizer tokens
  std::size_t count = 0;
};

/// Over every non-null hypothesis; throws if there are none.
LengthStats length_stats(const LabeledCorpus& corpus);

/// Most frequent hypothesis tokens not in stopwords(), ties by term.
std::vector<std::pair<std::string, std::size_t>> top_terms(const LabeledCorpus& corpus,
                                                           std::size_t n);

/// label-match@k per metric: for every query, the fraction of its k nearest
/// neighbours (query excluded) that share its label, averaged over queries.
std::vector<std::pair<MetricKind, double>> metric_benchmark(const EmbeddingStore& store,
                                                            const LabeledCorpus& corpus,
                                                            std::size_t k,
                                                            std::size_t workers = 1);

}  // namespace vault
