#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vault/corpus.hpp"
#include "vault/embedding_store.hpp"
#include "vault/lexical_index.hpp"

namespace vault {

enum class RetrievalMode { kSem, kLex, kComb };

std::string_view mode_name(RetrievalMode mode);
RetrievalMode parse_mode(std::string_view name);

inline constexpr double kDefaultAlpha = 0.83;
inline constexpr std::size_t kDefaultShotsPerLabel = 1;

struct FusionConfig {
  RetrievalMode mode = RetrievalMode::kComb;
  double alpha = kDefaultAlpha;  // read only in comb mode
  std::size_t k = kDefaultShotsPerLabel;
  Bm25Params bm25;
  MetricKind metric = MetricKind::kCosine;
};

struct Shot {
  ExamplePair example;
  double score = 0.0;
};

/// 3k shots, k per label, ordered entailment, neutral, contradiction and
/// within a label by (score desc, id asc).
struct FewShotContext {
  std::string query_id;
  std::vector<Shot> shots;
  std::array<std::size_t, 3> per_label_counts{};

  bool balanced() const;
  std::vector<std::string> shot_ids() const;
};

struct NormalizationStats {
  double mu_sem = 0.0;
  double sigma_sem = 0.0;
  double mu_lex = 0.0;
  double sigma_lex = 0.0;
};

struct ZScores {
  std::vector<double> values;
  double mean = 0.0;
  double stddev = 0.0;  // population
};

/// (s - mean) / stddev with the population stddev; a zero stddev maps every
/// score to 0. Throws on empty input.
ZScores zscore(std::span<const double> scores);

/// alpha * sem + (1 - alpha) * lex; throws unless 0 <= alpha <= 1.
double combined_score(double alpha, double sem_normalized, double lex_normalized);

/// Label-balanced few-shot retrieval. Every example in `corpus` except the
/// query itself is a candidate; in comb mode both score families are
/// z-normalized over that whole pool before interpolation. Throws if a label
/// has fewer than k eligible candidates.
FewShotContext retrieve_context(const ExamplePair& query, const LabeledCorpus& corpus,
                                const Bm25Index& index, const EmbeddingStore& store,
                                const FusionConfig& config,
                                NormalizationStats* stats_out = nullptr);

nlohmann::json to_json(const FewShotContext& context);

/// Rank-statistic (Mann-Whitney) AUC with mid-ranks for ties. Needs at least
/// one relevant and one non-relevant item.
double roc_auc(std::span<const double> scores, const std::vector<bool>& relevant);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

/// ROC curve points from (0,0) to (1,1), one per distinct score threshold.
std::vector<RocPoint> roc_curve(std::span<const double> scores, const std::vector<bool>& relevant);

struct AlphaPoint {
  double alpha = 0.0;
  double auc = 0.0;
};

struct AlphaSweepResult {
  std::vector<AlphaPoint> grid;
  double best_alpha = 0.0;
  double best_auc = 0.0;
  std::size_t pairs = 0;
  std::size_t positives = 0;

  bool operator==(const AlphaSweepResult& other) const;
};

/// Grid values i / n for i = 0..n where n = round(1 / step); the step must
/// divide 1 evenly.
std::vector<double> alpha_grid(double step);

/// Pooled ROC AUC of the combined score over every (query, candidate) pair of
/// the eval corpus, for each alpha on the grid. Relevance is label equality.
/// Per-query normalization matches retrieve_context. Ties in AUC go to the
/// smaller alpha.
AlphaSweepResult tune_alpha(const LabeledCorpus& eval_corpus, const Bm25Index& index,
                            const EmbeddingStore& store, double grid_step,
                            MetricKind metric = MetricKind::kCosine, std::size_t workers = 1,
                            std::vector<RocPoint>* best_curve = nullptr);

/// {"alpha","auc"} per grid point, then a {"summary": {...}} record.
std::string sweep_to_jsonl(const AlphaSweepResult& result, double grid_step);

}  // namespace vault
