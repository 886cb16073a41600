#include "vault/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vault/error.hpp"
#include "vault/parallel.hpp"
#include "vault/text.hpp"

namespace vault {

std::string_view mode_name(RetrievalMode mode) {
  switch (mode) {
    case RetrievalMode::kSem:
      return "sem";
    case RetrievalMode::kLex:
      return "lex";
    case RetrievalMode::kComb:
      return "comb";
  }
  return "comb";
}

RetrievalMode parse_mode(std::string_view name) {
  if (name == "sem") return RetrievalMode::kSem;
  if (name == "lex") return RetrievalMode::kLex;
  if (name == "comb") return RetrievalMode::kComb;
  throw ParseError("unknown retrieval mode '" + std::string(name) + "' (expected sem, lex or comb)");
}

bool FewShotContext::balanced() const {
  const auto k = per_label_counts[0];
  return k > 0 && per_label_counts[1] == k && per_label_counts[2] == k && shots.size() == 3 * k;
}

std::vector<std::string> FewShotContext::shot_ids() const {
  std::vector<std::string> ids;
  ids.reserve(shots.size());
  for (const auto& shot : shots) {
    ids.push_back(shot.example.id);
  }
  return ids;
}

ZScores zscore(std::span<const double> scores) {
  if (scores.empty()) {
    throw Error("zscore of an empty list");
  }
  ZScores out;
  const double n = static_cast<double>(scores.size());
  out.mean = std::accumulate(scores.begin(), scores.end(), 0.0) / n;
  double sq = 0.0;
  for (double s : scores) {
    sq += (s - out.mean) * (s - out.mean);
  }
  out.stddev = std::sqrt(sq / n);
  out.values.resize(scores.size(), 0.0);
  if (out.stddev > 0.0) {
    for (std::size_t i = 0; i < scores.size(); ++i) {
      out.values[i] = (scores[i] - out.mean) / out.stddev;
    }
  }
  return out;
}

double combined_score(double alpha, double sem_normalized, double lex_normalized) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error("alpha must lie in [0, 1], got " + std::to_string(alpha));
  }
  return alpha * sem_normalized + (1.0 - alpha) * lex_normalized;
}

namespace {

/// Raw semantic and lexical scores for every pool member. Semantic values
/// are oriented so larger is better (distances negated) when `orient` is set.
struct PoolScores {
  std::vector<double> sem;
  std::vector<double> lex;
};

PoolScores score_pool(const ExamplePair& query, const LabeledCorpus& corpus,
                      std::span<const std::size_t> pool, const Bm25Index& index,
                      const EmbeddingStore& store, MetricKind metric, bool want_sem,
                      bool want_lex, bool orient) {
  PoolScores scores;
  if (want_sem) {
    const auto query_vec = store.get(query.id);
    const double sign = orient && !higher_is_better(metric) ? -1.0 : 1.0;
    scores.sem.reserve(pool.size());
    for (std::size_t i : pool) {
      scores.sem.push_back(sign * measure(metric, query_vec, store.get(corpus.at(i).id)));
    }
  }
  if (want_lex) {
    const auto tokens = tokenize(query.premise);
    const auto all = index.score_all(tokens);
    scores.lex.reserve(pool.size());
    for (std::size_t i : pool) {
      scores.lex.push_back(all[index.ordinal(corpus.at(i).id)]);
    }
  }
  return scores;
}

}  // namespace

FewShotContext retrieve_context(const ExamplePair& query, const LabeledCorpus& corpus,
                                const Bm25Index& index, const EmbeddingStore& store,
                                const FusionConfig& config, NormalizationStats* stats_out) {
  if (config.k < 1) {
    throw Error("k must be at least 1");
  }
  if (config.mode == RetrievalMode::kComb && !(config.alpha >= 0.0 && config.alpha <= 1.0)) {
    throw Error("alpha must lie in [0, 1]");
  }
  const auto query_index = corpus.index_of(query.id);

  std::vector<std::size_t> pool;
  pool.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (!query_index || i != *query_index) {
      pool.push_back(i);
    }
  }
  for (NliLabel label : kAllLabels) {
    auto eligible = corpus.partition_indices(label).size();
    if (query_index && corpus.at(*query_index).label == label) {
      --eligible;
    }
    if (eligible < config.k) {
      throw Error("label '" + std::string(label_name(label)) + "' has " + std::to_string(eligible) +
                  " eligible candidates, need k=" + std::to_string(config.k));
    }
  }

  const bool want_sem = config.mode != RetrievalMode::kLex;
  const bool want_lex = config.mode != RetrievalMode::kSem;
  const bool comb = config.mode == RetrievalMode::kComb;
  auto raw = score_pool(query, corpus, pool, index, store, config.metric, want_sem, want_lex,
                        /*orient=*/comb);

  std::vector<double> final_scores;
  bool higher_better = true;
  if (config.mode == RetrievalMode::kSem) {
    final_scores = std::move(raw.sem);
    higher_better = higher_is_better(config.metric);
  } else if (config.mode == RetrievalMode::kLex) {
    final_scores = std::move(raw.lex);
  } else {
    const auto sem = zscore(raw.sem);
    const auto lex = zscore(raw.lex);
    if (stats_out != nullptr) {
      *stats_out = {sem.mean, sem.stddev, lex.mean, lex.stddev};
    }
    final_scores.resize(pool.size());
    for (std::size_t j = 0; j < pool.size(); ++j) {
      final_scores[j] = combined_score(config.alpha, sem.values[j], lex.values[j]);
    }
  }

  std::array<std::vector<ScoredId>, 3> per_label;
  for (std::size_t j = 0; j < pool.size(); ++j) {
    const auto& ex = corpus.at(pool[j]);
    per_label[label_index(ex.label)].push_back({ex.id, final_scores[j]});
  }

  FewShotContext context;
  context.query_id = query.id;
  for (NliLabel label : kAllLabels) {
    auto top = select_top_k(std::move(per_label[label_index(label)]), config.k, higher_better);
    context.per_label_counts[label_index(label)] = top.size();
    for (auto& scored : top) {
      context.shots.push_back({*corpus.find(scored.id), scored.score});
    }
  }
  return context;
}

nlohmann::json to_json(const FewShotContext& context) {
  nlohmann::json shots = nlohmann::json::array();
  for (const auto& shot : context.shots) {
    auto record = vault::to_json(shot.example);
    record["score"] = shot.score;
    shots.push_back(std::move(record));
  }
  return {{"query_id", context.query_id}, {"shots", std::move(shots)}};
}

double roc_auc(std::span<const double> scores, const std::vector<bool>& relevant) {
  if (scores.size() != relevant.size()) {
    throw Error("roc_auc: scores and labels differ in length");
  }
  const std::size_t n = scores.size();
  const auto positives = static_cast<std::size_t>(std::count(relevant.begin(), relevant.end(), true));
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    throw Error("roc_auc needs at least one relevant and one non-relevant item");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of 1-based mid-ranks of the positives.
  double positive_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) {
      ++j;
    }
    const double mid_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t t = i; t <= j; ++t) {
      if (relevant[order[t]]) {
        positive_rank_sum += mid_rank;
      }
    }
    i = j + 1;
  }
  const double np = static_cast<double>(positives);
  const double nn = static_cast<double>(negatives);
  return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, const std::vector<bool>& relevant) {
  if (scores.size() != relevant.size()) {
    throw Error("roc_curve: scores and labels differ in length");
  }
  const auto positives = static_cast<double>(std::count(relevant.begin(), relevant.end(), true));
  const double negatives = static_cast<double>(relevant.size()) - positives;
  if (positives == 0 || negatives == 0) {
    throw Error("roc_curve needs at least one relevant and one non-relevant item");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<RocPoint> curve{{0.0, 0.0}};
  double tp = 0.0;
  double fp = 0.0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (relevant[order[i]] ? tp : fp) += 1.0;
    if (i + 1 == order.size() || scores[order[i + 1]] != scores[order[i]]) {
      curve.push_back({fp / negatives, tp / positives});
    }
  }
  return curve;
}

bool AlphaSweepResult::operator==(const AlphaSweepResult& other) const {
  if (grid.size() != other.grid.size()) {
    return false;
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i].alpha != other.grid[i].alpha || grid[i].auc != other.grid[i].auc) {
      return false;
    }
  }
  return best_alpha == other.best_alpha && best_auc == other.best_auc && pairs == other.pairs &&
         positives == other.positives;
}

std::vector<double> alpha_grid(double step) {
  if (!(step > 0.0 && step <= 1.0)) {
    throw Error("grid step must lie in (0, 1]");
  }
  const double steps = std::round(1.0 / step);
  if (std::abs(steps * step - 1.0) > 1e-9) {
    throw Error("grid step " + std::to_string(step) + " does not divide 1 evenly");
  }
  const auto n = static_cast<std::size_t>(steps);
  std::vector<double> grid(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    grid[i] = static_cast<double>(i) / static_cast<double>(n);
  }
  return grid;
}

AlphaSweepResult tune_alpha(const LabeledCorpus& eval_corpus, const Bm25Index& index,
                            const EmbeddingStore& store, double grid_step, MetricKind metric,
                            std::size_t workers, std::vector<RocPoint>* best_curve) {
  const auto grid = alpha_grid(grid_step);
  std::size_t labels_present = 0;
  for (NliLabel label : kAllLabels) {
    labels_present += eval_corpus.partition_indices(label).empty() ? 0 : 1;
  }
  if (labels_present < 2) {
    throw Error("alpha tuning needs at least two labels in the eval corpus");
  }

  // Queries and candidates both visited in id order, so the pooled pair list
  // is sorted by (query id, candidate id) regardless of scheduling.
  std::vector<std::size_t> by_id(eval_corpus.size());
  std::iota(by_id.begin(), by_id.end(), 0);
  std::sort(by_id.begin(), by_id.end(), [&](std::size_t a, std::size_t b) {
    return eval_corpus.at(a).id < eval_corpus.at(b).id;
  });

  struct QueryPairs {
    std::vector<double> sem;
    std::vector<double> lex;
    std::vector<bool> relevant;
  };
  std::vector<QueryPairs> per_query(by_id.size());
  parallel_for(by_id.size(), workers, [&](std::size_t q) {
    const auto& query = eval_corpus.at(by_id[q]);
    std::vector<std::size_t> pool;
    pool.reserve(by_id.size() - 1);
    for (std::size_t c : by_id) {
      if (c != by_id[q]) {
        pool.push_back(c);
      }
    }
    auto raw = score_pool(query, eval_corpus, pool, index, store, metric, true, true, true);
    auto& out = per_query[q];
    out.sem = zscore(raw.sem).values;
    out.lex = zscore(raw.lex).values;
    out.relevant.reserve(pool.size());
    for (std::size_t c : pool) {
      out.relevant.push_back(eval_corpus.at(c).label == query.label);
    }
  });

  std::vector<double> sem;
  std::vector<double> lex;
  std::vector<bool> relevant;
  for (auto& q : per_query) {
    sem.insert(sem.end(), q.sem.begin(), q.sem.end());
    lex.insert(lex.end(), q.lex.begin(), q.lex.end());
    relevant.insert(relevant.end(), q.relevant.begin(), q.relevant.end());
    q = {};
  }

  AlphaSweepResult result;
  result.pairs = sem.size();
  result.positives = static_cast<std::size_t>(std::count(relevant.begin(), relevant.end(), true));
  result.best_auc = -1.0;
  std::vector<double> combined(sem.size());
  for (double alpha : grid) {
    for (std::size_t i = 0; i < sem.size(); ++i) {
      combined[i] = combined_score(alpha, sem[i], lex[i]);
    }
    const double auc = roc_auc(combined, relevant);
    result.grid.push_back({alpha, auc});
    if (auc > result.best_auc) {
      result.best_auc = auc;
      result.best_alpha = alpha;
    }
  }
  if (best_curve != nullptr) {
    for (std::size_t i = 0; i < sem.size(); ++i) {
      combined[i] = combined_score(result.best_alpha, sem[i], lex[i]);
    }
    *best_curve = roc_curve(combined, relevant);
  }
  return result;
}

std::string sweep_to_jsonl(const AlphaSweepResult& result, double grid_step) {
  std::string out;
  for (const auto& point : result.grid) {
    out += nlohmann::json{{"alpha", point.alpha}, {"auc", point.auc}}.dump();
    out += '\n';
  }
  const nlohmann::json summary = {{"summary",
                                   {{"best_alpha", result.best_alpha},
                                    {"best_auc", result.best_auc},
                                    {"grid_step", grid_step},
                                    {"grid_points", result.grid.size()},
                                    {"pairs", result.pairs},
                                    {"positives", result.positives}}}};
  out += summary.dump();
  out += '\n';
  return out;
}

}  // namespace vault
