#include "vault/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "vault/error.hpp"
#include "vault/parallel.hpp"
#include "vault/ranking.hpp"
#include "vault/text.hpp"

namespace vault {

nlohmann::json to_json(const SimilarityReport& report) {
  return {{"metric", report.metric},
          {"names", report.names},
          {"matrix", report.matrix},
          {"warnings", report.warnings}};
}

std::string to_csv(const SimilarityReport& report) {
  std::string out = "dataset";
  for (const auto& name : report.names) {
    out += "," + name;
  }
  out += "\n";
  for (std::size_t i = 0; i < report.names.size(); ++i) {
    out += report.names[i];
    for (double v : report.matrix[i]) {
      out += "," + nlohmann::json(v).dump();
    }
    out += "\n";
  }
  return out;
}

std::vector<DatasetVector> tfidf_vectors(std::span<const LabeledCorpus> datasets,
                                         const std::vector<std::string>& names) {
  if (datasets.size() != names.size()) {
    throw Error("tfidf: got " + std::to_string(datasets.size()) + " datasets but " +
                std::to_string(names.size()) + " names");
  }
  std::vector<std::map<std::string, double>> counts(datasets.size());
  std::map<std::string, std::size_t> df;
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    for (const auto& ex : datasets[d].examples()) {
      for (auto& tok : tokenize(ex.premise)) {
        counts[d][tok] += 1.0;
      }
      if (ex.hypothesis) {
        for (auto& tok : tokenize(*ex.hypothesis)) {
          counts[d][tok] += 1.0;
        }
      }
    }
    for (const auto& [term, _] : counts[d]) {
      ++df[term];
    }
  }
  const double n = static_cast<double>(datasets.size());
  std::vector<DatasetVector> out(datasets.size());
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    out[d].name = names[d];
    for (const auto& [term, tf] : counts[d]) {
      out[d].tfidf[term] = tf * std::log(n / static_cast<double>(df[term]));
    }
  }
  return out;
}

namespace {

double sparse_dot(const std::map<std::string, double>& a, const std::map<std::string, double>& b) {
  double sum = 0.0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      sum += ia->second * ib->second;
      ++ia;
      ++ib;
    }
  }
  return sum;
}

}  // namespace

SimilarityReport tfidf_matrix(std::span<const LabeledCorpus> datasets,
                              const std::vector<std::string>& names) {
  if (datasets.size() < 2) {
    throw Error("tfidf_matrix needs at least two datasets");
  }
  const auto vectors = tfidf_vectors(datasets, names);
  const std::size_t n = vectors.size();
  std::vector<double> norms(n);
  SimilarityReport report{names, std::vector<std::vector<double>>(n, std::vector<double>(n, 0.0)),
                          "tfidf_cosine", {}};
  for (std::size_t i = 0; i < n; ++i) {
    norms[i] = std::sqrt(sparse_dot(vectors[i].tfidf, vectors[i].tfidf));
    if (norms[i] == 0.0) {
      report.warnings.push_back("dataset '" + names[i] +
                                "' has an all-zero TF-IDF vector; its row and column are 0");
      spdlog::warn("{}", report.warnings.back());
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (norms[i] == 0.0) {
      continue;
    }
    report.matrix[i][i] = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (norms[j] == 0.0) {
        continue;
      }
      const double v = sparse_dot(vectors[i].tfidf, vectors[j].tfidf) / (norms[i] * norms[j]);
      report.matrix[i][j] = v;
      report.matrix[j][i] = v;
    }
  }
  return report;
}

namespace {

double mean_best_match(const TokenEmbeddings& from, const TokenEmbeddings& to) {
  double total = 0.0;
  for (const auto& x : from) {
    double best = -1.0;
    for (const auto& y : to) {
      best = std::max(best, measure(MetricKind::kCosine, x, y));
    }
    total += best;
  }
  return total / static_cast<double>(from.size());
}

}  // namespace

BertScore bertscore_f1(const TokenEmbeddings& a, const TokenEmbeddings& b) {
  if (a.empty() || b.empty()) {
    throw Error("bertscore_f1 needs two non-empty token sequences");
  }
  BertScore s;
  s.precision = mean_best_match(a, b);
  s.recall = mean_best_match(b, a);
  const double denom = s.precision + s.recall;
  s.f1 = denom == 0.0 ? 0.0 : 2.0 * s.precision * s.recall / denom;
  return s;
}

SimilarityReport bertscore_matrix(const std::vector<TokenEmbeddings>& datasets,
                                  const std::vector<std::string>& names) {
  if (datasets.size() != names.size()) {
    throw Error("bertscore_matrix: datasets and names differ in length");
  }
  const std::size_t n = datasets.size();
  SimilarityReport report{names, std::vector<std::vector<double>>(n, std::vector<double>(n, 0.0)),
                          "bertscore_f1", {}};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double f1 = bertscore_f1(datasets[i], datasets[j]).f1;
      report.matrix[i][j] = f1;
      report.matrix[j][i] = f1;
    }
  }
  return report;
}

LengthStats length_stats(const LabeledCorpus& corpus) {
  LengthStats stats;
  double chars = 0.0;
  double words = 0.0;
  for (const auto& ex : corpus.examples()) {
    if (!ex.hypothesis) {
      continue;
    }
    chars += static_cast<double>(utf8_length(*ex.hypothesis));
    words += static_cast<double>(tokenize(*ex.hypothesis).size());
    ++stats.count;
  }
  if (stats.count == 0) {
    throw Error("length_stats: corpus has no hypotheses");
  }
  stats.mean_chars = chars / static_cast<double>(stats.count);
  stats.mean_words = words / static_cast<double>(stats.count);
  return stats;
}

std::vector<std::pair<std::string, std::size_t>> top_terms(const LabeledCorpus& corpus,
                                                           std::size_t n) {
  if (n == 0) {
    throw Error("top_terms needs n >= 1");
  }
  const auto& stop = stopwords();
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& ex : corpus.examples()) {
    if (!ex.hypothesis) {
      continue;
    }
    for (auto& tok : tokenize(*ex.hypothesis)) {
      if (!stop.contains(tok)) {
        ++counts[std::move(tok)];
      }
    }
  }
  std::vector<std::pair<std::string, std::size_t>> out(counts.begin(), counts.end());
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (out.size() > n) {
    out.resize(n);
  }
  return out;
}

std::vector<std::pair<MetricKind, double>> metric_benchmark(const EmbeddingStore& store,
                                                            const LabeledCorpus& corpus,
                                                            std::size_t k, std::size_t workers) {
  if (k == 0) {
    throw Error("metric_benchmark needs k >= 1");
  }
  if (corpus.size() <= k) {
    throw Error("metric_benchmark needs more than k examples");
  }
  std::vector<std::span<const float>> vectors;
  vectors.reserve(corpus.size());
  for (const auto& ex : corpus.examples()) {
    vectors.push_back(store.get(ex.id));
  }
  std::vector<std::pair<MetricKind, double>> out;
  for (MetricKind metric : kAllMetrics) {
    std::vector<double> per_query(corpus.size());
    parallel_for(corpus.size(), workers, [&](std::size_t q) {
      std::vector<ScoredId> scored;
      scored.reserve(corpus.size() - 1);
      for (std::size_t j = 0; j < corpus.size(); ++j) {
        if (j != q) {
          scored.push_back({corpus.at(j).id, measure(metric, vectors[q], vectors[j])});
        }
      }
      const auto top = select_top_k(std::move(scored), k, higher_is_better(metric));
      std::size_t hits = 0;
      for (const auto& s : top) {
        hits += corpus.find(s.id)->label == corpus.at(q).label ? 1 : 0;
      }
      per_query[q] = static_cast<double>(hits) / static_cast<double>(k);
    });
    double total = 0.0;
    for (double v : per_query) {
      total += v;
    }
    out.emplace_back(metric, total / static_cast<double>(corpus.size()));
  }
  return out;
}

}  // namespace vault
