#include "vault/lexical_index.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vault/error.hpp"
#include "vault/text.hpp"

namespace vault {

Bm25Index Bm25Index::build(const LabeledCorpus& corpus, Bm25Params params) {
  if (corpus.empty()) {
    throw Error("cannot build a BM25 index over an empty corpus");
  }
  Bm25Index index;
  index.params_ = params;
  index.doc_ids_.reserve(corpus.size());
  index.doc_lengths_.reserve(corpus.size());
  for (const auto& ex : corpus.examples()) {
    const auto doc = static_cast<std::uint32_t>(index.doc_ids_.size());
    const auto tokens = tokenize(ex.premise);
    index.doc_ids_.push_back(ex.id);
    index.doc_lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));

    std::map<std::string_view, std::uint32_t> counts;
    for (const auto& token : tokens) {
      ++counts[token];
    }
    for (const auto& [term, tf] : counts) {
      auto it = index.postings_.find(term);
      if (it == index.postings_.end()) {
        it = index.postings_.emplace(std::string(term), std::vector<Posting>{}).first;
      }
      it->second.push_back({doc, tf});
    }
  }
  index.finalize();
  return index;
}

void Bm25Index::finalize() {
  ordinals_.clear();
  ordinals_.reserve(doc_ids_.size());
  for (std::uint32_t i = 0; i < doc_ids_.size(); ++i) {
    ordinals_.emplace(doc_ids_[i], i);
  }
  const double total = std::accumulate(doc_lengths_.begin(), doc_lengths_.end(), 0.0);
  avgdl_ = doc_ids_.empty() ? 0.0 : total / static_cast<double>(doc_ids_.size());
}

std::uint32_t Bm25Index::ordinal(std::string_view doc_id) const {
  auto it = ordinals_.find(std::string(doc_id));
  if (it == ordinals_.end()) {
    throw NotFoundError("document '" + std::string(doc_id) + "' is not indexed");
  }
  return it->second;
}

double Bm25Index::idf(std::string_view term) const {
  auto it = postings_.find(term);
  if (it == postings_.end()) {
    return 0.0;
  }
  const double n = static_cast<double>(doc_ids_.size());
  const double df = static_cast<double>(it->second.size());
  return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

double Bm25Index::score_tokens(std::span<const std::string> query_tokens, std::uint32_t doc) const {
  const double k1 = params_.k1;
  const double b = params_.b;
  const double length_norm =
      avgdl_ > 0.0 ? 1.0 - b + b * static_cast<double>(doc_lengths_[doc]) / avgdl_ : 1.0 - b;
  double total = 0.0;
  for (const auto& term : query_tokens) {
    auto it = postings_.find(term);
    if (it == postings_.end()) {
      continue;
    }
    const auto& list = it->second;
    auto hit = std::lower_bound(list.begin(), list.end(), doc,
                                [](const Posting& p, std::uint32_t d) { return p.doc < d; });
    if (hit == list.end() || hit->doc != doc) {
      continue;
    }
    const double tf = hit->tf;
    total += idf(term) * tf * (k1 + 1.0) / (tf + k1 * length_norm);
  }
  return total;
}

double Bm25Index::score(std::string_view query, std::string_view doc_id) const {
  const auto tokens = tokenize(query);
  return score_tokens(tokens, ordinal(doc_id));
}

std::vector<double> Bm25Index::score_all(std::span<const std::string> query_tokens) const {
  std::vector<double> scores(doc_ids_.size(), 0.0);
  const double k1 = params_.k1;
  const double b = params_.b;
  for (const auto& term : query_tokens) {
    auto it = postings_.find(term);
    if (it == postings_.end()) {
      continue;
    }
    const double term_idf = idf(term);
    for (const auto& posting : it->second) {
      const double tf = posting.tf;
      const double length_norm =
          avgdl_ > 0.0 ? 1.0 - b + b * static_cast<double>(doc_lengths_[posting.doc]) / avgdl_
                       : 1.0 - b;
      scores[posting.doc] += term_idf * tf * (k1 + 1.0) / (tf + k1 * length_norm);
    }
  }
  return scores;
}

std::vector<ScoredId> Bm25Index::top_k(std::string_view query,
                                       std::span<const std::string> candidates,
                                       std::size_t k) const {
  const auto tokens = tokenize(query);
  std::vector<ScoredId> scored;
  scored.reserve(candidates.size());
  for (const auto& id : candidates) {
    scored.push_back({id, score_tokens(tokens, ordinal(id))});
  }
  return select_top_k(std::move(scored), k);
}

nlohmann::json Bm25Index::to_json() const {
  nlohmann::json doc;
  doc["params"] = {{"k1", params_.k1}, {"b", params_.b}};
  doc["doc_count"] = doc_ids_.size();
  doc["avgdl"] = avgdl_;
  nlohmann::json lengths = nlohmann::json::object();
  for (std::size_t i = 0; i < doc_ids_.size(); ++i) {
    lengths[doc_ids_[i]] = doc_lengths_[i];
  }
  doc["doc_lengths"] = std::move(lengths);
  nlohmann::json postings = nlohmann::json::object();
  for (const auto& [term, list] : postings_) {
    std::vector<std::pair<std::string, std::uint32_t>> entries;
    entries.reserve(list.size());
    for (const auto& p : list) {
      entries.emplace_back(doc_ids_[p.doc], p.tf);
    }
    std::sort(entries.begin(), entries.end());
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [id, tf] : entries) {
      arr.push_back(nlohmann::json::array({id, tf}));
    }
    postings[term] = std::move(arr);
  }
  doc["postings"] = std::move(postings);
  return doc;
}

Bm25Index Bm25Index::from_json(const nlohmann::json& doc) {
  try {
    Bm25Index index;
    index.params_.k1 = doc.at("params").at("k1").get<double>();
    index.params_.b = doc.at("params").at("b").get<double>();
    for (const auto& [id, length] : doc.at("doc_lengths").items()) {
      index.doc_ids_.push_back(id);
      index.doc_lengths_.push_back(length.get<std::uint32_t>());
    }
    index.finalize();
    if (doc.at("doc_count").get<std::size_t>() != index.doc_ids_.size()) {
      throw ParseError("doc_count disagrees with doc_lengths");
    }
    for (const auto& [term, entries] : doc.at("postings").items()) {
      std::vector<Posting> list;
      for (const auto& entry : entries) {
        list.push_back({index.ordinal(entry.at(0).get<std::string>()),
                        entry.at(1).get<std::uint32_t>()});
      }
      std::sort(list.begin(), list.end(),
                [](const Posting& a, const Posting& b) { return a.doc < b.doc; });
      index.postings_.emplace(term, std::move(list));
    }
    return index;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed BM25 index: ") + e.what());
  } catch (const NotFoundError& e) {
    throw ParseError(std::string("malformed BM25 index: ") + e.what());
  }
}

Bm25Index build_index(const LabeledCorpus& corpus, Bm25Params params) {
  return Bm25Index::build(corpus, params);
}

double bm25_score(const Bm25Index& index, std::string_view query, std::string_view doc_id) {
  return index.score(query, doc_id);
}

std::vector<ScoredId> top_k_lexical(const Bm25Index& index, std::string_view query,
                                    std::span<const std::string> candidates, std::size_t k) {
  return index.top_k(query, candidates, k);
}

}  // namespace vault
