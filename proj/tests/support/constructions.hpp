#pragma once

// Synthetic corpora whose best fusion weight is known in advance.

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "test_support.hpp"
#include "vault/embedding_store.hpp"
#include "vault/lexical_index.hpp"

namespace vault::test {

struct RetrievalFixture {
  LabeledCorpus corpus;
  Bm25Index index;
  EmbeddingStore store;
};

inline RetrievalFixture random_fixture(std::mt19937_64& rng, std::size_t n, std::size_t dim = 8,
                                       int vocab = 30) {
  RetrievalFixture f{random_corpus(rng, n, vocab), {}, EmbeddingStore(dim, "random")};
  f.index = Bm25Index::build(f.corpus);
  for (const auto& ex : f.corpus.examples()) f.store.add(ex.id, random_vector(rng, dim));
  return f;
}

/// Same-label cosines all exceed cross-label cosines by a small margin, and
/// every query sees the same multiset of scores (rotation and label
/// symmetry), so per-query z-scores pool cleanly. Premises are random words
/// with no label signal.
inline RetrievalFixture semantic_perfect(std::size_t per_label, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double a = std::sqrt(2.02);
  std::vector<ExamplePair> examples;
  RetrievalFixture f{{}, {}, EmbeddingStore(5, "construct")};
  for (std::size_t j = 0; j < per_label; ++j) {
    for (std::size_t c = 0; c < 3; ++c) {
      const std::string id = "c" + std::to_string(c) + "-" + std::to_string(100 + j);
      examples.push_back({id, random_sentence(rng, 25, 4, 9), "h", kAllLabels[c], "t"});
      const double theta = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(per_label);
      std::vector<float> v(5, 0.0F);
      v[c] = static_cast<float>(a);
      v[3] = static_cast<float>(std::cos(theta));
      v[4] = static_cast<float>(std::sin(theta));
      f.store.add(id, v);
    }
  }
  f.corpus = LabeledCorpus::from_examples(std::move(examples));
  f.index = Bm25Index::build(f.corpus);
  return f;
}

/// Each premise is its label's marker word; embeddings are noise.
inline RetrievalFixture lexical_perfect(std::size_t per_label, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const char* words[] = {"alpha", "beta", "gamma"};
  std::vector<ExamplePair> examples;
  RetrievalFixture f{{}, {}, EmbeddingStore(6, "noise")};
  for (std::size_t j = 0; j < per_label; ++j) {
    for (std::size_t c = 0; c < 3; ++c) {
      const std::string id = "m" + std::to_string(c) + "-" + std::to_string(100 + j);
      examples.push_back({id, words[c], "h", kAllLabels[c], "t"});
      f.store.add(id, random_vector(rng, 6));
    }
  }
  f.corpus = LabeledCorpus::from_examples(std::move(examples));
  f.index = Bm25Index::build(f.corpus);
  return f;
}

}  // namespace vault::test
