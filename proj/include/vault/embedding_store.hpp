#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vault/gateway.hpp"
#include "vault/ranking.hpp"

namespace vault {

enum class MetricKind { kCosine, kDot, kL2, kL1, kBrayCurtis, kCanberra };

inline constexpr MetricKind kAllMetrics[] = {MetricKind::kCosine, MetricKind::kDot,
                                             MetricKind::kL2,     MetricKind::kL1,
                                             MetricKind::kBrayCurtis, MetricKind::kCanberra};

std::string_view metric_name(MetricKind kind);
MetricKind parse_metric(std::string_view name);

/// Similarities (cosine, dot) rank descending; the four distances ascending.
constexpr bool higher_is_better(MetricKind kind) {
  return kind == MetricKind::kCosine || kind == MetricKind::kDot;
}

/// Value of `kind` between two equal-length vectors, accumulated in double.
/// Degenerate cases are total: cosine with a zero-norm operand is 0,
/// Bray-Curtis with a zero denominator is 0, and Canberra terms with
/// |a_i| + |b_i| = 0 contribute 0. Throws on a dimension mismatch.
double measure(MetricKind kind, std::span<const float> a, std::span<const float> b);

/// Premise embeddings keyed by example id. All vectors share one dimension
/// and contain only finite values.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  EmbeddingStore(std::size_t dim, std::string model_id);

  /// Throws if the id is already present, the dimension disagrees, or a
  /// component is not finite.
  void add(std::string id, std::span<const float> vector);

  bool contains(std::string_view id) const;
  /// Throws NotFoundError naming the id.
  std::span<const float> get(std::string_view id) const;

  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  const std::string& model_id() const noexcept { return model_id_; }
  void set_model_id(std::string model_id) { model_id_ = std::move(model_id); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }

  /// JSONL: one {"id","dim","model","vector"} record per line.
  std::string to_jsonl() const;
  void save_jsonl(const std::filesystem::path& path) const;
  static EmbeddingStore load_jsonl(const std::filesystem::path& path);

  /// Packed little-endian "VEMB" file: magic, version u32, dim u32,
  /// count u64, then per record id-length u32, id bytes, dim float32s.
  void save_binary(const std::filesystem::path& path) const;
  static EmbeddingStore load_binary(const std::filesystem::path& path);

  /// Dispatches on extension: ".vemb" is binary, anything else JSONL.
  void save(const std::filesystem::path& path) const;
  static EmbeddingStore load(const std::filesystem::path& path);

  bool operator==(const EmbeddingStore& other) const;

 private:
  std::size_t dim_ = 0;
  std::string model_id_;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> rows_;
  std::vector<float> data_;
};

std::vector<ScoredId> top_k_semantic(const EmbeddingStore& store, std::span<const float> query,
                                     std::span<const std::string> candidates, std::size_t k,
                                     MetricKind metric = MetricKind::kCosine);

/// Embedding-provider settings: the endpoint plus how many texts to send per
/// request. Batches run concurrently up to the endpoint's in-flight limit.
struct EmbeddingProvider {
  std::shared_ptr<EndpointClient> client;
  std::size_t batch_size = 64;
};

/// POST {"model","input":[...]} to {base_url}/embeddings; replies are
/// {"data":[{"index","embedding"}]}. Vectors come back in input order.
std::vector<std::vector<float>> fetch_embeddings(const EmbeddingProvider& provider,
                                                 std::span<const std::string> texts);

/// Fetches vectors for every (id, text) not already in `store`, adds them,
/// and returns how many were fetched.
std::size_t embed_missing(const EmbeddingProvider& provider, EmbeddingStore& store,
                          std::span<const std::pair<std::string, std::string>> id_texts);

}  // namespace vault
