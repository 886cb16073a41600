#include "vault/embedding_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "vault/error.hpp"
#include "vault/io.hpp"
#include "vault/parallel.hpp"

namespace vault {

std::string_view metric_name(MetricKind kind) {
  switch (kind) {
    case MetricKind::kCosine:
      return "cosine";
    case MetricKind::kDot:
      return "dot";
    case MetricKind::kL2:
      return "l2";
    case MetricKind::kL1:
      return "l1";
    case MetricKind::kBrayCurtis:
      return "bray_curtis";
    case MetricKind::kCanberra:
      return "canberra";
  }
  return "cosine";
}

MetricKind parse_metric(std::string_view name) {
  for (MetricKind kind : kAllMetrics) {
    if (metric_name(kind) == name) {
      return kind;
    }
  }
  throw ParseError("unknown similarity metric '" + std::string(name) + "'");
}

double measure(MetricKind kind, std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw Error("dimension mismatch: " + std::to_string(a.size()) + " vs " +
                std::to_string(b.size()));
  }
  const std::size_t d = a.size();
  switch (kind) {
    case MetricKind::kCosine: {
      double dot = 0.0;
      double na = 0.0;
      double nb = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
      }
      if (na == 0.0 || nb == 0.0) {
        return 0.0;
      }
      return dot / (std::sqrt(na) * std::sqrt(nb));
    }
    case MetricKind::kDot: {
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        dot += static_cast<double>(a[i]) * b[i];
      }
      return dot;
    }
    case MetricKind::kL2: {
      double sum = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double diff = static_cast<double>(a[i]) - b[i];
        sum += diff * diff;
      }
      return std::sqrt(sum);
    }
    case MetricKind::kL1: {
      double sum = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        sum += std::abs(static_cast<double>(a[i]) - b[i]);
      }
      return sum;
    }
    case MetricKind::kBrayCurtis: {
      double num = 0.0;
      double den = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        num += std::abs(static_cast<double>(a[i]) - b[i]);
        den += std::abs(static_cast<double>(a[i]) + b[i]);
      }
      return den == 0.0 ? 0.0 : num / den;
    }
    case MetricKind::kCanberra: {
      double sum = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double den = std::abs(static_cast<double>(a[i])) + std::abs(static_cast<double>(b[i]));
        if (den != 0.0) {
          sum += std::abs(static_cast<double>(a[i]) - b[i]) / den;
        }
      }
      return sum;
    }
  }
  return 0.0;
}

EmbeddingStore::EmbeddingStore(std::size_t dim, std::string model_id)
    : dim_(dim), model_id_(std::move(model_id)) {
  if (dim_ == 0) {
    throw Error("embedding dimension must be positive");
  }
}

void EmbeddingStore::add(std::string id, std::span<const float> vector) {
  if (dim_ == 0) {
    if (vector.empty()) {
      throw Error("embedding dimension must be positive");
    }
    dim_ = vector.size();
  }
  if (vector.size() != dim_) {
    throw Error("embedding for '" + id + "' has dim " + std::to_string(vector.size()) +
                ", store dim is " + std::to_string(dim_));
  }
  for (float v : vector) {
    if (!std::isfinite(v)) {
      throw Error("embedding for '" + id + "' has a non-finite component");
    }
  }
  if (!rows_.emplace(id, ids_.size()).second) {
    throw Error("duplicate embedding id '" + id + "'");
  }
  ids_.push_back(std::move(id));
  data_.insert(data_.end(), vector.begin(), vector.end());
}

bool EmbeddingStore::contains(std::string_view id) const {
  return rows_.find(std::string(id)) != rows_.end();
}

std::span<const float> EmbeddingStore::get(std::string_view id) const {
  auto it = rows_.find(std::string(id));
  if (it == rows_.end()) {
    throw NotFoundError("missing embedding for id '" + std::string(id) + "'");
  }
  return {data_.data() + it->second * dim_, dim_};
}

bool EmbeddingStore::operator==(const EmbeddingStore& other) const {
  return dim_ == other.dim_ && model_id_ == other.model_id_ && ids_ == other.ids_ &&
         data_ == other.data_;
}

std::string EmbeddingStore::to_jsonl() const {
  std::string out;
  for (std::size_t row = 0; row < ids_.size(); ++row) {
    nlohmann::json vector = nlohmann::json::array();
    for (std::size_t i = 0; i < dim_; ++i) {
      vector.push_back(widen_shortest(data_[row * dim_ + i]));
    }
    const nlohmann::json record = {
        {"id", ids_[row]}, {"dim", dim_}, {"model", model_id_}, {"vector", std::move(vector)}};
    out += record.dump();
    out += '\n';
  }
  return out;
}

void EmbeddingStore::save_jsonl(const std::filesystem::path& path) const {
  write_file_atomic(path, to_jsonl());
}

EmbeddingStore EmbeddingStore::load_jsonl(const std::filesystem::path& path) {
  EmbeddingStore store;
  std::vector<float> buffer;
  for_each_jsonl(path, [&](std::size_t line, const nlohmann::json& record) {
    try {
      const auto dim = record.at("dim").get<std::size_t>();
      const auto& values = record.at("vector");
      if (values.size() != dim) {
        throw ParseError("vector length disagrees with dim at line " + std::to_string(line));
      }
      if (store.ids_.empty()) {
        store.model_id_ = record.value("model", "");
      }
      buffer.clear();
      for (const auto& v : values) {
        buffer.push_back(v.get<float>());
      }
      store.add(record.at("id").get<std::string>(), buffer);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("malformed embedding record at line " + std::to_string(line) + ": " +
                       e.what());
    }
  });
  return store;
}

namespace {

constexpr char kMagic[4] = {'V', 'E', 'M', 'B'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
  }
}

template <typename T>
T get_le(std::string_view bytes, std::size_t& offset) {
  if (offset + sizeof(T) > bytes.size()) {
    throw ParseError("truncated VEMB file");
  }
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  }
  offset += sizeof(T);
  return value;
}

}  // namespace

void EmbeddingStore::save_binary(const std::filesystem::path& path) const {
  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
  put_le<std::uint64_t>(out, ids_.size());
  for (std::size_t row = 0; row < ids_.size(); ++row) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ids_[row].size()));
    out += ids_[row];
    for (std::size_t i = 0; i < dim_; ++i) {
      put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(data_[row * dim_ + i]));
    }
  }
  write_file_atomic(path, out);
}

EmbeddingStore EmbeddingStore::load_binary(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ParseError("'" + path.string() + "' is not a VEMB file");
  }
  std::size_t offset = sizeof(kMagic);
  const auto version = get_le<std::uint32_t>(bytes, offset);
  if (version != kVersion) {
    throw ParseError("unsupported VEMB version " + std::to_string(version));
  }
  const auto dim = get_le<std::uint32_t>(bytes, offset);
  const auto count = get_le<std::uint64_t>(bytes, offset);
  EmbeddingStore store;
  std::vector<float> buffer(dim);
  for (std::uint64_t r = 0; r < count; ++r) {
    const auto id_length = get_le<std::uint32_t>(bytes, offset);
    if (offset + id_length > bytes.size()) {
      throw ParseError("truncated VEMB file");
    }
    std::string id = bytes.substr(offset, id_length);
    offset += id_length;
    for (std::uint32_t i = 0; i < dim; ++i) {
      buffer[i] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, offset));
    }
    store.add(std::move(id), buffer);
  }
  if (offset != bytes.size()) {
    throw ParseError("trailing bytes in VEMB file");
  }
  if (count == 0) {
    store.dim_ = dim;
  }
  return store;
}

void EmbeddingStore::save(const std::filesystem::path& path) const {
  if (path.extension() == ".vemb") {
    save_binary(path);
  } else {
    save_jsonl(path);
  }
}

EmbeddingStore EmbeddingStore::load(const std::filesystem::path& path) {
  return path.extension() == ".vemb" ? load_binary(path) : load_jsonl(path);
}

std::vector<ScoredId> top_k_semantic(const EmbeddingStore& store, std::span<const float> query,
                                     std::span<const std::string> candidates, std::size_t k,
                                     MetricKind metric) {
  std::vector<ScoredId> scored;
  scored.reserve(candidates.size());
  for (const auto& id : candidates) {
    scored.push_back({id, measure(metric, query, store.get(id))});
  }
  return select_top_k(std::move(scored), k, higher_is_better(metric));
}

std::vector<std::vector<float>> fetch_embeddings(const EmbeddingProvider& provider,
                                                 std::span<const std::string> texts) {
  if (texts.empty()) {
    throw Error("fetch_embeddings needs at least one text");
  }
  if (!provider.client) {
    throw Error("embedding provider has no endpoint");
  }
  const std::size_t batch = std::max<std::size_t>(1, provider.batch_size);
  const std::size_t batches = (texts.size() + batch - 1) / batch;
  std::vector<std::vector<float>> out(texts.size());
  EndpointClient& client = *provider.client;

  parallel_for(batches, client.config().max_in_flight, [&](std::size_t b) {
    const std::size_t begin = b * batch;
    const std::size_t end = std::min(texts.size(), begin + batch);
    nlohmann::json input = nlohmann::json::array();
    for (std::size_t i = begin; i < end; ++i) {
      input.push_back(texts[i]);
    }
    const auto reply =
        client.post_json("/embeddings", {{"model", client.config().model_id}, {"input", input}});
    const auto data = reply.find("data");
    if (data == reply.end() || !data->is_array()) {
      throw TransportError(client.config().name + ": embeddings response has no data array");
    }
    if (data->size() != end - begin) {
      throw TransportError(client.config().name + ": count mismatch: requested " +
                           std::to_string(end - begin) + ", received " +
                           std::to_string(data->size()));
    }
    for (std::size_t j = 0; j < data->size(); ++j) {
      const auto& item = (*data)[j];
      const std::size_t index = item.contains("index") ? item["index"].get<std::size_t>() : j;
      if (index >= end - begin || !out[begin + index].empty()) {
        throw TransportError(client.config().name + ": bad embedding index " + std::to_string(index));
      }
      out[begin + index] = item.at("embedding").get<std::vector<float>>();
    }
  });

  const std::size_t dim = out.front().size();
  for (const auto& v : out) {
    if (v.size() != dim || dim == 0) {
      throw TransportError("embedding dimension disagreement in batch");
    }
  }
  return out;
}

std::size_t embed_missing(const EmbeddingProvider& provider, EmbeddingStore& store,
                          std::span<const std::pair<std::string, std::string>> id_texts) {
  std::vector<std::string> ids;
  std::vector<std::string> texts;
  for (const auto& [id, text] : id_texts) {
    if (!store.contains(id)) {
      ids.push_back(id);
      texts.push_back(text);
    }
  }
  if (texts.empty()) {
    return 0;
  }
  if (store.size() == 0 && store.model_id().empty()) {
    store.set_model_id(provider.client->config().model_id);
  }
  const auto vectors = fetch_embeddings(provider, texts);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    store.add(ids[i], vectors[i]);
  }
  return ids.size();
}

}  // namespace vault
