#pragma once

#include <atomic>
#include <string>
#include <vector>

#include "vault/transport.hpp"

namespace vault {

/// Deterministic stand-ins for every model server, selected by URL:
///
///   mock://generator                  echoes "Mock <label> hypothesis for: <premise>"
///   mock://judge/oracle               answers the label marked by the mock generator
///   mock://judge/abstain              never names a label
///   mock://judge/constant/<label>     always answers <label>
///   mock://classifier/constant/<label>
///   mock://embedder?dim=<n>           signed hashed bag-of-words vectors
///   mock://unavailable                always HTTP 503
///
/// Responses use the same wire shapes as real servers, so the client code
/// path is identical.
class MockTransport final : public Transport {
 public:
  explicit MockTransport(std::string url);
  HttpResponse post(const HttpRequest& request) override;

 private:
  HttpResponse generator(const HttpRequest& request) const;
  HttpResponse judge(const HttpRequest& request) const;
  HttpResponse classifier() const;
  HttpResponse embedder(const HttpRequest& request) const;

  std::string kind_;
  std::vector<std::string> args_;
  std::size_t dim_ = 16;
};

/// The vector mock://embedder returns for `text`.
std::vector<float> mock_embedding(std::string_view text, std::size_t dim);

}  // namespace vault
