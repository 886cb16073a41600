#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace vault {

struct HttpRequest {
  std::string base_url;
  std::string path;  // appended to base_url; "" posts to base_url itself
  nlohmann::json body;
  std::map<std::string, std::string> headers;
  std::chrono::milliseconds timeout{60'000};
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// One POST of a JSON body. Connection-level failures throw a transient
/// TransportError; HTTP error statuses are returned, not thrown.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const HttpRequest& request) = 0;
};

/// Real HTTP(S) via cpp-httplib.
class HttpTransport final : public Transport {
 public:
  HttpResponse post(const HttpRequest& request) override;
};

/// Key used to match a request against a recorded fixture: SHA-256 of the
/// canonical {"path","body"} document. Host and headers are excluded so a
/// fixture replays against any base URL without leaking credentials.
std::string request_hash(const HttpRequest& request);

/// Serves responses from a fixture JSONL of
/// {"request_hash", "request", "response": {"status", "body"}}.
/// An unrecorded request is a non-transient TransportError.
class ReplayTransport final : public Transport {
 public:
  explicit ReplayTransport(const std::filesystem::path& fixture);
  HttpResponse post(const HttpRequest& request) override;

 private:
  std::unordered_map<std::string, HttpResponse> responses_;
};

/// Forwards to `inner` and appends each exchange to the fixture file.
class RecordingTransport final : public Transport {
 public:
  RecordingTransport(std::shared_ptr<Transport> inner, std::filesystem::path fixture);
  HttpResponse post(const HttpRequest& request) override;

 private:
  std::shared_ptr<Transport> inner_;
  std::filesystem::path fixture_;
  std::mutex mutex_;
};

}  // namespace vault
