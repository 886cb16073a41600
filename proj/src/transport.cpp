#include "vault/transport.hpp"

#include <fstream>

#include <httplib.h>

#include "vault/error.hpp"
#include "vault/io.hpp"

namespace vault {
namespace {

struct SplitUrl {
  std::string scheme_host_port;
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw TransportError("malformed URL '" + url + "'");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    return {url, "/"};
  }
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

HttpResponse HttpTransport::post(const HttpRequest& request) {
  const auto [origin, base_path] = split_url(request.base_url);
  std::string path = base_path;
  if (!request.path.empty()) {
    if (path.back() == '/' && request.path.front() == '/') {
      path.pop_back();
    }
    path += request.path;
  }

  httplib::Client client(origin);
  const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(request.timeout);
  const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(request.timeout - seconds);
  client.set_connection_timeout(seconds.count(), micros.count());
  client.set_read_timeout(seconds.count(), micros.count());
  client.set_write_timeout(seconds.count(), micros.count());

  httplib::Headers headers;
  for (const auto& [name, value] : request.headers) {
    headers.emplace(name, value);
  }
  auto result = client.Post(path, headers, request.body.dump(), "application/json");
  if (!result) {
    throw TransportError("POST " + request.base_url + request.path + " failed: " +
                             httplib::to_string(result.error()),
                         /*transient=*/true);
  }
  return {result->status, result->body};
}

std::string request_hash(const HttpRequest& request) {
  const nlohmann::json canonical = {{"path", request.path}, {"body", request.body}};
  return sha256_hex(canonical.dump());
}

ReplayTransport::ReplayTransport(const std::filesystem::path& fixture) {
  for_each_jsonl(fixture, [&](std::size_t line, const nlohmann::json& record) {
    try {
      HttpResponse response;
      response.status = record.at("response").at("status").get<int>();
      response.body = record.at("response").at("body").get<std::string>();
      responses_[record.at("request_hash").get<std::string>()] = std::move(response);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("malformed fixture record at line " + std::to_string(line) + ": " + e.what());
    }
  });
}

HttpResponse ReplayTransport::post(const HttpRequest& request) {
  const auto hash = request_hash(request);
  auto it = responses_.find(hash);
  if (it == responses_.end()) {
    throw TransportError("no recorded response for request " + hash.substr(0, 12) + " (" +
                         request.path + ")");
  }
  return it->second;
}

RecordingTransport::RecordingTransport(std::shared_ptr<Transport> inner,
                                       std::filesystem::path fixture)
    : inner_(std::move(inner)), fixture_(std::move(fixture)) {}

HttpResponse RecordingTransport::post(const HttpRequest& request) {
  auto response = inner_->post(request);
  const nlohmann::json record = {
      {"request_hash", request_hash(request)},
      {"request", {{"path", request.path}, {"body", request.body}}},
      {"response", {{"status", response.status}, {"body", response.body}}}};
  std::lock_guard lock(mutex_);
  if (fixture_.has_parent_path()) {
    std::filesystem::create_directories(fixture_.parent_path());
  }
  std::ofstream out(fixture_, std::ios::app | std::ios::binary);
  out << record.dump() << '\n';
  return response;
}

}  // namespace vault
