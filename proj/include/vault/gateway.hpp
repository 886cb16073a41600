#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vault/corpus.hpp"
#include "vault/transport.hpp"

namespace vault {

enum class FixtureMode { kOff, kReplay, kRecord };

/// Connection settings for one model server (generator, judge, target
/// classifier or embedder).
struct ModelEndpoint {
  std::string name;
  std::string base_url;
  std::string model_id;
  double temperature = 0.0;
  int max_retries = 3;
  std::chrono::milliseconds timeout{60'000};
  std::size_t max_in_flight = 4;
  std::chrono::milliseconds backoff_initial{500};
  std::chrono::milliseconds backoff_max{8'000};
  /// Environment variable holding a bearer token; empty means no auth header.
  std::string api_key_env;
  std::filesystem::path fixture;
  FixtureMode fixture_mode = FixtureMode::kOff;
};

/// Parses an endpoint object, appending every problem to `problems`.
ModelEndpoint parse_endpoint(const nlohmann::json& doc, std::string name, double default_temperature,
                             std::vector<std::string>& problems);
nlohmann::json to_json(const ModelEndpoint& endpoint);

struct CallStats {
  std::size_t calls = 0;
  std::size_t attempts = 0;
  std::size_t failures = 0;
  std::size_t peak_in_flight = 0;

  CallStats operator-(const CallStats& earlier) const {
    return {calls - earlier.calls, attempts - earlier.attempts, failures - earlier.failures,
            peak_in_flight};
  }
};

/// Shareable handle on an endpoint. Enforces the in-flight limit, retries
/// transient failures (transport errors, 429, 5xx) with exponential backoff,
/// and counts calls. Safe to use from many threads.
class EndpointClient {
 public:
  EndpointClient(ModelEndpoint config, std::shared_ptr<Transport> transport);

  /// Builds the transport the config asks for: mock:// schemes get the
  /// built-in mocks, fixture_mode wraps with replay or recording.
  static std::shared_ptr<EndpointClient> create(ModelEndpoint config);

  /// POSTs `body` to base_url + path; returns the parsed JSON response.
  /// Total attempts never exceed max_retries + 1.
  nlohmann::json post_json(std::string_view path, const nlohmann::json& body);

  const ModelEndpoint& config() const noexcept { return config_; }
  CallStats stats() const;

 private:
  ModelEndpoint config_;
  std::shared_ptr<Transport> transport_;
  std::counting_semaphore<> slots_;
  std::atomic<std::size_t> calls_{0};
  std::atomic<std::size_t> attempts_{0};
  std::atomic<std::size_t> failures_{0};
  std::atomic<std::size_t> in_flight_{0};
  std::atomic<std::size_t> peak_in_flight_{0};
};

std::shared_ptr<Transport> make_transport(const ModelEndpoint& endpoint);

enum class Role { kSystem, kUser, kAssistant };

std::string_view role_name(Role role);

struct ChatMessage {
  Role role = Role::kUser;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

/// POST {base_url}/chat/completions and return the first choice's content.
/// An empty completion is an error.
std::string chat_complete(EndpointClient& endpoint, std::span<const ChatMessage> messages);

/// POST {"premise","hypothesis"} to the classifier URL; the reply carries
/// {"label", "scores"}.
NliLabel classify_nli(EndpointClient& endpoint, std::string_view premise,
                      std::string_view hypothesis);

struct JudgeVerdict {
  std::string judge_id;
  std::optional<NliLabel> predicted;  // nullopt = abstain
  std::string raw_text;

  bool abstained() const noexcept { return !predicted.has_value(); }
  bool operator==(const JudgeVerdict&) const = default;
};

nlohmann::json to_json(const JudgeVerdict& verdict);
JudgeVerdict verdict_from_json(const nlohmann::json& doc);

/// Zero-shot judging prompt sent to every judge.
std::vector<ChatMessage> judge_prompt(std::string_view premise, std::string_view hypothesis);

/// First token of `reply` that names a label, if any.
std::optional<NliLabel> parse_first_label(std::string_view reply);

/// Never throws on odd replies: an unparsable reply becomes an abstain with
/// the raw text preserved. Transport failures still throw.
JudgeVerdict judge_label(EndpointClient& endpoint, std::string_view premise,
                         std::string_view hypothesis);

}  // namespace vault
