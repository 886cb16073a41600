#include "vault/gateway.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

#include <spdlog/spdlog.h>

#include "vault/error.hpp"
#include "vault/mock_models.hpp"
#include "vault/text.hpp"

namespace vault {

namespace {

template <typename T>
void read_field(const nlohmann::json& doc, const char* key, T& out, const std::string& where,
                std::vector<std::string>& problems) {
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) {
    return;
  }
  try {
    out = it->get<T>();
  } catch (const nlohmann::json::exception&) {
    problems.push_back(where + "." + key + " has the wrong type");
  }
}

std::string_view fixture_mode_name(FixtureMode mode) {
  switch (mode) {
    case FixtureMode::kOff:
      return "off";
    case FixtureMode::kReplay:
      return "replay";
    case FixtureMode::kRecord:
      return "record";
  }
  return "off";
}

}  // namespace

ModelEndpoint parse_endpoint(const nlohmann::json& doc, std::string name, double default_temperature,
                             std::vector<std::string>& problems) {
  ModelEndpoint ep;
  ep.name = std::move(name);
  ep.temperature = default_temperature;
  const std::string& where = ep.name;
  if (!doc.is_object()) {
    problems.push_back(where + " must be an object");
    return ep;
  }
  read_field(doc, "base_url", ep.base_url, where, problems);
  read_field(doc, "model", ep.model_id, where, problems);
  read_field(doc, "temperature", ep.temperature, where, problems);
  read_field(doc, "max_retries", ep.max_retries, where, problems);
  read_field(doc, "api_key_env", ep.api_key_env, where, problems);

  std::int64_t timeout_ms = ep.timeout.count();
  std::int64_t backoff_initial_ms = ep.backoff_initial.count();
  std::int64_t backoff_max_ms = ep.backoff_max.count();
  std::int64_t max_in_flight = static_cast<std::int64_t>(ep.max_in_flight);
  read_field(doc, "timeout_ms", timeout_ms, where, problems);
  read_field(doc, "backoff_initial_ms", backoff_initial_ms, where, problems);
  read_field(doc, "backoff_max_ms", backoff_max_ms, where, problems);
  read_field(doc, "max_in_flight", max_in_flight, where, problems);
  ep.timeout = std::chrono::milliseconds(timeout_ms);
  ep.backoff_initial = std::chrono::milliseconds(backoff_initial_ms);
  ep.backoff_max = std::chrono::milliseconds(backoff_max_ms);

  std::string fixture;
  std::string mode = "off";
  read_field(doc, "fixture", fixture, where, problems);
  read_field(doc, "fixture_mode", mode, where, problems);
  ep.fixture = fixture;
  if (mode == "off") {
    ep.fixture_mode = FixtureMode::kOff;
  } else if (mode == "replay") {
    ep.fixture_mode = FixtureMode::kReplay;
  } else if (mode == "record") {
    ep.fixture_mode = FixtureMode::kRecord;
  } else {
    problems.push_back(where + ".fixture_mode must be off, replay or record (got '" + mode + "')");
  }

  if (ep.base_url.empty() && ep.fixture_mode != FixtureMode::kReplay) {
    problems.push_back(where + ".base_url is required unless fixture_mode is replay");
  }
  if (ep.fixture_mode != FixtureMode::kOff && ep.fixture.empty()) {
    problems.push_back(where + ".fixture is required when fixture_mode is " + mode);
  }
  if (ep.temperature < 0.0) {
    problems.push_back(where + ".temperature must be >= 0");
  }
  if (ep.max_retries < 0) {
    problems.push_back(where + ".max_retries must be >= 0");
  }
  if (max_in_flight < 1) {
    problems.push_back(where + ".max_in_flight must be >= 1");
  } else {
    ep.max_in_flight = static_cast<std::size_t>(max_in_flight);
  }
  if (timeout_ms <= 0) {
    problems.push_back(where + ".timeout_ms must be > 0");
  }
  if (backoff_initial_ms < 0 || backoff_max_ms < 0) {
    problems.push_back(where + " backoff durations must be >= 0");
  }
  return ep;
}

nlohmann::json to_json(const ModelEndpoint& ep) {
  return {{"base_url", ep.base_url},
          {"model", ep.model_id},
          {"temperature", ep.temperature},
          {"max_retries", ep.max_retries},
          {"timeout_ms", ep.timeout.count()},
          {"max_in_flight", ep.max_in_flight},
          {"backoff_initial_ms", ep.backoff_initial.count()},
          {"backoff_max_ms", ep.backoff_max.count()},
          {"api_key_env", ep.api_key_env},
          {"fixture", ep.fixture.string()},
          {"fixture_mode", fixture_mode_name(ep.fixture_mode)}};
}

std::shared_ptr<Transport> make_transport(const ModelEndpoint& endpoint) {
  if (endpoint.fixture_mode == FixtureMode::kReplay) {
    return std::make_shared<ReplayTransport>(endpoint.fixture);
  }
  std::shared_ptr<Transport> base;
  if (endpoint.base_url.rfind("mock://", 0) == 0) {
    base = std::make_shared<MockTransport>(endpoint.base_url);
  } else {
    base = std::make_shared<HttpTransport>();
  }
  if (endpoint.fixture_mode == FixtureMode::kRecord) {
    return std::make_shared<RecordingTransport>(std::move(base), endpoint.fixture);
  }
  return base;
}

EndpointClient::EndpointClient(ModelEndpoint config, std::shared_ptr<Transport> transport)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      slots_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, config_.max_in_flight))) {}

std::shared_ptr<EndpointClient> EndpointClient::create(ModelEndpoint config) {
  auto transport = make_transport(config);
  return std::make_shared<EndpointClient>(std::move(config), std::move(transport));
}

CallStats EndpointClient::stats() const {
  return {calls_.load(), attempts_.load(), failures_.load(), peak_in_flight_.load()};
}

nlohmann::json EndpointClient::post_json(std::string_view path, const nlohmann::json& body) {
  HttpRequest request;
  request.base_url = config_.base_url;
  request.path = std::string(path);
  request.body = body;
  request.timeout = config_.timeout;
  if (!config_.api_key_env.empty()) {
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key != nullptr && *key != '\0') {
      request.headers["Authorization"] = std::string("Bearer ") + key;
    }
  }

  ++calls_;
  slots_.acquire();
  const std::size_t now_in_flight = ++in_flight_;
  std::size_t peak = peak_in_flight_.load();
  while (now_in_flight > peak && !peak_in_flight_.compare_exchange_weak(peak, now_in_flight)) {
  }
  struct Release {
    EndpointClient* self;
    ~Release() {
      --self->in_flight_;
      self->slots_.release();
    }
  } release{this};

  std::string last_error;
  auto delay = config_.backoff_initial;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      spdlog::warn("{}: attempt {} failed ({}); retrying in {} ms", config_.name, attempt,
                   last_error, delay.count());
      std::this_thread::sleep_for(delay);
      delay = std::min(config_.backoff_max, delay * 2);
    }
    ++attempts_;
    HttpResponse response;
    try {
      response = transport_->post(request);
    } catch (const TransportError& e) {
      if (!e.transient()) {
        ++failures_;
        throw;
      }
      last_error = e.what();
      continue;
    }
    if (response.status >= 200 && response.status < 300) {
      try {
        return nlohmann::json::parse(response.body);
      } catch (const nlohmann::json::parse_error&) {
        ++failures_;
        throw TransportError(config_.name + ": response is not valid JSON");
      }
    }
    last_error = "HTTP " + std::to_string(response.status);
    if (response.status != 429 && response.status < 500) {
      ++failures_;
      throw TransportError(config_.name + ": " + last_error + ": " + response.body.substr(0, 200));
    }
  }
  ++failures_;
  throw TransportError(config_.name + ": gave up after " + std::to_string(config_.max_retries + 1) +
                       " attempts (last error: " + last_error + ")");
}

std::string_view role_name(Role role) {
  switch (role) {
    case Role::kSystem:
      return "system";
    case Role::kUser:
      return "user";
    case Role::kAssistant:
      return "assistant";
  }
  return "user";
}

std::string chat_complete(EndpointClient& endpoint, std::span<const ChatMessage> messages) {
  if (messages.empty()) {
    throw Error("chat request needs at least one message");
  }
  nlohmann::json wire_messages = nlohmann::json::array();
  for (const auto& m : messages) {
    if (m.role != Role::kSystem && m.content.empty()) {
      throw Error("empty content in a " + std::string(role_name(m.role)) + " message");
    }
    wire_messages.push_back({{"role", role_name(m.role)}, {"content", m.content}});
  }
  const nlohmann::json body = {{"model", endpoint.config().model_id},
                               {"messages", std::move(wire_messages)},
                               {"temperature", endpoint.config().temperature}};
  const auto reply = endpoint.post_json("/chat/completions", body);
  std::string content;
  try {
    const auto& message = reply.at("choices").at(0).at("message");
    if (message.contains("content") && message["content"].is_string()) {
      content = message["content"].get<std::string>();
    }
  } catch (const nlohmann::json::exception&) {
    throw TransportError(endpoint.config().name + ": chat response missing choices[0].message");
  }
  if (trim(content).empty()) {
    throw Error(endpoint.config().name + ": empty completion");
  }
  return content;
}

NliLabel classify_nli(EndpointClient& endpoint, std::string_view premise,
                      std::string_view hypothesis) {
  if (premise.empty() || hypothesis.empty()) {
    throw Error("classify_nli needs a non-empty premise and hypothesis");
  }
  const nlohmann::json body = {{"premise", premise}, {"hypothesis", hypothesis}};
  const auto reply = endpoint.post_json("", body);
  auto it = reply.find("label");
  if (it == reply.end() || !it->is_string()) {
    throw ParseError(endpoint.config().name + ": classifier response has no label");
  }
  return parse_label(it->get<std::string>());
}

nlohmann::json to_json(const JudgeVerdict& verdict) {
  return {{"judge", verdict.judge_id},
          {"predicted", verdict.predicted ? nlohmann::json(label_name(*verdict.predicted))
                                          : nlohmann::json("abstain")},
          {"raw", verdict.raw_text}};
}

JudgeVerdict verdict_from_json(const nlohmann::json& doc) {
  JudgeVerdict v;
  v.judge_id = doc.at("judge").get<std::string>();
  const auto predicted = doc.at("predicted").get<std::string>();
  if (predicted != "abstain") {
    v.predicted = parse_label(predicted);
  }
  v.raw_text = doc.value("raw", "");
  return v;
}

std::vector<ChatMessage> judge_prompt(std::string_view premise, std::string_view hypothesis) {
  std::string content;
  content += "Premise: ";
  content += premise;
  content += "\nHypothesis: ";
  content += hypothesis;
  content +=
      "\n\nGiven the premise above, does the hypothesis follow? Answer with exactly one word: "
      "entailment, neutral, or contradiction.";
  return {ChatMessage{Role::kUser, std::move(content)}};
}

std::optional<NliLabel> parse_first_label(std::string_view reply) {
  for (const auto& token : tokenize(reply)) {
    if (auto label = try_parse_label(token)) {
      return label;
    }
  }
  return std::nullopt;
}

JudgeVerdict judge_label(EndpointClient& endpoint, std::string_view premise,
                         std::string_view hypothesis) {
  JudgeVerdict verdict;
  verdict.judge_id = endpoint.config().name;
  const auto messages = judge_prompt(premise, hypothesis);
  try {
    verdict.raw_text = chat_complete(endpoint, messages);
  } catch (const TransportError&) {
    throw;
  } catch (const Error& e) {
    // An empty or malformed completion is a parse failure, not a transport one.
    verdict.raw_text = e.what();
    return verdict;
  }
  verdict.predicted = parse_first_label(verdict.raw_text);
  return verdict;
}

}  // namespace vault
