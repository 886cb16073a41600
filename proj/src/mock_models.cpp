#include "vault/mock_models.hpp"

#include <cstdint>

#include "vault/corpus.hpp"
#include "vault/error.hpp"
#include "vault/gateway.hpp"
#include "vault/text.hpp"

namespace vault {
namespace {

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (char c : text) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

HttpResponse chat_reply(const std::string& content) {
  const nlohmann::json body = {
      {"object", "chat.completion"},
      {"choices",
       nlohmann::json::array(
           {{{"index", 0},
             {"message", {{"role", "assistant"}, {"content", content}}},
             {"finish_reason", "stop"}}})}};
  return {200, body.dump()};
}

std::string last_user_message(const HttpRequest& request) {
  const auto& messages = request.body.at("messages");
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->at("role") == "user") {
      return it->at("content").get<std::string>();
    }
  }
  return {};
}

}  // namespace

MockTransport::MockTransport(std::string url) {
  std::string rest = url.substr(std::string("mock://").size());
  std::string query;
  if (auto q = rest.find('?'); q != std::string::npos) {
    query = rest.substr(q + 1);
    rest.resize(q);
  }
  std::size_t start = 0;
  while (start <= rest.size()) {
    const auto slash = rest.find('/', start);
    const auto piece = rest.substr(start, slash == std::string::npos ? std::string::npos : slash - start);
    if (!piece.empty()) {
      (kind_.empty() ? kind_ : args_.emplace_back()) = piece;
    }
    if (slash == std::string::npos) {
      break;
    }
    start = slash + 1;
  }
  if (auto d = query.find("dim="); d != std::string::npos) {
    dim_ = static_cast<std::size_t>(std::stoul(query.substr(d + 4)));
  }
  const bool known = kind_ == "generator" || kind_ == "judge" || kind_ == "classifier" ||
                     kind_ == "embedder" || kind_ == "unavailable";
  if (!known) {
    throw Error("unknown mock endpoint '" + url + "'");
  }
  if ((kind_ == "judge" || kind_ == "classifier") && args_.empty()) {
    throw Error("mock endpoint '" + url + "' needs a behavior");
  }
  if (args_.size() >= 2 && args_[0] == "constant") {
    parse_label(args_[1]);
  }
}

HttpResponse MockTransport::post(const HttpRequest& request) {
  if (kind_ == "unavailable") {
    return {503, R"({"error":"unavailable"})"};
  }
  if (kind_ == "generator") {
    return generator(request);
  }
  if (kind_ == "judge") {
    return judge(request);
  }
  if (kind_ == "classifier") {
    return classifier();
  }
  return embedder(request);
}

HttpResponse MockTransport::generator(const HttpRequest& request) const {
  const std::string prompt = last_user_message(request);
  std::string target = "neutral";
  if (prompt.find("that entails the premise") != std::string::npos) {
    target = "entailment";
  } else if (prompt.find("that contradicts the premise") != std::string::npos) {
    target = "contradiction";
  }
  // The query premise is the last "Premise: " line before the instruction.
  std::string premise;
  const auto instruction = prompt.find("Now generate");
  const auto marker = prompt.rfind("Premise: ", instruction);
  if (marker != std::string::npos) {
    const auto start = marker + std::string("Premise: ").size();
    premise = trim(prompt.substr(start, prompt.find('\n', start) - start));
  }
  return chat_reply("Mock " + target + " hypothesis for: " + premise);
}

HttpResponse MockTransport::judge(const HttpRequest& request) const {
  const std::string& behavior = args_.at(0);
  if (behavior == "abstain") {
    return chat_reply("I cannot tell from the information given.");
  }
  if (behavior == "constant") {
    return chat_reply(std::string(label_name(parse_label(args_.at(1)))));
  }
  // oracle
  const std::string prompt = last_user_message(request);
  const std::string marker = "Hypothesis: Mock ";
  if (auto pos = prompt.find(marker); pos != std::string::npos) {
    const auto start = pos + marker.size();
    const auto word = prompt.substr(start, prompt.find(' ', start) - start);
    if (auto label = try_parse_label(word)) {
      return chat_reply(std::string(label_name(*label)));
    }
  }
  return chat_reply("unsure");
}

HttpResponse MockTransport::classifier() const {
  const NliLabel label = parse_label(args_.size() >= 2 ? args_[1] : "neutral");
  nlohmann::json scores = nlohmann::json::object();
  for (NliLabel l : kAllLabels) {
    scores[std::string(label_name(l))] = l == label ? 1.0 : 0.0;
  }
  return {200, nlohmann::json{{"label", label_name(label)}, {"scores", scores}}.dump()};
}

std::vector<float> mock_embedding(std::string_view text, std::size_t dim) {
  std::vector<float> v(dim, 0.0F);
  for (const auto& token : tokenize(text)) {
    const auto h = fnv1a(token);
    v[h % dim] += (h >> 63) != 0 ? -1.0F : 1.0F;
  }
  return v;
}

HttpResponse MockTransport::embedder(const HttpRequest& request) const {
  nlohmann::json data = nlohmann::json::array();
  const auto& input = request.body.at("input");
  for (std::size_t i = 0; i < input.size(); ++i) {
    data.push_back({{"object", "embedding"},
                    {"index", i},
                    {"embedding", mock_embedding(input[i].get<std::string>(), dim_)}});
  }
  return {200, nlohmann::json{{"object", "list"}, {"data", data}}.dump()};
}

}  // namespace vault
