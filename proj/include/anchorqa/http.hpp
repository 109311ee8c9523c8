#pragma once

// OpenAI-compatible HTTP providers. Kept out of anchorqa.hpp so that only
// code that talks to remote endpoints pulls in cpp-httplib.

#include <algorithm>
#include <cstdlib>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "anchorqa/embedding.hpp"
#include "anchorqa/error.hpp"
#include "anchorqa/llm.hpp"

namespace anchorqa {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // path prefix without trailing slash, e.g. "/v1"
};

inline Endpoint parse_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw InputError("endpoint URL needs a scheme: '" + url + "'");
  const auto slash = url.find('/', scheme + 3);
  Endpoint e;
  e.origin = url.substr(0, slash);
  e.path = slash == std::string::npos ? "" : url.substr(slash);
  while (!e.path.empty() && e.path.back() == '/') e.path.pop_back();
  return e;
}

// Bearer token from ANCHORQA_API_KEY, falling back to OPENAI_API_KEY.
inline std::optional<std::string> api_key_from_env() {
  for (const char* name : {"ANCHORQA_API_KEY", "OPENAI_API_KEY"})
    if (const char* v = std::getenv(name); v && *v) return std::string(v);
  return std::nullopt;
}

namespace detail {

inline nlohmann::json post_json(const Endpoint& ep, const std::string& route, const nlohmann::json& body,
                                double timeout_s, const std::optional<std::string>& api_key,
                                int* status_out = nullptr, std::string* body_out = nullptr) {
  httplib::Client cli(ep.origin);
  const auto secs = static_cast<time_t>(timeout_s);
  cli.set_connection_timeout(secs, 0);
  cli.set_read_timeout(secs, 0);
  cli.set_write_timeout(secs, 0);
  httplib::Headers headers;
  if (api_key) headers.emplace("Authorization", "Bearer " + *api_key);

  auto res = cli.Post(ep.path + route, headers, body.dump(), "application/json");
  if (!res)
    throw ProviderError("transport error talking to " + ep.origin + ": " + httplib::to_string(res.error()),
                        true);
  if (status_out) *status_out = res->status;
  if (body_out) *body_out = res->body;
  if (res->status == 429 || res->status >= 500)
    throw ProviderError("HTTP " + std::to_string(res->status) + " from " + ep.origin, true);
  if (res->status != 200) return nullptr;
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError(std::string("malformed JSON from ") + ep.origin + ": " + e.what());
  }
}

}  // namespace detail

class OpenAIChatProvider final : public ChatProvider {
 public:
  OpenAIChatProvider(std::string url, std::string model, double timeout_s = 120.0,
                     std::optional<std::string> api_key = api_key_from_env())
      : endpoint_(parse_endpoint(url)),
        model_(std::move(model)),
        timeout_s_(timeout_s),
        api_key_(std::move(api_key)) {}

  std::string id() const override { return "openai:" + model_; }

  ChatResponse send(const ChatRequest& request) override {
    nlohmann::json body = {
        {"model", model_},
        {"messages",
         {{{"role", "system"}, {"content", request.system_prompt}},
          {{"role", "user"}, {"content", request.user_prompt}}}},
        {"max_tokens", request.max_new_tokens},
        {"temperature", request.temperature}};
    if (request.want_logprobs) body["logprobs"] = true;

    int status = 0;
    std::string raw;
    auto j = detail::post_json(endpoint_, "/chat/completions", body, timeout_s_, api_key_, &status, &raw);
    if (j.is_null() && request.want_logprobs && raw.find("logprob") != std::string::npos) {
      // Server refused the logprob option; answer without it.
      body.erase("logprobs");
      j = detail::post_json(endpoint_, "/chat/completions", body, timeout_s_, api_key_, &status, &raw);
    }
    if (j.is_null())
      throw ProviderError("HTTP " + std::to_string(status) + " from " + endpoint_.origin + ": " +
                          raw.substr(0, 200));
    return parse_chat_response(j, id());
  }

  static ChatResponse parse_chat_response(const nlohmann::json& j, const std::string& provider_id) {
    ChatResponse resp;
    resp.provider_id = provider_id;
    try {
      const auto& choice = j.at("choices").at(0);
      const auto& content = choice.at("message").at("content");
      resp.text = content.is_string() ? content.get<std::string>() : std::string();
      if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
          choice["logprobs"].contains("content") && choice["logprobs"]["content"].is_array()) {
        std::vector<TokenLogprob> lps;
        for (const auto& t : choice["logprobs"]["content"])
          lps.push_back({t.value("token", ""), t.at("logprob").get<double>()});
        resp.token_logprobs = std::move(lps);
      }
      if (j.contains("usage") && j["usage"].is_object()) {
        resp.usage.prompt_tokens = j["usage"].value("prompt_tokens", std::size_t{0});
        resp.usage.completion_tokens = j["usage"].value("completion_tokens", std::size_t{0});
      }
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(std::string("unexpected chat completion payload: ") + e.what());
    }
    return resp;
  }

 private:
  Endpoint endpoint_;
  std::string model_;
  double timeout_s_;
  std::optional<std::string> api_key_;
};

class OpenAIEmbeddingProvider final : public EmbeddingProvider {
 public:
  OpenAIEmbeddingProvider(std::string url, std::string model, double timeout_s = 120.0,
                          std::optional<std::string> api_key = api_key_from_env(), int max_attempts = 3)
      : endpoint_(parse_endpoint(url)),
        model_(std::move(model)),
        timeout_s_(timeout_s),
        api_key_(std::move(api_key)),
        max_attempts_(max_attempts) {}

  std::string id() const override { return "openai:" + model_; }

  std::vector<std::vector<double>> embed_raw(std::span<const std::string> texts) override {
    nlohmann::json body = {{"model", model_}, {"input", std::vector<std::string>(texts.begin(), texts.end())}};
    for (int attempt = 1;; ++attempt) {
      try {
        int status = 0;
        std::string raw;
        auto j = detail::post_json(endpoint_, "/embeddings", body, timeout_s_, api_key_, &status, &raw);
        if (j.is_null())
          throw ProviderError("HTTP " + std::to_string(status) + " from " + endpoint_.origin + ": " +
                              raw.substr(0, 200));
        return parse_embedding_response(j, texts.size());
      } catch (const ProviderError& e) {
        if (!e.transient() || attempt >= max_attempts_) throw;
      }
    }
  }

  static std::vector<std::vector<double>> parse_embedding_response(const nlohmann::json& j,
                                                                   std::size_t expected) {
    std::vector<std::pair<std::size_t, std::vector<double>>> rows;
    try {
      for (const auto& d : j.at("data"))
        rows.emplace_back(d.value("index", rows.size()), d.at("embedding").get<std::vector<double>>());
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(std::string("unexpected embeddings payload: ") + e.what());
    }
    if (rows.size() != expected)
      throw ProviderError("embeddings endpoint returned " + std::to_string(rows.size()) + " vectors for " +
                          std::to_string(expected) + " inputs");
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::vector<double>> out;
    out.reserve(rows.size());
    for (auto& r : rows) out.push_back(std::move(r.second));
    return out;
  }

 private:
  Endpoint endpoint_;
  std::string model_;
  double timeout_s_;
  std::optional<std::string> api_key_;
  int max_attempts_;
};

}  // namespace anchorqa
