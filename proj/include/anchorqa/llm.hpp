#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "anchorqa/corpus.hpp"
#include "anchorqa/error.hpp"
#include "anchorqa/tokenizer.hpp"

namespace anchorqa {

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;  // <= 0

  friend bool operator==(const TokenLogprob&, const TokenLogprob&) = default;
};

struct Usage {
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;

  Usage& operator+=(const Usage& o) {
    prompt_tokens += o.prompt_tokens;
    completion_tokens += o.completion_tokens;
    return *this;
  }
  friend bool operator==(const Usage&, const Usage&) = default;
};

struct ChatRequest {
  std::string system_prompt;
  std::string user_prompt;
  std::size_t max_new_tokens = 64;
  double temperature = 0.0;
  bool want_logprobs = false;
  // Routing metadata. Remote providers ignore it; the scripted provider keys
  // its fixtures on it.
  std::string stage_tag;
  std::string question_id;
};

struct ChatResponse {
  std::string text;
  std::optional<std::vector<TokenLogprob>> token_logprobs;
  Usage usage;
  std::string provider_id;
  double latency_ms = 0.0;
};

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  virtual std::string id() const = 0;
  // Must be safe to call concurrently.
  virtual ChatResponse send(const ChatRequest& request) = 0;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_delay{250};
  double multiplier = 2.0;
};

// Sends `request`, retrying transient provider failures with exponential
// backoff. Validates the response invariants before returning it.
inline ChatResponse complete(const ChatRequest& request, ChatProvider& provider,
                             const RetryPolicy& retry = {}) {
  if (request.system_prompt.empty() || request.user_prompt.empty())
    throw InputError("chat request prompts must be non-empty");
  if (request.max_new_tokens < 1) throw InputError("max_new_tokens must be at least 1");
  if (!(request.temperature >= 0.0)) throw InputError("temperature must be non-negative");

  const int attempts = std::max(1, retry.max_attempts);
  auto delay = retry.base_delay;
  for (int attempt = 1;; ++attempt) {
    const auto started = std::chrono::steady_clock::now();
    try {
      ChatResponse resp = provider.send(request);
      resp.latency_ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - started)
                            .count();
      if (resp.provider_id.empty()) resp.provider_id = provider.id();
      if (resp.text.empty()) throw ProviderError("empty completion from " + provider.id());
      if (!request.want_logprobs) resp.token_logprobs.reset();
      if (resp.token_logprobs) {
        for (auto& t : *resp.token_logprobs) {
          if (!std::isfinite(t.logprob) && t.logprob != -INFINITY)
            throw ProviderError("non-finite logprob from " + provider.id());
          // Servers occasionally report tiny positive values from rounding.
          if (t.logprob > 0.0) {
            if (t.logprob > 1e-6) throw ProviderError("positive logprob from " + provider.id());
            t.logprob = 0.0;
          }
        }
        resp.usage.completion_tokens = resp.token_logprobs->size();
      }
      return resp;
    } catch (const ProviderError& e) {
      if (!e.transient() || attempt >= attempts) throw;
    }
    if (delay.count() > 0) std::this_thread::sleep_for(delay);
    delay = std::chrono::milliseconds(
        static_cast<long long>(static_cast<double>(delay.count()) * retry.multiplier));
  }
}

// ---------------------------------------------------------------------------
// Confidence

struct TokenRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct Confidence {
  double mean_prob = 0.0;     // mean of exp(logprob); the gated quantity
  double mean_logprob = 0.0;  // mean of raw logprobs, for inspection
  std::size_t tokens = 0;
  bool answer_span = false;   // true when averaged over the <answer> content only
};

// Token range covering the content of the first <answer>...</answer>, when the
// token texts concatenate back to the response text.
inline std::optional<TokenRange> answer_token_span(const ChatResponse& resp) {
  if (!resp.token_logprobs) return std::nullopt;
  const auto& toks = *resp.token_logprobs;
  std::string joined;
  for (const auto& t : toks) joined += t.token;
  if (joined != resp.text) return std::nullopt;

  const auto open = joined.find("<answer>");
  if (open == std::string::npos) return std::nullopt;
  auto a = open + std::string_view("<answer>").size();
  auto b = joined.find("</answer>", a);
  if (b == std::string::npos) return std::nullopt;
  while (a < b && std::isspace(static_cast<unsigned char>(joined[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(joined[b - 1]))) --b;
  if (a == b) return std::nullopt;

  std::optional<TokenRange> span;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const auto tb = pos, te = pos + toks[i].token.size();
    pos = te;
    if (te <= a || tb >= b) continue;
    if (!span) span = TokenRange{i, i + 1};
    span->end = i + 1;
  }
  return span;
}

// Mean per-token probability over the answer tokens. Without an explicit span
// the <answer> content is used when it can be aligned, otherwise every
// completion token. Unavailable when the response carries no logprobs.
inline std::optional<Confidence> mean_token_confidence(
    const ChatResponse& resp, std::optional<TokenRange> span = std::nullopt) {
  if (!resp.token_logprobs || resp.token_logprobs->empty()) return std::nullopt;
  const auto& toks = *resp.token_logprobs;
  Confidence c;
  TokenRange r{0, toks.size()};
  if (span) {
    if (span->begin >= span->end || span->end > toks.size())
      throw InputError("confidence span out of range");
    r = *span;
    c.answer_span = true;
  } else if (auto aligned = answer_token_span(resp)) {
    r = *aligned;
    c.answer_span = true;
  }
  double psum = 0.0, lsum = 0.0;
  for (std::size_t i = r.begin; i < r.end; ++i) {
    psum += std::exp(toks[i].logprob);
    lsum += toks[i].logprob;
  }
  c.tokens = r.end - r.begin;
  c.mean_prob = std::clamp(psum / static_cast<double>(c.tokens), 0.0, 1.0);
  c.mean_logprob = lsum / static_cast<double>(c.tokens);
  return c;
}

// ---------------------------------------------------------------------------
// Scripted provider

// One canned completion, keyed by (stage_tag, question_id).
struct ScriptedFixture {
  std::string stage_tag;
  std::string question_id;
  std::string text;
  std::optional<std::vector<TokenLogprob>> token_logprobs;
  std::optional<std::size_t> prompt_tokens;
  std::optional<std::size_t> completion_tokens;
  // Fail this many times with a transient error before answering.
  int transient_failures = 0;
};

inline void from_json(const nlohmann::json& j, ScriptedFixture& f) {
  j.at("stage_tag").get_to(f.stage_tag);
  j.at("question_id").get_to(f.question_id);
  j.at("text").get_to(f.text);
  f.token_logprobs.reset();
  if (j.contains("token_logprobs") && !j["token_logprobs"].is_null()) {
    std::vector<TokenLogprob> lps;
    for (const auto& e : j["token_logprobs"]) {
      if (e.is_number()) {
        lps.push_back({"", e.get<double>()});
      } else if (e.is_array()) {
        lps.push_back({e.at(0).get<std::string>(), e.at(1).get<double>()});
      } else {
        lps.push_back({e.value("token", ""), e.at("logprob").get<double>()});
      }
    }
    f.token_logprobs = std::move(lps);
  }
  if (j.contains("prompt_tokens")) f.prompt_tokens = j["prompt_tokens"].get<std::size_t>();
  if (j.contains("completion_tokens"))
    f.completion_tokens = j["completion_tokens"].get<std::size_t>();
  f.transient_failures = j.value("transient_failures", 0);
}

inline void to_json(nlohmann::json& j, const ScriptedFixture& f) {
  j = {{"stage_tag", f.stage_tag}, {"question_id", f.question_id}, {"text", f.text}};
  if (f.token_logprobs) {
    auto arr = nlohmann::json::array();
    for (const auto& t : *f.token_logprobs) arr.push_back({t.token, t.logprob});
    j["token_logprobs"] = std::move(arr);
  }
  if (f.prompt_tokens) j["prompt_tokens"] = *f.prompt_tokens;
  if (f.completion_tokens) j["completion_tokens"] = *f.completion_tokens;
  if (f.transient_failures) j["transient_failures"] = f.transient_failures;
}

class ScriptedProvider final : public ChatProvider {
 public:
  explicit ScriptedProvider(std::vector<ScriptedFixture> fixtures, bool supports_logprobs = true,
                            const Tokenizer& tokenizer = default_tokenizer())
      : supports_logprobs_(supports_logprobs), tokenizer_(tokenizer) {
    for (auto& f : fixtures) {
      auto k = key(f.stage_tag, f.question_id);
      if (!fixtures_.emplace(k, Entry{std::move(f), 0}).second)
        throw InputError("duplicate scripted fixture '" + k + "'");
    }
  }

  static ScriptedProvider from_file(const std::filesystem::path& path,
                                    bool supports_logprobs = true) {
    return ScriptedProvider(read_jsonl_file<ScriptedFixture>(path), supports_logprobs);
  }

  static std::string key(std::string_view stage_tag, std::string_view question_id) {
    return std::string(stage_tag) + "/" + std::string(question_id);
  }

  std::string id() const override { return "scripted"; }

  bool has(std::string_view stage_tag, std::string_view question_id) const {
    return fixtures_.count(key(stage_tag, question_id)) > 0;
  }

  ChatResponse send(const ChatRequest& request) override {
    const auto k = key(request.stage_tag, request.question_id);
    std::unique_lock lock(mu_);
    auto it = fixtures_.find(k);
    if (it == fixtures_.end()) throw ProviderError("no scripted fixture for '" + k + "'");
    auto& entry = it->second;
    if (entry.failures_served < entry.fixture.transient_failures) {
      ++entry.failures_served;
      throw ProviderError("scripted transient failure for '" + k + "'", true);
    }
    const auto& f = entry.fixture;
    lock.unlock();

    ChatResponse resp;
    resp.text = f.text;
    resp.provider_id = id();
    if (request.want_logprobs && supports_logprobs_) resp.token_logprobs = f.token_logprobs;
    resp.usage.prompt_tokens = f.prompt_tokens.value_or(
        tokenizer_.count(request.system_prompt) + tokenizer_.count(request.user_prompt));
    if (f.completion_tokens)
      resp.usage.completion_tokens = *f.completion_tokens;
    else if (f.token_logprobs)
      resp.usage.completion_tokens = f.token_logprobs->size();
    else
      resp.usage.completion_tokens = tokenizer_.count(f.text);
    return resp;
  }

 private:
  struct Entry {
    ScriptedFixture fixture;
    int failures_served = 0;
  };
  bool supports_logprobs_;
  const Tokenizer& tokenizer_;
  std::mutex mu_;
  std::unordered_map<std::string, Entry> fixtures_;
};

}  // namespace anchorqa
