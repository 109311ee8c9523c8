#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "json.hpp"

#include "anchorqa/corpus.hpp"
#include "anchorqa/error.hpp"
#include "anchorqa/hash.hpp"
#include "anchorqa/llm.hpp"
#include "anchorqa/triple.hpp"

namespace anchorqa {

enum class Mode { full, system1_only, no_initial_reasoning, threshold_gated, standard_rag };

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::full: return "full";
    case Mode::system1_only: return "system1_only";
    case Mode::no_initial_reasoning: return "no_initial_reasoning";
    case Mode::threshold_gated: return "threshold_gated";
    case Mode::standard_rag: return "standard_rag";
  }
  return "unknown";
}

inline Mode parse_mode(std::string_view s) {
  if (s == "full") return Mode::full;
  if (s == "system1_only") return Mode::system1_only;
  if (s == "no_initial_reasoning") return Mode::no_initial_reasoning;
  if (s == "threshold_gated") return Mode::threshold_gated;
  if (s == "standard_rag") return Mode::standard_rag;
  throw InputError("unknown mode '" + std::string(s) + "'");
}

struct StageLimits {
  std::size_t system1 = 64;
  std::size_t triple_gen = 256;
  std::size_t system2 = 1024;
};

// Where completions and embeddings come from. Secrets are never part of this
// struct; remote providers read them from the environment.
struct ProviderSettings {
  std::string chat = "scripted";  // scripted | openai
  std::string chat_url;
  std::string chat_model;
  std::string fixtures;           // scripted fixture JSONL
  bool supports_logprobs = true;
  std::string embedder = "hash";  // hash | openai
  std::size_t hash_dim = 512;
  std::string embed_url;
  std::string embed_model;
  double timeout_s = 120.0;
};

struct RunConfig {
  Mode mode = Mode::full;
  std::size_t k_per_triple = 5;
  std::optional<double> confidence_threshold;  // nullopt = disabled
  StageLimits max_new_tokens;
  double temperature = 0.0;
  std::uint64_t seed = 0;
  TripleQueryStyle query_style = TripleQueryStyle::spaced;
  // Also search with the raw question alongside the triples.
  bool question_as_query = false;
  // Under threshold_gated, still build (but never send) the System-II prompt
  // of completed questions so the skipped input tokens can be reported.
  bool estimate_savings = true;
  std::size_t concurrency = 1;
  // Wall-clock stage timings make traces differ between reruns; off by default.
  bool record_timing = false;
  RetryPolicy retry;
  ProviderSettings provider;
  std::string prompts_dir;

  void validate() const {
    if (k_per_triple < 1) throw InputError("k_per_triple must be at least 1");
    if (max_new_tokens.system1 < 1 || max_new_tokens.triple_gen < 1 || max_new_tokens.system2 < 1)
      throw InputError("max_new_tokens must be at least 1 for every stage");
    if (max_new_tokens.system2 < max_new_tokens.system1)
      throw InputError("system2 max_new_tokens must be >= system1 max_new_tokens");
    if (confidence_threshold && !(*confidence_threshold >= 0.0 && *confidence_threshold <= 1.0))
      throw InputError("confidence threshold must lie in [0, 1]");
    if (!(temperature >= 0.0)) throw InputError("temperature must be non-negative");
    if (concurrency < 1) throw InputError("concurrency must be at least 1");
  }
};

inline void to_json(nlohmann::json& j, const RunConfig& c) {
  j = nlohmann::json{
      {"mode", std::string(to_string(c.mode))},
      {"k_per_triple", c.k_per_triple},
      {"confidence_threshold",
       c.confidence_threshold ? nlohmann::json(*c.confidence_threshold) : nlohmann::json(nullptr)},
      {"max_new_tokens",
       {{"system1", c.max_new_tokens.system1},
        {"triple_gen", c.max_new_tokens.triple_gen},
        {"system2", c.max_new_tokens.system2}}},
      {"temperature", c.temperature},
      {"seed", c.seed},
      {"query_style", std::string(to_string(c.query_style))},
      {"question_as_query", c.question_as_query},
      {"estimate_savings", c.estimate_savings},
      {"concurrency", c.concurrency},
      {"record_timing", c.record_timing},
      {"retry",
       {{"max_attempts", c.retry.max_attempts},
        {"base_delay_ms", c.retry.base_delay.count()},
        {"multiplier", c.retry.multiplier}}},
      {"provider",
       {{"chat", c.provider.chat},
        {"chat_url", c.provider.chat_url},
        {"chat_model", c.provider.chat_model},
        {"fixtures", c.provider.fixtures},
        {"supports_logprobs", c.provider.supports_logprobs},
        {"embedder", c.provider.embedder},
        {"hash_dim", c.provider.hash_dim},
        {"embed_url", c.provider.embed_url},
        {"embed_model", c.provider.embed_model},
        {"timeout_s", c.provider.timeout_s}}},
      {"prompts_dir", c.prompts_dir}};
}

// Missing keys keep their defaults, so partial config files are fine.
inline void from_json(const nlohmann::json& j, RunConfig& c) {
  if (j.contains("mode")) c.mode = parse_mode(j["mode"].get<std::string>());
  c.k_per_triple = j.value("k_per_triple", c.k_per_triple);
  if (j.contains("confidence_threshold")) {
    if (j["confidence_threshold"].is_null())
      c.confidence_threshold.reset();
    else
      c.confidence_threshold = j["confidence_threshold"].get<double>();
  }
  if (j.contains("max_new_tokens")) {
    const auto& m = j["max_new_tokens"];
    c.max_new_tokens.system1 = m.value("system1", c.max_new_tokens.system1);
    c.max_new_tokens.triple_gen = m.value("triple_gen", c.max_new_tokens.triple_gen);
    c.max_new_tokens.system2 = m.value("system2", c.max_new_tokens.system2);
  }
  c.temperature = j.value("temperature", c.temperature);
  c.seed = j.value("seed", c.seed);
  if (j.contains("query_style"))
    c.query_style = parse_triple_query_style(j["query_style"].get<std::string>());
  c.question_as_query = j.value("question_as_query", c.question_as_query);
  c.estimate_savings = j.value("estimate_savings", c.estimate_savings);
  c.concurrency = j.value("concurrency", c.concurrency);
  c.record_timing = j.value("record_timing", c.record_timing);
  if (j.contains("retry")) {
    const auto& r = j["retry"];
    c.retry.max_attempts = r.value("max_attempts", c.retry.max_attempts);
    c.retry.base_delay =
        std::chrono::milliseconds(r.value("base_delay_ms", static_cast<long long>(c.retry.base_delay.count())));
    c.retry.multiplier = r.value("multiplier", c.retry.multiplier);
  }
  if (j.contains("provider")) {
    const auto& p = j["provider"];
    auto& o = c.provider;
    o.chat = p.value("chat", o.chat);
    o.chat_url = p.value("chat_url", o.chat_url);
    o.chat_model = p.value("chat_model", o.chat_model);
    o.fixtures = p.value("fixtures", o.fixtures);
    o.supports_logprobs = p.value("supports_logprobs", o.supports_logprobs);
    o.embedder = p.value("embedder", o.embedder);
    o.hash_dim = p.value("hash_dim", o.hash_dim);
    o.embed_url = p.value("embed_url", o.embed_url);
    o.embed_model = p.value("embed_model", o.embed_model);
    o.timeout_s = p.value("timeout_s", o.timeout_s);
  }
  c.prompts_dir = j.value("prompts_dir", c.prompts_dir);
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(detail::read_file(path)).get<RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError("invalid config " + path.string() + ": " + e.what());
  }
}

// Endpoint/model settings may come from the environment. Auth tokens are
// read by the HTTP providers directly and never stored in the config.
inline void apply_env_overrides(RunConfig& c) {
  auto env = [](const char* name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name); v && *v) return std::string(v);
    return std::nullopt;
  };
  if (auto v = env("ANCHORQA_CHAT_URL")) c.provider.chat_url = *v;
  if (auto v = env("ANCHORQA_CHAT_MODEL")) c.provider.chat_model = *v;
  if (auto v = env("ANCHORQA_EMBED_URL")) c.provider.embed_url = *v;
  if (auto v = env("ANCHORQA_EMBED_MODEL")) c.provider.embed_model = *v;
}

// Hash of everything that affects trace contents. Concurrency and timing
// capture are excluded so a run can be resumed with different settings.
inline std::string config_hash(const RunConfig& c) {
  nlohmann::json j = c;
  j.erase("concurrency");
  j.erase("record_timing");
  j.erase("retry");
  return to_hex(fnv1a64(j.dump()));
}

}  // namespace anchorqa
