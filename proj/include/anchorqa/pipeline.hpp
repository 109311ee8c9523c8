#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "anchorqa/config.hpp"
#include "anchorqa/corpus.hpp"
#include "anchorqa/index.hpp"
#include "anchorqa/llm.hpp"
#include "anchorqa/prompts.hpp"

namespace anchorqa {

inline constexpr int kTraceSchemaVersion = 1;

// Sentinel hypothesis when System-I yields nothing usable; later stages still
// anchor on the question.
inline constexpr std::string_view kUnknownAnswer = "unknown";

enum class GateDecision { complete, continue_, ungated };

inline std::string_view to_string(GateDecision g) {
  switch (g) {
    case GateDecision::complete: return "complete";
    case GateDecision::continue_: return "continue";
    case GateDecision::ungated: return "ungated";
  }
  return "unknown";
}

inline GateDecision parse_gate_decision(std::string_view s) {
  if (s == "complete") return GateDecision::complete;
  if (s == "continue") return GateDecision::continue_;
  if (s == "ungated") return GateDecision::ungated;
  throw InputError("unknown gate decision '" + std::string(s) + "'");
}

// Confidence at or above the threshold stops at System-I. A disabled
// threshold or a missing confidence always continues.
inline GateDecision gate(const std::optional<Confidence>& confidence,
                         const std::optional<double>& threshold) {
  if (!threshold || !confidence) return GateDecision::continue_;
  return confidence->mean_prob >= *threshold ? GateDecision::complete : GateDecision::continue_;
}

struct ChunkRef {
  std::string chunk_id;
  std::size_t token_count = 0;

  friend bool operator==(const ChunkRef&, const ChunkRef&) = default;
};

struct StageError {
  std::string stage;
  std::string message;

  friend bool operator==(const StageError&, const StageError&) = default;
};

struct PipelineTrace {
  std::string question_id;
  std::string question;
  std::string gold_answer;
  DatasetTag dataset_tag = DatasetTag::hotpotqa;
  Mode mode = Mode::full;

  std::string system1_answer;
  ParseStatus system1_status = ParseStatus::ok;
  bool system1_failed = false;
  std::optional<Confidence> confidence;
  GateDecision gate_decision = GateDecision::ungated;

  std::vector<ReasoningTriple> triples;
  std::size_t triples_malformed = 0;
  std::vector<std::string> retrieval_queries;
  bool retrieval_fallback = false;  // raw question used because no triples parsed
  std::vector<RetrievalHit> hits;
  std::vector<ChunkRef> retrieved_chunks;  // delivered to System-II, retrieval order
  std::size_t payload_tokens = 0;

  std::string final_answer;
  ParseStatus final_status = ParseStatus::ok;
  bool final_fallback = false;  // final answer taken from System-I

  // Input tokens (system + user) of the System-II prompt; for gated-complete
  // questions the prompt is rendered but never sent.
  std::optional<std::size_t> system2_prompt_tokens;
  bool system2_sent = false;
  std::vector<ChunkRef> unsent_chunks;

  std::map<std::string, Usage> usage;
  std::map<std::string, double> timing_ms;
  std::vector<StageError> errors;

  bool failed() const { return !errors.empty(); }
};

inline void to_json(nlohmann::json& j, const Confidence& c) {
  j = {{"mean_prob", c.mean_prob},
       {"mean_logprob", c.mean_logprob},
       {"tokens", c.tokens},
       {"answer_span", c.answer_span}};
}
inline void from_json(const nlohmann::json& j, Confidence& c) {
  j.at("mean_prob").get_to(c.mean_prob);
  j.at("mean_logprob").get_to(c.mean_logprob);
  j.at("tokens").get_to(c.tokens);
  j.at("answer_span").get_to(c.answer_span);
}

inline void to_json(nlohmann::json& j, const Usage& u) {
  j = {{"prompt_tokens", u.prompt_tokens}, {"completion_tokens", u.completion_tokens}};
}
inline void from_json(const nlohmann::json& j, Usage& u) {
  j.at("prompt_tokens").get_to(u.prompt_tokens);
  j.at("completion_tokens").get_to(u.completion_tokens);
}

inline void to_json(nlohmann::json& j, const ChunkRef& c) {
  j = {{"chunk_id", c.chunk_id}, {"token_count", c.token_count}};
}
inline void from_json(const nlohmann::json& j, ChunkRef& c) {
  j.at("chunk_id").get_to(c.chunk_id);
  j.at("token_count").get_to(c.token_count);
}

inline void to_json(nlohmann::json& j, const StageError& e) {
  j = {{"stage", e.stage}, {"message", e.message}};
}
inline void from_json(const nlohmann::json& j, StageError& e) {
  j.at("stage").get_to(e.stage);
  j.at("message").get_to(e.message);
}

inline ParseStatus parse_parse_status(std::string_view s) {
  if (s == "ok") return ParseStatus::ok;
  if (s == "malformed") return ParseStatus::malformed;
  if (s == "empty") return ParseStatus::empty;
  throw InputError("unknown parse status '" + std::string(s) + "'");
}

inline void to_json(nlohmann::json& j, const PipelineTrace& t) {
  j = nlohmann::json{
      {"schema_version", kTraceSchemaVersion},
      {"question_id", t.question_id},
      {"question", t.question},
      {"gold_answer", t.gold_answer},
      {"dataset_tag", std::string(to_string(t.dataset_tag))},
      {"mode", std::string(to_string(t.mode))},
      {"system1_answer", t.system1_answer},
      {"system1_status", std::string(to_string(t.system1_status))},
      {"system1_failed", t.system1_failed},
      {"confidence", t.confidence ? nlohmann::json(*t.confidence) : nlohmann::json(nullptr)},
      {"gate_decision", std::string(to_string(t.gate_decision))},
      {"triples", t.triples},
      {"triples_malformed", t.triples_malformed},
      {"retrieval_queries", t.retrieval_queries},
      {"retrieval_fallback", t.retrieval_fallback},
      {"hits", t.hits},
      {"retrieved_chunks", t.retrieved_chunks},
      {"payload_tokens", t.payload_tokens},
      {"final_answer", t.final_answer},
      {"final_status", std::string(to_string(t.final_status))},
      {"final_fallback", t.final_fallback},
      {"system2_prompt_tokens",
       t.system2_prompt_tokens ? nlohmann::json(*t.system2_prompt_tokens) : nlohmann::json(nullptr)},
      {"system2_sent", t.system2_sent},
      {"unsent_chunks", t.unsent_chunks},
      {"usage", t.usage},
      {"errors", t.errors}};
  if (!t.timing_ms.empty()) j["timing_ms"] = t.timing_ms;
}

inline void from_json(const nlohmann::json& j, PipelineTrace& t) {
  const int version = j.value("schema_version", 0);
  if (version != kTraceSchemaVersion)
    throw InputError("trace schema version " + std::to_string(version) + " is not supported (expected " +
                     std::to_string(kTraceSchemaVersion) + ")");
  j.at("question_id").get_to(t.question_id);
  j.at("question").get_to(t.question);
  j.at("gold_answer").get_to(t.gold_answer);
  t.dataset_tag = parse_dataset_tag(j.at("dataset_tag").get<std::string>());
  t.mode = parse_mode(j.at("mode").get<std::string>());
  j.at("system1_answer").get_to(t.system1_answer);
  t.system1_status = parse_parse_status(j.at("system1_status").get<std::string>());
  j.at("system1_failed").get_to(t.system1_failed);
  if (j.at("confidence").is_null())
    t.confidence.reset();
  else
    t.confidence = j["confidence"].get<Confidence>();
  t.gate_decision = parse_gate_decision(j.at("gate_decision").get<std::string>());
  j.at("triples").get_to(t.triples);
  j.at("triples_malformed").get_to(t.triples_malformed);
  j.at("retrieval_queries").get_to(t.retrieval_queries);
  j.at("retrieval_fallback").get_to(t.retrieval_fallback);
  j.at("hits").get_to(t.hits);
  j.at("retrieved_chunks").get_to(t.retrieved_chunks);
  j.at("payload_tokens").get_to(t.payload_tokens);
  j.at("final_answer").get_to(t.final_answer);
  t.final_status = parse_parse_status(j.at("final_status").get<std::string>());
  j.at("final_fallback").get_to(t.final_fallback);
  if (j.at("system2_prompt_tokens").is_null())
    t.system2_prompt_tokens.reset();
  else
    t.system2_prompt_tokens = j["system2_prompt_tokens"].get<std::size_t>();
  j.at("system2_sent").get_to(t.system2_sent);
  j.at("unsent_chunks").get_to(t.unsent_chunks);
  j.at("usage").get_to(t.usage);
  t.timing_ms.clear();
  if (j.contains("timing_ms")) j["timing_ms"].get_to(t.timing_ms);
  j.at("errors").get_to(t.errors);
}

// ---------------------------------------------------------------------------
// Stage results

struct System1Result {
  std::string answer;  // kUnknownAnswer when nothing could be parsed
  ParseStatus status = ParseStatus::ok;
  bool failed = false;
  std::optional<Confidence> confidence;
  Usage usage;
};

struct TripleResult {
  std::vector<ReasoningTriple> triples;
  std::size_t malformed = 0;
  Usage usage;
};

struct Evidence {
  TripleRetrieval retrieval;
  bool fallback = false;
  std::vector<const Chunk*> chunks;
};

struct System2Result {
  std::string answer;
  ParseStatus status = ParseStatus::ok;
  bool fell_back = false;
  std::size_t prompt_tokens = 0;
  Usage usage;
};

inline std::vector<ChunkRef> chunk_refs(const std::vector<const Chunk*>& chunks) {
  std::vector<ChunkRef> out;
  out.reserve(chunks.size());
  for (const auto* c : chunks) out.push_back({c->chunk_id, c->token_count});
  return out;
}

// Input tokens the model would prefill for a prompt.
inline std::size_t prompt_tokens(const RenderedPrompt& p, const Tokenizer& tokenizer) {
  return tokenizer.count(p.system) + tokenizer.count(p.user);
}

// The four-stage answer-first pipeline over one shared, read-only index.
// Holds no per-question state, so one instance serves concurrent questions.
class Pipeline {
 public:
  Pipeline(const DenseIndex& index, ChatProvider& chat, EmbeddingProvider& embedder,
           RunConfig config, PromptSet prompts = PromptSet::defaults(),
           const Tokenizer& tokenizer = default_tokenizer())
      : index_(index),
        chat_(chat),
        embedder_(embedder),
        config_(std::move(config)),
        prompts_(std::move(prompts)),
        tokenizer_(tokenizer) {
    config_.validate();
    index_.check_provider(embedder_);
  }

  const RunConfig& config() const { return config_; }
  const PromptSet& prompts() const { return prompts_; }

  System1Result answer_system1(const QAItem& q) const {
    const auto prompt = render_system1(q, prompts_);
    const auto resp = send(prompt, config_.max_new_tokens.system1, /*want_logprobs=*/true);
    System1Result r;
    r.usage = resp.usage;
    const auto parsed = parse_answer(resp.text);
    r.status = parsed.status;
    if (parsed.empty()) {
      r.answer = std::string(kUnknownAnswer);
      r.failed = true;
    } else {
      r.answer = parsed.value;
    }
    r.confidence = mean_token_confidence(resp);
    return r;
  }

  TripleResult generate_triples(const QAItem& q, const std::string& hypothesis) const {
    const auto prompt = render_triplegen(q, hypothesis, prompts_);
    const auto resp = send(prompt, config_.max_new_tokens.triple_gen, false);
    auto parsed = parse_triples(resp.text);
    return {std::move(parsed.triples), parsed.malformed, resp.usage};
  }

  Evidence gather_evidence(const QAItem& q, const std::vector<ReasoningTriple>& triples) const {
    std::vector<std::string> queries;
    for (const auto& t : triples) queries.push_back(render_query(t, config_.query_style));
    Evidence ev;
    if (queries.empty()) {
      ev.fallback = true;
      queries.push_back(q.question);
    } else if (config_.question_as_query) {
      queries.push_back(q.question);
    }
    ev.retrieval = retrieve_for_queries(index_, queries, embedder_, config_.k_per_triple);
    for (const auto& id : ev.retrieval.chunk_ids) ev.chunks.push_back(index_.find(id));
    return ev;
  }

  RenderedPrompt system2_prompt(const QAItem& q, const std::string& hypothesis,
                                const std::vector<ReasoningTriple>& triples,
                                const std::vector<const Chunk*>& chunks,
                                bool include_anchor) const {
    return render_system2(q, hypothesis, triples, chunks, include_anchor, prompts_);
  }

  System2Result answer_system2(const QAItem& q, const std::string& hypothesis,
                               const std::vector<ReasoningTriple>& triples,
                               const std::vector<const Chunk*>& chunks,
                               bool include_anchor) const {
    const auto prompt = system2_prompt(q, hypothesis, triples, chunks, include_anchor);
    System2Result r;
    r.prompt_tokens = prompt_tokens(prompt, tokenizer_);
    const auto resp = send(prompt, config_.max_new_tokens.system2, false);
    r.usage = resp.usage;
    const auto parsed = parse_final(resp.text);
    r.status = parsed.status;
    r.answer = parsed.value;
    if (parsed.empty() && include_anchor) {
      r.answer = hypothesis;
      r.fell_back = true;
    }
    return r;
  }

  // Runs one question end to end in the configured mode. Stage failures are
  // recorded in the trace; this never throws for provider or retrieval errors.
  PipelineTrace run_question(const QAItem& q) const {
    PipelineTrace t;
    t.question_id = q.question_id;
    t.question = q.question;
    t.gold_answer = q.gold_answer;
    t.dataset_tag = q.dataset_tag;
    t.mode = config_.mode;

    if (config_.mode == Mode::standard_rag) {
      run_standard_rag(q, t);
      finalize(t);
      return t;
    }

    // System-I
    timed(t, "system1", [&] {
      const auto r = answer_system1(q);
      t.system1_answer = r.answer;
      t.system1_status = r.status;
      t.system1_failed = r.failed;
      t.confidence = r.confidence;
      t.usage["system1"] += r.usage;
    });
    if (t.system1_answer.empty()) {
      t.system1_answer = std::string(kUnknownAnswer);
      t.system1_failed = true;
    }

    if (config_.mode == Mode::system1_only) {
      t.final_answer = t.system1_answer;
      t.final_status = t.system1_status;
      finalize(t);
      return t;
    }

    bool send_system2 = true;
    if (config_.mode == Mode::threshold_gated) {
      t.gate_decision = t.system1_failed ? GateDecision::continue_
                                         : gate(t.confidence, config_.confidence_threshold);
      if (t.gate_decision == GateDecision::complete) {
        t.final_answer = t.system1_answer;
        t.final_status = t.system1_status;
        send_system2 = false;
        if (!config_.estimate_savings) {
          finalize(t);
          return t;
        }
      }
    }

    // System-II: triples, evidence, final answer.
    timed(t, "triple_gen", [&] {
      auto r = generate_triples(q, t.system1_answer);
      t.triples = std::move(r.triples);
      t.triples_malformed = r.malformed;
      t.usage["triple_gen"] += r.usage;
    });

    std::vector<const Chunk*> chunks;
    timed(t, "retrieval", [&] {
      auto ev = gather_evidence(q, t.triples);
      t.retrieval_queries = ev.retrieval.queries;
      t.retrieval_fallback = ev.fallback;
      t.hits = std::move(ev.retrieval.hits);
      chunks = std::move(ev.chunks);
    });

    const bool anchor = config_.mode != Mode::no_initial_reasoning;
    if (!send_system2) {
      if (!chunks.empty()) {
        t.unsent_chunks = chunk_refs(chunks);
        t.system2_prompt_tokens =
            prompt_tokens(system2_prompt(q, t.system1_answer, t.triples, chunks, anchor), tokenizer_);
      }
      finalize(t);
      return t;
    }

    t.retrieved_chunks = chunk_refs(chunks);
    if (chunks.empty()) {
      t.errors.push_back({"system2", "no evidence retrieved; System-II skipped"});
    } else {
      timed(t, "system2", [&] {
        t.system2_sent = true;
        const auto r = answer_system2(q, t.system1_answer, t.triples, chunks, anchor);
        t.system2_prompt_tokens = r.prompt_tokens;
        t.final_answer = r.answer;
        t.final_status = r.status;
        t.final_fallback = r.fell_back;
        t.usage["system2"] += r.usage;
      });
    }
    if (t.final_answer.empty() && anchor) {
      t.final_answer = t.system1_answer;
      t.final_fallback = true;
    }
    finalize(t);
    return t;
  }

 private:
  ChatResponse send(const RenderedPrompt& p, std::size_t max_new_tokens, bool want_logprobs) const {
    ChatRequest req;
    req.system_prompt = p.system;
    req.user_prompt = p.user;
    req.max_new_tokens = max_new_tokens;
    req.temperature = config_.temperature;
    req.want_logprobs = want_logprobs;
    req.stage_tag = std::string(to_string(p.stage));
    req.question_id = p.source_question_id;
    return complete(req, chat_, config_.retry);
  }

  template <typename F>
  void timed(PipelineTrace& t, const std::string& stage, F&& f) const {
    const auto started = std::chrono::steady_clock::now();
    try {
      f();
    } catch (const std::exception& e) {
      t.errors.push_back({stage, e.what()});
    }
    if (config_.record_timing)
      t.timing_ms[stage] =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  }

  void run_standard_rag(const QAItem& q, PipelineTrace& t) const {
    std::vector<const Chunk*> chunks;
    timed(t, "retrieval", [&] {
      auto r = retrieve_for_queries(index_, {q.question}, embedder_, config_.k_per_triple);
      t.retrieval_queries = r.queries;
      t.hits = std::move(r.hits);
      for (const auto& id : r.chunk_ids) chunks.push_back(index_.find(id));
    });
    t.retrieved_chunks = chunk_refs(chunks);
    if (chunks.empty()) {
      t.errors.push_back({"standard_rag", "no evidence retrieved"});
      return;
    }
    timed(t, "standard_rag", [&] {
      const auto prompt = render_standard_rag(q, chunks, prompts_);
      t.system2_prompt_tokens = prompt_tokens(prompt, tokenizer_);
      t.system2_sent = true;
      const auto resp = send(prompt, config_.max_new_tokens.system2, false);
      t.usage["standard_rag"] += resp.usage;
      const auto parsed = parse_final(resp.text);
      t.final_answer = parsed.value;
      t.final_status = parsed.status;
    });
  }

  static void finalize(PipelineTrace& t) {
    t.payload_tokens = 0;
    for (const auto& c : t.retrieved_chunks) t.payload_tokens += c.token_count;
  }

  const DenseIndex& index_;
  ChatProvider& chat_;
  EmbeddingProvider& embedder_;
  RunConfig config_;
  PromptSet prompts_;
  const Tokenizer& tokenizer_;
};

// ---------------------------------------------------------------------------
// Trace files: one header line, then one trace per line.

struct TraceFileHeader {
  int schema_version = kTraceSchemaVersion;
  RunConfig config;
  std::string config_hash;
  nlohmann::json index_info = nlohmann::json::object();
};

inline nlohmann::json header_json(const TraceFileHeader& h) {
  return {{"kind", "header"},
          {"schema_version", h.schema_version},
          {"config", h.config},
          {"config_hash", h.config_hash},
          {"index", h.index_info}};
}

struct TraceFile {
  TraceFileHeader header;
  std::vector<PipelineTrace> traces;
};

inline TraceFileHeader parse_header(const nlohmann::json& j, const std::string& source) {
  if (j.value("kind", "") != "header") throw InputError(source + ": missing trace file header");
  TraceFileHeader h;
  h.schema_version = j.value("schema_version", 0);
  if (h.schema_version != kTraceSchemaVersion)
    throw InputError(source + ": trace schema version " + std::to_string(h.schema_version) +
                     " is not supported (expected " + std::to_string(kTraceSchemaVersion) + ")");
  h.config = j.at("config").get<RunConfig>();
  h.config_hash = j.value("config_hash", "");
  h.index_info = j.value("index", nlohmann::json::object());
  return h;
}

// Reads a trace file. With `tolerate_torn_tail`, an unterminated or
// unparsable final line (an interrupted write) is dropped; `valid_bytes`
// receives the length of the intact prefix.
inline TraceFile read_trace_file(const std::filesystem::path& path, bool tolerate_torn_tail = false,
                                 std::size_t* valid_bytes = nullptr) {
  const std::string content = detail::read_file(path);
  TraceFile tf;
  bool have_header = false;
  std::size_t offset = 0, lineno = 0;
  while (offset < content.size()) {
    ++lineno;
    const auto nl = content.find('\n', offset);
    const bool terminated = nl != std::string::npos;
    const auto end = terminated ? nl : content.size();
    const auto line = std::string_view(content).substr(offset, end - offset);
    const bool last = !terminated || content.find_first_not_of(" \t\r\n", nl) == std::string::npos;
    if (detail::trim(line).empty()) {
      offset = terminated ? nl + 1 : end;
      continue;
    }
    if (!terminated && tolerate_torn_tail) break;
    try {
      const auto j = nlohmann::json::parse(line);
      if (!have_header) {
        tf.header = parse_header(j, path.string());
        have_header = true;
      } else {
        tf.traces.push_back(j.get<PipelineTrace>());
      }
    } catch (const nlohmann::json::exception& e) {
      if (tolerate_torn_tail && last) break;
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    offset = terminated ? nl + 1 : end;
  }
  if (valid_bytes) *valid_bytes = have_header ? offset : 0;
  if (!have_header && !tolerate_torn_tail) throw InputError(path.string() + ": empty trace file");
  return tf;
}

struct RunOptions {
  // Stop picking up new questions after this many (simulates an interrupted
  // run in tests; 0 means no limit).
  std::size_t stop_after = 0;
  std::function<void(const PipelineTrace&)> on_trace;
};

// Appends traces in question_id order, buffering results that finish early.
class OrderedTraceWriter {
 public:
  OrderedTraceWriter(std::ostream* out, std::size_t total) : out_(out), slots_(total) {}

  void submit(std::size_t slot, PipelineTrace trace) {
    std::lock_guard lock(mu_);
    slots_[slot] = std::move(trace);
    while (next_ < slots_.size() && slots_[next_]) {
      if (out_) {
        *out_ << nlohmann::json(*slots_[next_]).dump() << '\n';
        out_->flush();
      }
      ++next_;
    }
  }

  std::vector<PipelineTrace> take() {
    std::vector<PipelineTrace> out;
    for (auto& s : slots_)
      if (s) out.push_back(std::move(*s));
    return out;
  }

 private:
  std::ostream* out_;
  std::mutex mu_;
  std::vector<std::optional<PipelineTrace>> slots_;
  std::size_t next_ = 0;
};

inline std::vector<QAItem> sorted_by_id(std::vector<QAItem> items) {
  std::sort(items.begin(), items.end(),
            [](const QAItem& a, const QAItem& b) { return a.question_id < b.question_id; });
  for (std::size_t i = 1; i < items.size(); ++i)
    if (items[i].question_id == items[i - 1].question_id)
      throw InputError("duplicate question_id '" + items[i].question_id + "'");
  return items;
}

// Runs every item not yet present in `trace_path` (when given), appending
// traces in question_id order. Questions run concurrently up to
// config.concurrency. Returns the complete trace list, previous runs included.
inline std::vector<PipelineTrace> run_dataset(const std::vector<QAItem>& items,
                                              const Pipeline& pipeline,
                                              const std::optional<std::filesystem::path>& trace_path = std::nullopt,
                                              const nlohmann::json& index_info = nlohmann::json::object(),
                                              const RunOptions& options = {}) {
  const auto ordered = sorted_by_id(items);
  std::vector<PipelineTrace> previous;
  std::ofstream out;
  if (trace_path) {
    TraceFileHeader header{kTraceSchemaVersion, pipeline.config(), config_hash(pipeline.config()), index_info};
    std::size_t valid = 0;
    TraceFile existing;
    if (std::filesystem::exists(*trace_path)) existing = read_trace_file(*trace_path, true, &valid);
    if (valid > 0) {
      if (existing.header.config_hash != header.config_hash)
        throw InputError(trace_path->string() +
                         " was produced with a different configuration; refusing to resume");
      std::filesystem::resize_file(*trace_path, valid);
      previous = std::move(existing.traces);
      out.open(*trace_path, std::ios::binary | std::ios::app);
    } else {
      out.open(*trace_path, std::ios::binary | std::ios::trunc);
      if (out) out << header_json(header).dump() << '\n';
    }
    if (!out) throw IoError("cannot write trace file: " + trace_path->string());
  }

  std::set<std::string> done;
  for (const auto& t : previous) done.insert(t.question_id);
  std::vector<const QAItem*> todo;
  for (const auto& item : ordered)
    if (!done.count(item.question_id)) todo.push_back(&item);
  if (options.stop_after && todo.size() > options.stop_after) todo.resize(options.stop_after);

  OrderedTraceWriter writer(trace_path ? &out : nullptr, todo.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < todo.size(); i = next++) {
      auto trace = pipeline.run_question(*todo[i]);
      if (options.on_trace) options.on_trace(trace);
      writer.submit(i, std::move(trace));
    }
  };
  const std::size_t n_threads = std::min(pipeline.config().concurrency, std::max<std::size_t>(1, todo.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  }

  auto fresh = writer.take();
  std::move(fresh.begin(), fresh.end(), std::back_inserter(previous));
  std::sort(previous.begin(), previous.end(),
            [](const auto& a, const auto& b) { return a.question_id < b.question_id; });
  return previous;
}

}  // namespace anchorqa
