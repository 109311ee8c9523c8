// anchorqa: ingest datasets, build the chunk index, run the pipeline and
// score/report the resulting traces.

#include <algorithm>
#include <cstring>
#include <map>
#include <sstream>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "anchorqa/anchorqa.hpp"
#include "anchorqa/http.hpp"

namespace fs = std::filesystem;
using namespace anchorqa;

namespace {

constexpr int kExitError = 1;
constexpr int kExitFailureRate = 3;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write file: " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw IoError(what + " not found: " + p.string());
}

std::string hash_file(const fs::path& p) { return to_hex(fnv1a64(detail::read_file(p))); }

// ---------------------------------------------------------------------------
// ingest

struct IngestArgs {
  std::string dataset;
  std::string format;
  std::string out;
  std::optional<std::size_t> sample;
  std::uint64_t seed = 42;
  std::size_t chunk_size = 400;
  std::size_t stride = 50;
  std::string scope = "all";
};

int cmd_ingest(const IngestArgs& a) {
  require_file(a.dataset, "dataset");
  if (a.sample && *a.sample == 0) throw InputError("--sample must be at least 1");
  const auto tag = parse_dataset_tag(a.format);
  auto data = load_dataset(a.dataset, tag);
  if (data.items.empty()) throw InputError("no usable questions in " + a.dataset);

  std::vector<std::size_t> picked;
  if (a.sample) {
    // Sample indices, not items, so the linked passages can follow.
    std::vector<QAItem> keyed;
    for (std::size_t i = 0; i < data.items.size(); ++i) {
      QAItem k;
      k.question_id = std::to_string(i);
      keyed.push_back(std::move(k));
    }
    for (const auto& k : sample_questions(keyed, *a.sample, a.seed)) picked.push_back(std::stoul(k.question_id));
  } else {
    for (std::size_t i = 0; i < data.items.size(); ++i) picked.push_back(i);
  }

  std::vector<QAItem> questions;
  for (auto i : picked) questions.push_back(data.items[i]);

  std::vector<Document> docs;
  if (a.scope == "all") {
    docs = data.documents;
  } else if (a.scope == "sampled") {
    std::vector<bool> keep(data.documents.size(), false);
    for (auto i : picked)
      for (auto d : data.item_documents[i]) keep[d] = true;
    for (std::size_t d = 0; d < keep.size(); ++d)
      if (keep[d]) docs.push_back(data.documents[d]);
  } else {
    throw InputError("--index-scope must be 'all' or 'sampled'");
  }

  const ChunkParams params{a.chunk_size, a.stride};
  const auto chunks = build_corpus(docs, params);

  fs::create_directories(a.out);
  const fs::path out(a.out);
  write_jsonl_file(out / "questions.jsonl", questions);
  write_jsonl_file(out / "chunks.jsonl", chunks);

  nlohmann::json settings = {{"format", std::string(to_string(tag))},
                             {"sample", a.sample ? nlohmann::json(*a.sample) : nlohmann::json(nullptr)},
                             {"seed", a.seed},
                             {"chunk_size", params.chunk_size},
                             {"stride", params.stride},
                             {"index_scope", a.scope},
                             {"tokenizer", default_tokenizer().id()}};
  nlohmann::json manifest = {
      {"kind", "corpus_manifest"},
      {"dataset", a.dataset},
      {"dataset_hash", hash_file(a.dataset)},
      {"settings", settings},
      {"config_hash", to_hex(fnv1a64(settings.dump()))},
      {"questions", questions.size()},
      {"documents", docs.size()},
      {"chunks", chunks.size()},
      {"load_report",
       {{"records", data.report.records},
        {"skipped", data.report.skipped},
        {"skipped_ids", data.report.skipped_ids},
        {"passages", data.report.passages},
        {"empty_passages", data.report.empty_passages},
        {"duplicate_passages", data.report.duplicate_passages}}}};
  write_text(out / "manifest.json", manifest.dump(2) + "\n");

  std::cerr << "ingested " << questions.size() << " questions, " << docs.size() << " documents, "
            << chunks.size() << " chunks";
  if (data.report.skipped) std::cerr << " (skipped " << data.report.skipped << " records)";
  std::cerr << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// providers

std::unique_ptr<EmbeddingProvider> make_embedder(const ProviderSettings& p) {
  if (p.embedder == "hash") return std::make_unique<HashingEmbedder>(p.hash_dim);
  if (p.embedder == "openai") {
    if (p.embed_url.empty() || p.embed_model.empty())
      throw InputError("the openai embedder needs an embed URL and model");
    return std::make_unique<OpenAIEmbeddingProvider>(p.embed_url, p.embed_model, p.timeout_s);
  }
  throw InputError("unknown embedder '" + p.embedder + "' (expected hash or openai)");
}

// Picks the embedder recorded in an index, so queries always match it.
std::unique_ptr<EmbeddingProvider> embedder_for_index(const DenseIndex& idx, ProviderSettings p) {
  constexpr std::string_view hash_prefix = "hash-ngram3-d";
  if (idx.embedder_id().starts_with(hash_prefix)) {
    p.embedder = "hash";
    p.hash_dim = std::stoul(idx.embedder_id().substr(hash_prefix.size()));
  } else {
    p.embedder = "openai";
    if (p.embed_model.empty()) p.embed_model = idx.embedder_id().substr(std::strlen("openai:"));
  }
  auto e = make_embedder(p);
  idx.check_provider(*e);
  return e;
}

std::unique_ptr<ChatProvider> make_chat(const ProviderSettings& p) {
  if (p.chat == "scripted") {
    if (p.fixtures.empty()) throw InputError("the scripted provider needs --fixtures");
    require_file(p.fixtures, "fixture file");
    return std::make_unique<ScriptedProvider>(read_jsonl_file<ScriptedFixture>(p.fixtures),
                                              p.supports_logprobs);
  }
  if (p.chat == "openai") {
    if (p.chat_url.empty() || p.chat_model.empty())
      throw InputError("the openai provider needs a chat URL and model (flags, config or ANCHORQA_CHAT_URL/ANCHORQA_CHAT_MODEL)");
    return std::make_unique<OpenAIChatProvider>(p.chat_url, p.chat_model, p.timeout_s);
  }
  throw InputError("unknown chat provider '" + p.chat + "' (expected scripted or openai)");
}

// ---------------------------------------------------------------------------
// build-index

struct BuildArgs {
  std::string chunks;
  std::string out;
  ProviderSettings provider;
  std::size_t batch_size = 64;
};

int cmd_build_index(BuildArgs a) {
  require_file(a.chunks, "chunk file");
  {
    RunConfig env_cfg;
    env_cfg.provider = a.provider;
    apply_env_overrides(env_cfg);
    a.provider = env_cfg.provider;
  }
  auto chunks = read_jsonl_file<Chunk>(a.chunks);
  auto embedder = make_embedder(a.provider);
  const auto idx = DenseIndex::build(std::move(chunks), *embedder, {a.batch_size, 4});
  idx.save(a.out);
  nlohmann::json meta = {{"kind", "index_meta"},
                         {"chunks_file", a.chunks},
                         {"chunks_hash", hash_file(a.chunks)},
                         {"embedder", idx.embedder_id()},
                         {"tokenizer", idx.tokenizer_id()},
                         {"dim", idx.dim()},
                         {"count", idx.size()}};
  meta["config_hash"] = to_hex(fnv1a64(meta.dump()));
  write_text(a.out + ".meta.json", meta.dump(2) + "\n");
  std::cerr << "indexed " << idx.size() << " chunks with " << idx.embedder_id() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// run

struct RunArgs {
  std::string questions;
  std::string index;
  std::string out;
  std::string config;
  std::optional<std::string> mode;
  std::optional<std::size_t> k;
  std::optional<double> tau;
  std::optional<std::size_t> concurrency;
  std::optional<std::string> chat;
  std::optional<std::string> fixtures;
  std::optional<std::string> chat_url;
  std::optional<std::string> chat_model;
  std::optional<std::string> prompts;
  std::optional<std::string> query_style;
  bool question_as_query = false;
  bool timing = false;
  bool no_logprobs = false;
  bool fresh = false;
  std::size_t limit = 0;
  double max_failure_rate = 1.0;
};

int cmd_run(const RunArgs& a) {
  require_file(a.questions, "question file");
  require_file(a.index, "index");
  RunConfig cfg = a.config.empty() ? RunConfig{} : (require_file(a.config, "config file"), load_run_config(a.config));
  apply_env_overrides(cfg);
  if (a.mode) cfg.mode = parse_mode(*a.mode);
  if (a.k) cfg.k_per_triple = *a.k;
  if (a.tau) cfg.confidence_threshold = *a.tau;
  if (a.concurrency) cfg.concurrency = *a.concurrency;
  if (a.chat) cfg.provider.chat = *a.chat;
  if (a.fixtures) cfg.provider.fixtures = *a.fixtures;
  if (a.chat_url) cfg.provider.chat_url = *a.chat_url;
  if (a.chat_model) cfg.provider.chat_model = *a.chat_model;
  if (a.prompts) cfg.prompts_dir = *a.prompts;
  if (a.query_style) cfg.query_style = parse_triple_query_style(*a.query_style);
  if (a.question_as_query) cfg.question_as_query = true;
  if (a.timing) cfg.record_timing = true;
  if (a.no_logprobs) cfg.provider.supports_logprobs = false;
  if (cfg.mode == Mode::threshold_gated && !cfg.confidence_threshold)
    throw InputError("threshold_gated mode needs --tau or confidence_threshold in the config");
  cfg.validate();

  const auto index = DenseIndex::load(a.index);
  auto embedder = embedder_for_index(index, cfg.provider);
  auto chat = make_chat(cfg.provider);
  auto prompts = cfg.prompts_dir.empty() ? PromptSet::defaults() : PromptSet::from_directory(cfg.prompts_dir);
  auto questions = read_jsonl_file<QAItem>(a.questions);
  if (questions.empty()) throw InputError("no questions in " + a.questions);
  if (a.fresh && fs::exists(a.out)) fs::remove(a.out);

  Pipeline pipeline(index, *chat, *embedder, cfg, std::move(prompts));
  nlohmann::json index_info = {{"path", a.index},
                               {"embedder", index.embedder_id()},
                               {"tokenizer", index.tokenizer_id()},
                               {"chunks", index.size()},
                               {"dim", index.dim()}};
  RunOptions opts;
  opts.stop_after = a.limit;
  std::size_t seen = 0;
  opts.on_trace = [&](const PipelineTrace& t) {
    ++seen;
    if (t.failed()) std::cerr << "  " << t.question_id << ": " << t.errors.front().stage << ": " << t.errors.front().message << "\n";
  };
  const auto traces = run_dataset(questions, pipeline, fs::path(a.out), index_info, opts);

  std::size_t failed = 0;
  for (const auto& t : traces) failed += t.failed() ? 1 : 0;
  const double rate = traces.empty() ? 0.0 : static_cast<double>(failed) / static_cast<double>(traces.size());
  std::cerr << "ran " << seen << " new questions; " << traces.size() << " traces in " << a.out << ", " << failed
            << " with stage errors\n";
  if (rate > a.max_failure_rate) {
    std::cerr << "error: failure rate " << rate << " exceeds --max-failure-rate " << a.max_failure_rate << "\n";
    return kExitFailureRate;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// eval / transitions / report / inspect

std::vector<PipelineTrace> load_traces(const std::string& path) {
  require_file(path, "trace file");
  auto tf = read_trace_file(path);
  if (tf.traces.empty()) throw InputError(path + " contains no traces");
  return std::move(tf.traces);
}

std::string label_of(const std::string& path) { return fs::path(path).stem().string(); }

void print_report(const std::vector<RunSummary>& rows, const std::vector<PairedTransition>& pairs,
                  const std::string& format) {
  if (format == "text") std::cout << render_text(rows, pairs);
  else if (format == "csv") std::cout << render_csv(rows);
  else if (format == "json") std::cout << render_json(rows, pairs).dump(2) << "\n";
  else throw InputError("--format must be text, csv or json");
}

int cmd_eval(const std::vector<std::string>& files, const std::string& format, bool per_question) {
  std::vector<RunSummary> rows;
  for (const auto& f : files) {
    const auto traces = load_traces(f);
    if (per_question) {
      for (const auto& s : score_final(traces))
        std::cout << nlohmann::json({{"run", label_of(f)}, {"question_id", s.question_id}, {"em", s.em}, {"f1", s.f1}})
                         .dump()
                  << "\n";
      continue;
    }
    auto part = summarize(label_of(f), traces);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  if (!per_question) print_report(rows, {}, format);
  return 0;
}

int cmd_transitions(const std::vector<std::string>& files, const std::string& format) {
  if (files.empty() || files.size() > 2) throw InputError("transitions takes one or two trace files");
  std::vector<PairedTransition> pairs;
  if (files.size() == 1) {
    const auto traces = load_traces(files[0]);
    std::map<std::string, std::vector<PipelineTrace>> groups;
    for (const auto& t : traces) groups[std::string(to_string(t.dataset_tag))].push_back(t);
    for (const auto& [tag, g] : groups)
      pairs.push_back({label_of(files[0]) + ":system1", label_of(files[0]) + ":final", tag, transitions(g)});
  } else {
    pairs = paired_transitions(label_of(files[0]), load_traces(files[0]), label_of(files[1]), load_traces(files[1]));
  }
  print_report({}, pairs, format);
  return 0;
}

int cmd_report(const std::vector<std::string>& files, const std::string& format) {
  std::vector<std::pair<std::string, std::vector<PipelineTrace>>> runs;
  for (const auto& f : files) runs.emplace_back(label_of(f), load_traces(f));
  std::vector<RunSummary> rows;
  for (const auto& [label, traces] : runs) {
    auto part = summarize(label, traces);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  // Pair every System-I-only run with each other run over the same questions.
  std::vector<PairedTransition> pairs;
  auto ids = [](const std::vector<PipelineTrace>& ts) {
    std::vector<std::string> v;
    for (const auto& t : ts) v.push_back(t.question_id);
    std::sort(v.begin(), v.end());
    return v;
  };
  for (const auto& [bl, before] : runs) {
    if (before.front().mode != Mode::system1_only) continue;
    for (const auto& [al, after] : runs) {
      if (&after == &before || after.front().mode == Mode::system1_only || ids(after) != ids(before)) continue;
      auto p = paired_transitions(bl, before, al, after);
      pairs.insert(pairs.end(), p.begin(), p.end());
    }
  }
  print_report(rows, pairs, format);
  return 0;
}

int cmd_inspect(const std::string& path, const std::string& id) {
  require_file(path, "file");
  const auto head = detail::read_file(path).substr(0, 8);
  if (head.size() == 8 && std::memcmp(head.data(), "AQIDX", 5) == 0) {
    const auto idx = DenseIndex::load(path);
    std::cout << nlohmann::json({{"kind", "index"},
                                 {"embedder", idx.embedder_id()},
                                 {"tokenizer", idx.tokenizer_id()},
                                 {"dim", idx.dim()},
                                 {"chunks", idx.size()}})
                     .dump(2)
              << "\n";
    if (!id.empty()) {
      const auto* c = idx.find(id);
      if (!c) throw InputError("no chunk '" + id + "' in " + path);
      std::cout << nlohmann::json(*c).dump(2) << "\n";
    }
    return 0;
  }
  const auto first = nlohmann::json::parse(head.empty() ? std::string("null") : [&] {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    return line;
  }(), nullptr, false);
  if (first.is_object() && first.value("kind", "") == "header") {
    const auto tf = read_trace_file(path);
    if (!id.empty()) {
      for (const auto& t : tf.traces)
        if (t.question_id == id) {
          std::cout << nlohmann::json(t).dump(2) << "\n";
          return 0;
        }
      throw InputError("no trace for question '" + id + "' in " + path);
    }
    std::size_t failed = 0;
    for (const auto& t : tf.traces) failed += t.failed() ? 1 : 0;
    std::cout << nlohmann::json({{"kind", "traces"},
                                 {"schema_version", tf.header.schema_version},
                                 {"config_hash", tf.header.config_hash},
                                 {"config", tf.header.config},
                                 {"index", tf.header.index_info},
                                 {"traces", tf.traces.size()},
                                 {"failed", failed}})
                     .dump(2)
              << "\n";
    return 0;
  }
  // Anything else: pretty-print JSON, or count JSONL rows.
  const auto content = detail::read_file(path);
  const auto whole = nlohmann::json::parse(content, nullptr, false);
  if (!whole.is_discarded()) {
    std::cout << whole.dump(2) << "\n";
    return 0;
  }
  std::istringstream in(content);
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line))
    if (!detail::trim(line).empty()) ++rows;
  std::cout << nlohmann::json({{"kind", "jsonl"}, {"rows", rows}}).dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"anchorqa: answer-first retrieval QA pipeline"};
  app.require_subcommand(1);
  std::function<int()> action;

  IngestArgs ia;
  auto* ingest = app.add_subcommand("ingest", "Load a dataset, sample questions and chunk its passages");
  ingest->add_option("--dataset", ia.dataset, "Dataset file (JSON array or JSONL)")->required();
  ingest->add_option("--format", ia.format, "hotpotqa, 2wiki or musique")->required();
  ingest->add_option("--out", ia.out, "Output directory")->required();
  ingest->add_option("--sample", ia.sample, "Number of questions to sample (default: all)");
  ingest->add_option("--seed", ia.seed, "Sampling seed")->capture_default_str();
  ingest->add_option("--chunk-size", ia.chunk_size, "Tokens per chunk")->capture_default_str();
  ingest->add_option("--stride", ia.stride, "Token overlap between chunks")->capture_default_str();
  ingest->add_option("--index-scope", ia.scope, "Passages to chunk: all or sampled")->capture_default_str();
  ingest->callback([&] { action = [&] { return cmd_ingest(ia); }; });

  BuildArgs ba;
  auto* build = app.add_subcommand("build-index", "Embed chunks and write the search index");
  build->add_option("--chunks", ba.chunks, "chunks.jsonl from ingest")->required();
  build->add_option("--out", ba.out, "Index file")->required();
  build->add_option("--embedder", ba.provider.embedder, "hash or openai")->capture_default_str();
  build->add_option("--hash-dim", ba.provider.hash_dim, "Dimension of the hashing embedder")->capture_default_str();
  build->add_option("--embed-url", ba.provider.embed_url, "OpenAI-compatible base URL");
  build->add_option("--embed-model", ba.provider.embed_model, "Embedding model name");
  build->add_option("--batch-size", ba.batch_size, "Texts per embedding request")->capture_default_str();
  build->callback([&] { action = [&] { return cmd_build_index(ba); }; });

  RunArgs ra;
  auto* run = app.add_subcommand("run", "Run the pipeline over a question file; resumes an existing trace file");
  run->add_option("--questions", ra.questions, "questions.jsonl from ingest")->required();
  run->add_option("--index", ra.index, "Index file from build-index")->required();
  run->add_option("--out", ra.out, "Trace file (JSONL)")->required();
  run->add_option("--config", ra.config, "Run config (JSON)");
  run->add_option("--mode", ra.mode, "full, system1_only, no_initial_reasoning, threshold_gated, standard_rag");
  run->add_option("--k", ra.k, "Chunks retrieved per triple");
  run->add_option("--tau", ra.tau, "Confidence threshold for threshold_gated");
  run->add_option("--concurrency", ra.concurrency, "Questions in flight");
  run->add_option("--provider", ra.chat, "scripted or openai");
  run->add_option("--fixtures", ra.fixtures, "Scripted fixture JSONL");
  run->add_option("--chat-url", ra.chat_url, "OpenAI-compatible base URL, e.g. http://localhost:8000/v1");
  run->add_option("--chat-model", ra.chat_model, "Chat model name");
  run->add_option("--prompts", ra.prompts, "Directory of prompt template overrides");
  run->add_option("--query-style", ra.query_style, "spaced or piped triple queries");
  run->add_flag("--question-as-query", ra.question_as_query, "Also retrieve with the raw question");
  run->add_flag("--timing", ra.timing, "Record stage timings in traces");
  run->add_flag("--no-logprobs", ra.no_logprobs, "Treat the provider as lacking logprobs");
  run->add_flag("--fresh", ra.fresh, "Discard an existing trace file instead of resuming");
  run->add_option("--limit", ra.limit, "Stop after this many new questions");
  run->add_option("--max-failure-rate", ra.max_failure_rate,
                  "Exit with status 3 when more than this fraction of questions had stage errors")
      ->capture_default_str();
  run->callback([&] { action = [&] { return cmd_run(ra); }; });

  std::vector<std::string> eval_files;
  std::string eval_format = "text";
  bool per_question = false;
  auto* ev = app.add_subcommand("eval", "Score trace files (EM/F1/payload per dataset)");
  ev->add_option("traces", eval_files, "Trace files")->required();
  ev->add_option("--format", eval_format, "text, csv or json")->capture_default_str();
  ev->add_flag("--per-question", per_question, "Print one JSON score line per question");
  ev->callback([&] { action = [&] { return cmd_eval(eval_files, eval_format, per_question); }; });

  std::vector<std::string> tr_files;
  std::string tr_format = "text";
  auto* tr = app.add_subcommand("transitions", "Correctness transitions: System-I vs final, or run A vs run B");
  tr->add_option("traces", tr_files, "One or two trace files")->required();
  tr->add_option("--format", tr_format, "text or json")->capture_default_str();
  tr->callback([&] { action = [&] { return cmd_transitions(tr_files, tr_format); }; });

  std::vector<std::string> rep_files;
  std::string rep_format = "text";
  auto* rep = app.add_subcommand("report", "Accuracy, payload, transition and threshold tables");
  rep->add_option("traces", rep_files, "Trace files")->required();
  rep->add_option("--format", rep_format, "text, csv or json")->capture_default_str();
  rep->callback([&] { action = [&] { return cmd_report(rep_files, rep_format); }; });

  std::string insp_path, insp_id;
  auto* insp = app.add_subcommand("inspect", "Describe an index, trace file or manifest");
  insp->add_option("file", insp_path, "File to inspect")->required();
  insp->add_option("--id", insp_id, "Show one chunk (index) or one trace (trace file)");
  insp->callback([&] { action = [&] { return cmd_inspect(insp_path, insp_id); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    return action();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
}
