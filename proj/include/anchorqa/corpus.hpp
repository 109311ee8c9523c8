#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "anchorqa/error.hpp"
#include "anchorqa/hash.hpp"
#include "anchorqa/tokenizer.hpp"

namespace anchorqa {

enum class DatasetTag { two_wiki, hotpotqa, musique };

inline std::string_view to_string(DatasetTag tag) {
  switch (tag) {
    case DatasetTag::two_wiki: return "2wiki";
    case DatasetTag::hotpotqa: return "hotpotqa";
    case DatasetTag::musique: return "musique";
  }
  return "unknown";
}

inline DatasetTag parse_dataset_tag(std::string_view s) {
  if (s == "2wiki" || s == "2wikimultihopqa") return DatasetTag::two_wiki;
  if (s == "hotpotqa" || s == "hotpot") return DatasetTag::hotpotqa;
  if (s == "musique") return DatasetTag::musique;
  throw InputError("unknown dataset format '" + std::string(s) +
                   "' (expected 2wiki, hotpotqa or musique)");
}

struct Document {
  std::string doc_id;
  std::string title;
  std::string text;
};

struct Chunk {
  std::string chunk_id;
  std::string doc_id;
  std::string title;
  std::size_t start_token = 0;
  std::size_t end_token = 0;
  std::string text;
  std::size_t token_count = 0;
  std::string tokenizer_id;

  friend bool operator==(const Chunk&, const Chunk&) = default;
};

struct QAItem {
  std::string question_id;
  std::string question;
  std::string gold_answer;
  std::optional<std::vector<std::string>> gold_support_titles;
  DatasetTag dataset_tag = DatasetTag::hotpotqa;
};

struct ChunkParams {
  std::size_t chunk_size = 400;
  // Overlap between consecutive windows, so windows start every
  // chunk_size - stride tokens.
  std::size_t stride = 50;
};

struct LoadReport {
  std::size_t records = 0;
  std::size_t skipped = 0;
  std::vector<std::string> skipped_ids;
  std::size_t passages = 0;
  std::size_t empty_passages = 0;
  std::size_t duplicate_passages = 0;
};

struct LoadedDataset {
  std::vector<QAItem> items;
  std::vector<Document> documents;
  // Per item, indices into `documents` of its context passages.
  std::vector<std::vector<std::size_t>> item_documents;
  LoadReport report;
};

// ---------------------------------------------------------------------------
// JSON mapping

inline void to_json(nlohmann::json& j, const Document& d) {
  j = {{"doc_id", d.doc_id}, {"title", d.title}, {"text", d.text}};
}
inline void from_json(const nlohmann::json& j, Document& d) {
  j.at("doc_id").get_to(d.doc_id);
  j.at("title").get_to(d.title);
  j.at("text").get_to(d.text);
}

inline void to_json(nlohmann::json& j, const Chunk& c) {
  j = {{"chunk_id", c.chunk_id},       {"doc_id", c.doc_id},
       {"title", c.title},             {"start_token", c.start_token},
       {"end_token", c.end_token},     {"token_count", c.token_count},
       {"tokenizer_id", c.tokenizer_id}, {"text", c.text}};
}
inline void from_json(const nlohmann::json& j, Chunk& c) {
  j.at("chunk_id").get_to(c.chunk_id);
  j.at("doc_id").get_to(c.doc_id);
  c.title = j.value("title", "");
  j.at("start_token").get_to(c.start_token);
  j.at("end_token").get_to(c.end_token);
  j.at("token_count").get_to(c.token_count);
  j.at("tokenizer_id").get_to(c.tokenizer_id);
  j.at("text").get_to(c.text);
}

inline void to_json(nlohmann::json& j, const QAItem& q) {
  j = {{"question_id", q.question_id},
       {"question", q.question},
       {"gold_answer", q.gold_answer},
       {"dataset_tag", std::string(to_string(q.dataset_tag))}};
  if (q.gold_support_titles) j["gold_support_titles"] = *q.gold_support_titles;
}
inline void from_json(const nlohmann::json& j, QAItem& q) {
  j.at("question_id").get_to(q.question_id);
  j.at("question").get_to(q.question);
  j.at("gold_answer").get_to(q.gold_answer);
  q.dataset_tag = parse_dataset_tag(j.at("dataset_tag").get<std::string>());
  if (j.contains("gold_support_titles") && !j["gold_support_titles"].is_null())
    q.gold_support_titles = j["gold_support_titles"].get<std::vector<std::string>>();
  else
    q.gold_support_titles.reset();
}

// ---------------------------------------------------------------------------
// Dataset loading

namespace detail {

inline std::string trim(std::string_view s) {
  const auto is_ws = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  std::size_t b = 0, e = s.size();
  while (b < e && is_ws(s[b])) ++b;
  while (e > b && is_ws(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string json_string_or_empty(const nlohmann::json& rec, const char* key) {
  if (!rec.contains(key)) return {};
  const auto& v = rec[key];
  if (v.is_string()) return trim(v.get<std::string>());
  if (v.is_number()) return v.dump();
  return {};
}

// Accepts either a JSON array of records or JSON Lines.
inline std::vector<nlohmann::json> parse_records(std::string_view content) {
  std::size_t first = content.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  if (content[first] == '[') {
    auto arr = nlohmann::json::parse(content);
    return std::vector<nlohmann::json>(arr.begin(), arr.end());
  }
  std::vector<nlohmann::json> out;
  std::size_t pos = 0;
  while (pos < content.size()) {
    std::size_t nl = content.find('\n', pos);
    if (nl == std::string_view::npos) nl = content.size();
    auto line = trim(content.substr(pos, nl - pos));
    if (!line.empty()) out.push_back(nlohmann::json::parse(line));
    pos = nl + 1;
  }
  return out;
}

struct Passage {
  std::string title;
  std::string text;
};

// HotpotQA and 2WikiMultiHopQA: context = [[title, [sentence, ...]], ...].
inline std::vector<Passage> sentence_list_passages(const nlohmann::json& rec) {
  std::vector<Passage> out;
  if (!rec.contains("context") || !rec["context"].is_array()) return out;
  for (const auto& entry : rec["context"]) {
    if (!entry.is_array() || entry.size() < 2) continue;
    Passage p;
    p.title = trim(entry[0].get<std::string>());
    const auto& sentences = entry[1];
    if (sentences.is_string()) {
      p.text = trim(sentences.get<std::string>());
    } else {
      for (const auto& s : sentences) {
        auto t = trim(s.get<std::string>());
        if (t.empty()) continue;
        if (!p.text.empty()) p.text += ' ';
        p.text += t;
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

// MuSiQue: paragraphs = [{title, paragraph_text, is_supporting}, ...].
inline std::vector<Passage> paragraph_passages(const nlohmann::json& rec) {
  std::vector<Passage> out;
  if (!rec.contains("paragraphs") || !rec["paragraphs"].is_array()) return out;
  for (const auto& para : rec["paragraphs"]) {
    out.push_back({trim(para.value("title", "")), trim(para.value("paragraph_text", ""))});
  }
  return out;
}

inline std::optional<std::vector<std::string>> support_titles(const nlohmann::json& rec,
                                                              DatasetTag tag) {
  std::vector<std::string> titles;
  if (tag == DatasetTag::musique) {
    if (!rec.contains("paragraphs")) return std::nullopt;
    for (const auto& para : rec["paragraphs"])
      if (para.value("is_supporting", false)) titles.push_back(trim(para.value("title", "")));
  } else {
    if (!rec.contains("supporting_facts") || !rec["supporting_facts"].is_array())
      return std::nullopt;
    for (const auto& fact : rec["supporting_facts"]) {
      if (!fact.is_array() || fact.empty()) continue;
      auto t = trim(fact[0].get<std::string>());
      if (std::find(titles.begin(), titles.end(), t) == titles.end()) titles.push_back(t);
    }
  }
  return titles;
}

}  // namespace detail

inline std::string document_id(std::string_view title, std::string_view text) {
  std::string key;
  key.reserve(title.size() + text.size() + 1);
  key.append(title).push_back('\x1f');
  key.append(text);
  return "d" + to_hex(fnv1a64(key));
}

// Parses a dataset in its distributed layout. Records without a question or
// answer are skipped and listed in the report; passages are de-duplicated
// by (title, text).
inline LoadedDataset parse_dataset(std::string_view content, DatasetTag tag) {
  std::vector<nlohmann::json> records;
  try {
    records = detail::parse_records(content);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("dataset is not valid JSON: ") + e.what());
  }

  LoadedDataset out;
  std::unordered_map<std::string, std::size_t> seen;  // doc_id -> index
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& rec = records[r];
    ++out.report.records;
    if (!rec.is_object()) {
      ++out.report.skipped;
      out.report.skipped_ids.push_back("#" + std::to_string(r));
      continue;
    }
    std::string id = detail::json_string_or_empty(rec, tag == DatasetTag::musique ? "id" : "_id");
    if (id.empty()) id = detail::json_string_or_empty(rec, "id");
    if (id.empty()) id = "#" + std::to_string(r);

    QAItem item;
    item.question_id = id;
    item.question = detail::json_string_or_empty(rec, "question");
    item.gold_answer = detail::json_string_or_empty(rec, "answer");
    item.dataset_tag = tag;
    if (item.question.empty() || item.gold_answer.empty()) {
      ++out.report.skipped;
      out.report.skipped_ids.push_back(id);
      continue;
    }
    item.gold_support_titles = detail::support_titles(rec, tag);

    auto passages = tag == DatasetTag::musique ? detail::paragraph_passages(rec)
                                               : detail::sentence_list_passages(rec);
    std::vector<std::size_t> linked;
    for (auto& p : passages) {
      ++out.report.passages;
      if (p.text.empty()) {
        ++out.report.empty_passages;
        continue;
      }
      auto doc_id = document_id(p.title, p.text);
      auto [it, inserted] = seen.emplace(doc_id, out.documents.size());
      if (!inserted) {
        const auto& prior = out.documents[it->second];
        if (prior.title != p.title || prior.text != p.text)
          throw InputError("document id collision for '" + p.title + "'");
        ++out.report.duplicate_passages;
        if (std::find(linked.begin(), linked.end(), it->second) == linked.end()) linked.push_back(it->second);
        continue;
      }
      linked.push_back(it->second);
      out.documents.push_back({std::move(doc_id), std::move(p.title), std::move(p.text)});
    }
    out.items.push_back(std::move(item));
    out.item_documents.push_back(std::move(linked));
  }
  return out;
}

inline LoadedDataset load_dataset(const std::filesystem::path& path, DatasetTag tag) {
  return parse_dataset(detail::read_file(path), tag);
}

// Draws n distinct items with a seeded partial Fisher-Yates shuffle and
// returns them in their original dataset order. The bounded draw is done by
// hand so the selection does not depend on the standard library's
// distribution implementations.
inline std::vector<QAItem> sample_questions(const std::vector<QAItem>& items, std::size_t n,
                                            std::uint64_t seed) {
  if (n > items.size())
    throw InputError("cannot sample " + std::to_string(n) + " questions from " +
                     std::to_string(items.size()));
  std::vector<std::size_t> idx(items.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;

  std::mt19937_64 rng(seed);
  auto bounded = [&rng](std::uint64_t range) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % range;
    std::uint64_t v;
    do v = rng(); while (v >= limit);
    return v % range;
  };
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = i + static_cast<std::size_t>(bounded(idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());

  std::vector<QAItem> out;
  out.reserve(n);
  for (auto i : idx) out.push_back(items[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Chunking

// Token windows [start, end) for a document of `total` tokens.
inline std::vector<std::pair<std::size_t, std::size_t>> chunk_windows(std::size_t total,
                                                                      const ChunkParams& p) {
  if (p.chunk_size == 0 || p.stride >= p.chunk_size)
    throw InputError("chunk_size must be greater than stride");
  std::vector<std::pair<std::size_t, std::size_t>> out;
  if (total == 0) return out;
  const std::size_t step = p.chunk_size - p.stride;
  for (std::size_t start = 0;; start += step) {
    const std::size_t end = std::min(start + p.chunk_size, total);
    out.emplace_back(start, end);
    if (end == total) break;
  }
  return out;
}

inline std::string make_chunk_id(std::string_view doc_id, std::size_t start_token) {
  return std::string(doc_id) + ":" + std::to_string(start_token);
}

inline std::vector<Chunk> chunk_document(const Document& doc, const ChunkParams& params = {},
                                         const Tokenizer& tokenizer = default_tokenizer()) {
  if (doc.text.empty()) throw InputError("document '" + doc.doc_id + "' has empty text");
  const auto tokens = tokenizer.tokenize(doc.text);
  if (tokens.empty()) throw InputError("document '" + doc.doc_id + "' has no tokens");

  std::vector<Chunk> out;
  const auto tokenizer_id = tokenizer.id();
  for (auto [start, end] : chunk_windows(tokens.size(), params)) {
    Chunk c;
    c.chunk_id = make_chunk_id(doc.doc_id, start);
    c.doc_id = doc.doc_id;
    c.title = doc.title;
    c.start_token = start;
    c.end_token = end;
    c.token_count = end - start;
    const auto b = tokens[start].begin;
    c.text = doc.text.substr(b, tokens[end - 1].end - b);
    c.tokenizer_id = tokenizer_id;
    out.push_back(std::move(c));
  }
  return out;
}

inline std::vector<Chunk> build_corpus(const std::vector<Document>& docs,
                                       const ChunkParams& params = {},
                                       const Tokenizer& tokenizer = default_tokenizer()) {
  std::unordered_set<std::string> ids;
  std::vector<Chunk> out;
  for (const auto& doc : docs) {
    if (!ids.insert(doc.doc_id).second)
      throw InputError("duplicate document id '" + doc.doc_id + "'");
    auto chunks = chunk_document(doc, params, tokenizer);
    std::move(chunks.begin(), chunks.end(), std::back_inserter(out));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSONL files

template <typename T>
void write_jsonl(std::ostream& out, const std::vector<T>& rows) {
  for (const auto& row : rows) out << nlohmann::json(row).dump() << '\n';
}

template <typename T>
std::vector<T> read_jsonl(std::istream& in, const std::string& source = "<stream>") {
  std::vector<T> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    try {
      rows.push_back(nlohmann::json::parse(line).get<T>());
    } catch (const nlohmann::json::exception& e) {
      throw InputError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

template <typename T>
void write_jsonl_file(const std::filesystem::path& path, const std::vector<T>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write file: " + path.string());
  write_jsonl(out, rows);
  if (!out) throw IoError("write failed: " + path.string());
}

template <typename T>
std::vector<T> read_jsonl_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read file: " + path.string());
  return read_jsonl<T>(in, path.string());
}

}  // namespace anchorqa
