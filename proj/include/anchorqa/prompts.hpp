#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "anchorqa/corpus.hpp"
#include "anchorqa/error.hpp"
#include "anchorqa/prompt_templates.hpp"
#include "anchorqa/triple.hpp"

namespace anchorqa {

enum class Stage { system1, triple_gen, system2, system2_noanchor, standard_rag };

inline std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::system1: return "system1";
    case Stage::triple_gen: return "triple_gen";
    case Stage::system2: return "system2";
    case Stage::system2_noanchor: return "system2_noanchor";
    case Stage::standard_rag: return "standard_rag";
  }
  return "unknown";
}

inline constexpr Stage kAllStages[] = {Stage::system1, Stage::triple_gen, Stage::system2,
                                       Stage::system2_noanchor, Stage::standard_rag};

// A chat prompt: system instruction plus a user message carrying the input.
struct PromptTemplate {
  std::string system;
  std::string user;

  friend bool operator==(const PromptTemplate&, const PromptTemplate&) = default;
};

struct RenderedPrompt {
  Stage stage = Stage::system1;
  std::string system;
  std::string user;
  std::string source_question_id;

  std::string text() const { return system + "\n\n" + user; }
};

// Replaces {{name}} placeholders in one left-to-right pass; substituted text
// is never rescanned, so values containing "{{...}}" come through verbatim.
// Unknown placeholders are left as-is.
inline std::string substitute(std::string_view tmpl,
                              const std::map<std::string, std::string, std::less<>>& values) {
  std::string out;
  out.reserve(tmpl.size() + 256);
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find("{{", pos);
    if (open == std::string_view::npos) break;
    const auto close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) break;
    out.append(tmpl.substr(pos, open - pos));
    const auto name = tmpl.substr(open + 2, close - open - 2);
    if (auto it = values.find(name); it != values.end())
      out += it->second;
    else
      out.append(tmpl.substr(open, close + 2 - open));
    pos = close + 2;
  }
  out.append(tmpl.substr(pos));
  return out;
}

// Parses the on-disk template layout: "[system]\n<system>\n[user]\n<user>\n".
inline PromptTemplate parse_template_file(std::string_view content) {
  constexpr std::string_view head = "[system]\n";
  constexpr std::string_view sep = "\n[user]\n";
  if (content.substr(0, head.size()) != head)
    throw InputError("prompt template must start with a [system] section");
  content.remove_prefix(head.size());
  const auto split = content.find(sep);
  if (split == std::string_view::npos) throw InputError("prompt template has no [user] section");
  PromptTemplate t{std::string(content.substr(0, split)),
                   std::string(content.substr(split + sep.size()))};
  if (!t.user.empty() && t.user.back() == '\n') t.user.pop_back();
  return t;
}

class PromptSet {
 public:
  static PromptSet defaults() {
    using namespace templates;
    PromptSet p;
    p.templates_[Stage::system1] = {std::string(k_system1_system), std::string(k_system1_user)};
    p.templates_[Stage::triple_gen] = {std::string(k_triple_gen_system),
                                       std::string(k_triple_gen_user)};
    p.templates_[Stage::system2] = {std::string(k_system2_system), std::string(k_system2_user)};
    p.templates_[Stage::system2_noanchor] = {std::string(k_system2_noanchor_system),
                                             std::string(k_system2_noanchor_user)};
    p.templates_[Stage::standard_rag] = {std::string(k_standard_rag_system),
                                         std::string(k_standard_rag_user)};
    return p;
  }

  // Defaults, overridden by any <stage>.txt present in `dir`.
  static PromptSet from_directory(const std::filesystem::path& dir) {
    auto p = defaults();
    if (!std::filesystem::is_directory(dir))
      throw IoError("prompt directory not found: " + dir.string());
    for (Stage s : kAllStages) {
      const auto file = dir / (std::string(to_string(s)) + ".txt");
      if (std::filesystem::exists(file))
        p.templates_[s] = parse_template_file(detail::read_file(file));
    }
    return p;
  }

  const PromptTemplate& get(Stage s) const { return templates_.at(s); }
  void set(Stage s, PromptTemplate t) { templates_[s] = std::move(t); }

  RenderedPrompt render(Stage s, const std::string& question_id,
                        const std::map<std::string, std::string, std::less<>>& values) const {
    const auto& t = get(s);
    return {s, substitute(t.system, values), substitute(t.user, values), question_id};
  }

 private:
  std::map<Stage, PromptTemplate> templates_;
};

// Canonical tagged form, "<triple>S | p | O</triple>".
inline std::string render_triple(const ReasoningTriple& t) {
  return "<triple>" + t.subject + " | " + t.predicate + " | " + t.object + "</triple>";
}

// "(S | p | O), (S | p | O)" as listed under Initial Reasoning.
inline std::string format_triples(const std::vector<ReasoningTriple>& triples) {
  std::string out;
  for (const auto& t : triples) {
    if (!out.empty()) out += ", ";
    out += "(" + t.subject + " | " + t.predicate + " | " + t.object + ")";
  }
  return out.empty() ? "(none)" : out;
}

// Numbered "Title: text" lines, in retrieval order.
inline std::string format_documents(const std::vector<const Chunk*>& chunks) {
  std::string out;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    if (i) out += '\n';
    out += std::to_string(i + 1) + ". ";
    if (!chunks[i]->title.empty()) out += chunks[i]->title + ": ";
    out += chunks[i]->text;
  }
  return out;
}

inline RenderedPrompt render_system1(const QAItem& q, const PromptSet& prompts) {
  if (q.question.empty()) throw InputError("question is empty");
  return prompts.render(Stage::system1, q.question_id, {{"question", q.question}});
}

inline RenderedPrompt render_triplegen(const QAItem& q, const std::string& hypothesis,
                                       const PromptSet& prompts) {
  if (hypothesis.empty()) throw InputError("hypothesis is empty");
  return prompts.render(Stage::triple_gen, q.question_id,
                        {{"question", q.question}, {"hypothesis", hypothesis}});
}

inline RenderedPrompt render_system2(const QAItem& q, const std::string& hypothesis,
                                     const std::vector<ReasoningTriple>& triples,
                                     const std::vector<const Chunk*>& chunks, bool include_anchor,
                                     const PromptSet& prompts) {
  if (chunks.empty()) throw InputError("System-II prompt needs at least one chunk");
  if (!include_anchor)
    return prompts.render(Stage::system2_noanchor, q.question_id,
                          {{"question", q.question}, {"documents", format_documents(chunks)}});
  return prompts.render(Stage::system2, q.question_id,
                        {{"question", q.question},
                         {"hypothesis", hypothesis},
                         {"triples", format_triples(triples)},
                         {"documents", format_documents(chunks)}});
}

inline RenderedPrompt render_standard_rag(const QAItem& q, const std::vector<const Chunk*>& chunks,
                                          const PromptSet& prompts) {
  if (chunks.empty()) throw InputError("standard RAG prompt needs at least one chunk");
  return prompts.render(Stage::standard_rag, q.question_id,
                        {{"question", q.question}, {"documents", format_documents(chunks)}});
}

// ---------------------------------------------------------------------------
// Output parsing. Parsers are total: any input yields a value plus status.

enum class ParseStatus { ok, malformed, empty };

inline std::string_view to_string(ParseStatus s) {
  switch (s) {
    case ParseStatus::ok: return "ok";
    case ParseStatus::malformed: return "malformed";
    case ParseStatus::empty: return "empty";
  }
  return "unknown";
}

struct ParsedText {
  std::string value;
  ParseStatus status = ParseStatus::ok;

  bool ok() const { return status == ParseStatus::ok; }
  bool malformed() const { return status == ParseStatus::malformed; }
  bool empty() const { return status == ParseStatus::empty; }
};

namespace detail {

inline std::string erase_all(std::string s, std::string_view needle) {
  for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p)) s.erase(p, needle.size());
  return s;
}

inline ParsedText finish(std::string value, ParseStatus status) {
  value = trim(value);
  if (value.empty()) return {"", ParseStatus::empty};
  return {std::move(value), status};
}

}  // namespace detail

// Content of the first complete <answer> element (innermost when nested).
// Untagged text falls back to the whole output minus <output> wrappers.
inline ParsedText parse_answer(std::string_view text) {
  constexpr std::string_view open_tag = "<answer>", close_tag = "</answer>";
  const auto close = text.find(close_tag);
  if (close != std::string_view::npos) {
    const auto open = text.rfind(open_tag, close);
    if (open != std::string_view::npos) {
      const auto b = open + open_tag.size();
      return detail::finish(std::string(text.substr(b, close - b)), ParseStatus::ok);
    }
  }
  std::string rest(text);
  if (const auto open = rest.find(open_tag); open != std::string::npos)
    rest = rest.substr(open + open_tag.size());
  for (auto tag : {"<output>", "</output>", "<answer>", "</answer>"}) rest = detail::erase_all(rest, tag);
  return detail::finish(std::move(rest), ParseStatus::malformed);
}

struct ParsedTriples {
  std::vector<ReasoningTriple> triples;
  std::size_t malformed = 0;
};

// Every complete <triple>...</triple> split on '|'. Fewer than three fields or
// an empty field is skipped and counted; more than three keeps the first as
// subject, the last as object and joins the middle into the predicate.
inline ParsedTriples parse_triples(std::string_view text) {
  constexpr std::string_view open_tag = "<triple>", close_tag = "</triple>";
  ParsedTriples out;
  std::size_t pos = 0;
  while (true) {
    const auto open = text.find(open_tag, pos);
    if (open == std::string_view::npos) break;
    const auto b = open + open_tag.size();
    const auto close = text.find(close_tag, b);
    if (close == std::string_view::npos) {
      ++out.malformed;
      break;
    }
    pos = close + close_tag.size();
    auto body = text.substr(b, close - b);
    // A stray opening tag inside the body means the earlier element never closed.
    if (const auto inner = body.rfind(open_tag); inner != std::string_view::npos) {
      ++out.malformed;
      body = body.substr(inner + open_tag.size());
    }

    std::vector<std::string> parts;
    std::size_t s = 0;
    while (true) {
      const auto bar = body.find('|', s);
      parts.push_back(detail::trim(body.substr(s, bar == std::string_view::npos ? body.size() - s : bar - s)));
      if (bar == std::string_view::npos) break;
      s = bar + 1;
    }
    if (parts.size() < 3) {
      ++out.malformed;
      continue;
    }
    ReasoningTriple t{parts.front(), "", parts.back()};
    for (std::size_t i = 1; i + 1 < parts.size(); ++i) {
      if (i > 1) t.predicate += '|';
      t.predicate += parts[i];
    }
    if (t.subject.empty() || t.predicate.empty() || t.object.empty()) {
      ++out.malformed;
      continue;
    }
    out.triples.push_back(std::move(t));
  }
  return out;
}

// Content of the last complete <final_answer> element. Untagged text falls
// back to its last non-empty line.
inline ParsedText parse_final(std::string_view text) {
  constexpr std::string_view open_tag = "<final_answer>", close_tag = "</final_answer>";
  const auto close = text.rfind(close_tag);
  if (close != std::string_view::npos) {
    const auto open = text.rfind(open_tag, close);
    if (open != std::string_view::npos) {
      const auto b = open + open_tag.size();
      return detail::finish(std::string(text.substr(b, close - b)), ParseStatus::ok);
    }
  }
  if (const auto open = text.rfind(open_tag); open != std::string_view::npos)
    return detail::finish(std::string(text.substr(open + open_tag.size())), ParseStatus::malformed);

  std::string_view rest = text;
  while (!rest.empty()) {
    const auto nl = rest.rfind('\n');
    const auto line = nl == std::string_view::npos ? rest : rest.substr(nl + 1);
    auto t = detail::trim(line);
    if (!t.empty()) return detail::finish(detail::erase_all(std::move(t), close_tag), ParseStatus::malformed);
    if (nl == std::string_view::npos) break;
    rest = rest.substr(0, nl);
  }
  return {"", ParseStatus::empty};
}

}  // namespace anchorqa
