#pragma once

#include <string>
#include <string_view>

#include "json.hpp"

#include "anchorqa/error.hpp"

namespace anchorqa {

// One condensed reasoning step, (subject, predicate, object).
struct ReasoningTriple {
  std::string subject;
  std::string predicate;
  std::string object;

  friend bool operator==(const ReasoningTriple&, const ReasoningTriple&) = default;
};

enum class TripleQueryStyle {
  spaced,  // "Modric plays_for AC Milan"
  piped,   // "Modric | plays_for | AC Milan"
};

inline TripleQueryStyle parse_triple_query_style(std::string_view s) {
  if (s == "spaced") return TripleQueryStyle::spaced;
  if (s == "piped") return TripleQueryStyle::piped;
  throw InputError("unknown query style '" + std::string(s) + "' (expected spaced or piped)");
}

inline std::string_view to_string(TripleQueryStyle s) {
  return s == TripleQueryStyle::piped ? "piped" : "spaced";
}

// Search-key form of a triple. The predicate is kept verbatim, underscores
// included; the retriever sees the pseudo-language as generated.
inline std::string render_query(const ReasoningTriple& t,
                                TripleQueryStyle style = TripleQueryStyle::spaced) {
  const std::string_view sep = style == TripleQueryStyle::piped ? " | " : " ";
  std::string out;
  out.reserve(t.subject.size() + t.predicate.size() + t.object.size() + 2 * sep.size());
  out.append(t.subject).append(sep).append(t.predicate).append(sep).append(t.object);
  return out;
}

inline void to_json(nlohmann::json& j, const ReasoningTriple& t) {
  j = nlohmann::json::array({t.subject, t.predicate, t.object});
}
inline void from_json(const nlohmann::json& j, ReasoningTriple& t) {
  t.subject = j.at(0).get<std::string>();
  t.predicate = j.at(1).get<std::string>();
  t.object = j.at(2).get<std::string>();
}

}  // namespace anchorqa
