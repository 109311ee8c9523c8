#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "anchorqa/error.hpp"
#include "anchorqa/pipeline.hpp"

namespace anchorqa {

// SQuAD-style answer normalization: lowercase, strip ASCII punctuation, drop
// the articles a/an/the as whole words, collapse whitespace.
//
// Word characters follow the reference regex (\w): ASCII alphanumerics and
// underscore, with every non-ASCII byte treated as a letter.
inline std::string normalize_answer(std::string_view s) {
  auto is_punct = [](unsigned char c) {
    return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) ||
           (c >= 123 && c <= 126);
  };
  auto is_word = [](unsigned char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || c == '_' || c >= 0x80;
  };
  auto is_space = [](unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  };

  std::string stripped;
  stripped.reserve(s.size());
  for (unsigned char c : s) {
    if (is_punct(c)) continue;
    stripped.push_back(static_cast<char>(c >= 'A' && c <= 'Z' ? c + 32 : c));
  }

  // Articles become spaces; everything else is kept, then whitespace is
  // collapsed on the way out.
  std::string out;
  out.reserve(stripped.size());
  bool pending_space = false;
  std::size_t i = 0;
  auto emit = [&](std::string_view piece) {
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    out.append(piece);
  };
  while (i < stripped.size()) {
    const auto c = static_cast<unsigned char>(stripped[i]);
    if (is_space(c)) {
      pending_space = true;
      ++i;
    } else if (is_word(c)) {
      std::size_t j = i;
      while (j < stripped.size() && is_word(static_cast<unsigned char>(stripped[j]))) ++j;
      const auto word = std::string_view(stripped).substr(i, j - i);
      if (word == "a" || word == "an" || word == "the")
        pending_space = true;
      else
        emit(word);
      i = j;
    } else {
      // Non-word, non-space byte: part of a token but never of an article.
      std::size_t j = i;
      while (j < stripped.size() && !is_space(static_cast<unsigned char>(stripped[j])) &&
             !is_word(static_cast<unsigned char>(stripped[j])))
        ++j;
      emit(std::string_view(stripped).substr(i, j - i));
      i = j;
    }
  }
  return out;
}

inline std::vector<std::string> whitespace_tokens(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && s[i] == ' ') ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ') ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline int exact_match(std::string_view pred, std::string_view gold) {
  return normalize_answer(pred) == normalize_answer(gold) ? 1 : 0;
}

// Token F1 with multiset overlap. Both empty scores 1, exactly one empty 0.
inline double token_f1(std::string_view pred, std::string_view gold) {
  const auto p = whitespace_tokens(normalize_answer(pred));
  const auto g = whitespace_tokens(normalize_answer(gold));
  if (p.empty() || g.empty()) return p.empty() && g.empty() ? 1.0 : 0.0;
  std::unordered_map<std::string, int> counts;
  for (const auto& t : g) ++counts[t];
  std::size_t overlap = 0;
  for (const auto& t : p) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double precision = static_cast<double>(overlap) / static_cast<double>(p.size());
  const double recall = static_cast<double>(overlap) / static_cast<double>(g.size());
  return 2.0 * precision * recall / (precision + recall);
}

struct EvalScore {
  std::string question_id;
  int em = 0;
  double f1 = 0.0;
};

inline EvalScore score(std::string question_id, std::string_view pred, std::string_view gold) {
  return {std::move(question_id), exact_match(pred, gold), token_f1(pred, gold)};
}

// Final answers; failed questions carry an empty answer and score 0.
inline std::vector<EvalScore> score_final(const std::vector<PipelineTrace>& traces) {
  std::vector<EvalScore> out;
  out.reserve(traces.size());
  for (const auto& t : traces) out.push_back(score(t.question_id, t.final_answer, t.gold_answer));
  return out;
}

inline std::vector<EvalScore> score_system1(const std::vector<PipelineTrace>& traces) {
  std::vector<EvalScore> out;
  out.reserve(traces.size());
  for (const auto& t : traces) out.push_back(score(t.question_id, t.system1_answer, t.gold_answer));
  return out;
}

struct Aggregate {
  double em = 0.0;  // percent
  double f1 = 0.0;  // percent
  std::size_t n = 0;
};

inline double round2(double v) { return std::round(v * 100.0) / 100.0; }

inline Aggregate aggregate(const std::vector<EvalScore>& scores) {
  if (scores.empty()) throw InputError("cannot aggregate an empty score list");
  double em = 0.0, f1 = 0.0;
  for (const auto& s : scores) {
    em += s.em;
    f1 += s.f1;
  }
  const auto n = static_cast<double>(scores.size());
  return {round2(100.0 * em / n), round2(100.0 * f1 / n), scores.size()};
}

struct PayloadReport {
  double mean = 0.0;
  std::map<std::string, double> per_dataset;
};

inline PayloadReport payload_tokens(const std::vector<PipelineTrace>& traces) {
  PayloadReport r;
  if (traces.empty()) return r;
  std::map<std::string, std::pair<double, std::size_t>> acc;
  double total = 0.0;
  for (const auto& t : traces) {
    total += static_cast<double>(t.payload_tokens);
    auto& a = acc[std::string(to_string(t.dataset_tag))];
    a.first += static_cast<double>(t.payload_tokens);
    ++a.second;
  }
  r.mean = total / static_cast<double>(traces.size());
  for (const auto& [k, v] : acc) r.per_dataset[k] = v.first / static_cast<double>(v.second);
  return r;
}

struct TransitionReport {
  std::size_t both_correct = 0;    // C -> C
  std::size_t gained = 0;          // I -> C
  std::size_t lost = 0;            // C -> I
  std::size_t both_incorrect = 0;  // I -> I

  long long net_gain() const {
    return static_cast<long long>(gained) - static_cast<long long>(lost);
  }
  std::size_t total() const { return both_correct + gained + lost + both_incorrect; }
};

// Exact-match correctness transitions, aligned by question_id.
inline TransitionReport transitions(const std::vector<EvalScore>& before,
                                    const std::vector<EvalScore>& after) {
  if (before.size() != after.size())
    throw InputError("transition inputs have different lengths (" + std::to_string(before.size()) +
                     " vs " + std::to_string(after.size()) + ")");
  std::unordered_map<std::string, int> first;
  for (const auto& s : before)
    if (!first.emplace(s.question_id, s.em).second)
      throw InputError("duplicate question_id '" + s.question_id + "'");
  TransitionReport r;
  std::unordered_map<std::string, bool> seen;
  for (const auto& s : after) {
    auto it = first.find(s.question_id);
    if (it == first.end()) throw InputError("question_id '" + s.question_id + "' has no counterpart");
    if (!seen.emplace(s.question_id, true).second)
      throw InputError("duplicate question_id '" + s.question_id + "'");
    const bool was = it->second == 1, now = s.em == 1;
    if (was && now) ++r.both_correct;
    else if (!was && now) ++r.gained;
    else if (was && !now) ++r.lost;
    else ++r.both_incorrect;
  }
  return r;
}

inline TransitionReport transitions(const std::vector<PipelineTrace>& traces) {
  return transitions(score_system1(traces), score_final(traces));
}

struct ThresholdSavings {
  std::size_t complete = 0;
  std::size_t continued = 0;
  std::size_t estimated = 0;  // complete questions with an unsent-prompt count
  double avg_input_tokens_saved = 0.0;
};

inline ThresholdSavings threshold_savings(const std::vector<PipelineTrace>& traces) {
  ThresholdSavings s;
  double saved = 0.0;
  for (const auto& t : traces) {
    if (t.gate_decision == GateDecision::complete) {
      ++s.complete;
      if (t.system2_prompt_tokens && !t.system2_sent) {
        ++s.estimated;
        saved += static_cast<double>(*t.system2_prompt_tokens);
      }
    } else if (t.gate_decision == GateDecision::continue_) {
      ++s.continued;
    }
  }
  if (s.estimated) s.avg_input_tokens_saved = saved / static_cast<double>(s.estimated);
  return s;
}

// ---------------------------------------------------------------------------
// Reports

struct RunSummary {
  std::string label;
  std::string dataset;  // dataset tag, or "average"
  std::string mode;
  std::size_t questions = 0;
  std::size_t failed = 0;
  double em = 0.0;
  double f1 = 0.0;
  double payload = 0.0;
  std::optional<TransitionReport> transitions;  // System-I vs final, when System-II ran
  std::optional<ThresholdSavings> savings;
};

inline std::vector<RunSummary> summarize(const std::string& label,
                                         const std::vector<PipelineTrace>& traces) {
  std::map<std::string, std::vector<PipelineTrace>> by_dataset;
  for (const auto& t : traces) by_dataset[std::string(to_string(t.dataset_tag))].push_back(t);

  std::vector<RunSummary> out;
  for (const auto& [tag, group] : by_dataset) {
    RunSummary s;
    s.label = label;
    s.dataset = tag;
    s.mode = std::string(to_string(group.front().mode));
    s.questions = group.size();
    for (const auto& t : group) s.failed += t.failed() ? 1 : 0;
    const auto agg = aggregate(score_final(group));
    s.em = agg.em;
    s.f1 = agg.f1;
    s.payload = payload_tokens(group).mean;
    const auto mode = group.front().mode;
    if (mode != Mode::system1_only && mode != Mode::standard_rag) s.transitions = transitions(group);
    if (mode == Mode::threshold_gated) s.savings = threshold_savings(group);
    out.push_back(std::move(s));
  }
  if (out.size() > 1) {
    RunSummary avg;
    avg.label = label;
    avg.dataset = "average";
    avg.mode = out.front().mode;
    double em = 0, f1 = 0;
    for (const auto& s : out) {
      avg.questions += s.questions;
      avg.failed += s.failed;
      em += s.em;
      f1 += s.f1;
    }
    avg.em = round2(em / static_cast<double>(out.size()));
    avg.f1 = round2(f1 / static_cast<double>(out.size()));
    avg.payload = payload_tokens(traces).mean;
    out.push_back(std::move(avg));
  }
  return out;
}

struct PairedTransition {
  std::string before_label;
  std::string after_label;
  std::string dataset;
  TransitionReport report;
};

// Cross-run transitions per dataset, e.g. a system1_only run against a full run.
inline std::vector<PairedTransition> paired_transitions(const std::string& before_label,
                                                        const std::vector<PipelineTrace>& before,
                                                        const std::string& after_label,
                                                        const std::vector<PipelineTrace>& after) {
  std::map<std::string, std::pair<std::vector<EvalScore>, std::vector<EvalScore>>> groups;
  for (const auto& t : before)
    groups[std::string(to_string(t.dataset_tag))].first.push_back(
        score(t.question_id, t.final_answer, t.gold_answer));
  for (const auto& t : after)
    groups[std::string(to_string(t.dataset_tag))].second.push_back(
        score(t.question_id, t.final_answer, t.gold_answer));
  std::vector<PairedTransition> out;
  for (const auto& [tag, g] : groups)
    out.push_back({before_label, after_label, tag, transitions(g.first, g.second)});
  return out;
}

namespace detail {

inline std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string pad(std::string s, std::size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
  return s;
}

}  // namespace detail

inline std::string render_text(const std::vector<RunSummary>& runs,
                               const std::vector<PairedTransition>& pairs = {}) {
  using detail::fixed2;
  using detail::pad;
  std::ostringstream os;
  if (!runs.empty())
    os << "Accuracy and payload\n"
       << pad("run", 24) << pad("dataset", 10) << pad("mode", 22) << pad("n", 6) << pad("EM", 8)
       << pad("F1", 8) << pad("payload", 10) << "failed\n";
  for (const auto& r : runs)
    os << pad(r.label, 24) << pad(r.dataset, 10) << pad(r.mode, 22) << pad(std::to_string(r.questions), 6)
       << pad(fixed2(r.em), 8) << pad(fixed2(r.f1), 8) << pad(fixed2(r.payload), 10) << r.failed << "\n";

  bool header = false;
  for (const auto& r : runs) {
    if (!r.transitions || r.dataset == "average") continue;
    if (!header) {
      os << "\nSystem-I -> final transitions (exact match)\n";
      os << pad("run", 24) << pad("dataset", 10) << pad("C->C", 7) << pad("I->C", 7) << pad("C->I", 7)
         << pad("I->I", 7) << "net\n";
      header = true;
    }
    const auto& t = *r.transitions;
    os << pad(r.label, 24) << pad(r.dataset, 10) << pad(std::to_string(t.both_correct), 7)
       << pad(std::to_string(t.gained), 7) << pad(std::to_string(t.lost), 7)
       << pad(std::to_string(t.both_incorrect), 7) << t.net_gain() << "\n";
  }
  if (!pairs.empty()) {
    os << (runs.empty() ? "" : "\n") << "Cross-run transitions (exact match)\n";
    os << pad("before", 24) << pad("after", 24) << pad("dataset", 10) << pad("C->C", 7) << pad("I->C", 7)
       << pad("C->I", 7) << pad("I->I", 7) << "net\n";
    for (const auto& p : pairs)
      os << pad(p.before_label, 24) << pad(p.after_label, 24) << pad(p.dataset, 10)
         << pad(std::to_string(p.report.both_correct), 7) << pad(std::to_string(p.report.gained), 7)
         << pad(std::to_string(p.report.lost), 7) << pad(std::to_string(p.report.both_incorrect), 7)
         << p.report.net_gain() << "\n";
  }
  header = false;
  for (const auto& r : runs) {
    if (!r.savings || r.dataset == "average") continue;
    if (!header) {
      os << "\nConfidence gate\n";
      os << pad("run", 24) << pad("dataset", 10) << pad("complete", 10) << pad("continue", 10)
         << "avg input tokens saved\n";
      header = true;
    }
    os << pad(r.label, 24) << pad(r.dataset, 10) << pad(std::to_string(r.savings->complete), 10)
       << pad(std::to_string(r.savings->continued), 10) << fixed2(r.savings->avg_input_tokens_saved)
       << "\n";
  }
  return os.str();
}

inline std::string render_csv(const std::vector<RunSummary>& runs) {
  using detail::fixed2;
  std::ostringstream os;
  os << "run,dataset,mode,questions,failed,em,f1,payload,cc,ic,ci,ii,net_gain,complete,continue,"
        "avg_input_tokens_saved\n";
  for (const auto& r : runs) {
    os << r.label << ',' << r.dataset << ',' << r.mode << ',' << r.questions << ',' << r.failed << ','
       << fixed2(r.em) << ',' << fixed2(r.f1) << ',' << fixed2(r.payload) << ',';
    if (r.transitions)
      os << r.transitions->both_correct << ',' << r.transitions->gained << ',' << r.transitions->lost
         << ',' << r.transitions->both_incorrect << ',' << r.transitions->net_gain() << ',';
    else
      os << ",,,,,";
    if (r.savings)
      os << r.savings->complete << ',' << r.savings->continued << ','
         << fixed2(r.savings->avg_input_tokens_saved);
    else
      os << ",,";
    os << '\n';
  }
  return os.str();
}

inline nlohmann::json render_json(const std::vector<RunSummary>& runs,
                                  const std::vector<PairedTransition>& pairs = {}) {
  auto transition_json = [](const TransitionReport& t) {
    return nlohmann::json{{"both_correct", t.both_correct},
                          {"gained", t.gained},
                          {"lost", t.lost},
                          {"both_incorrect", t.both_incorrect},
                          {"net_gain", t.net_gain()}};
  };
  nlohmann::json out = {{"runs", nlohmann::json::array()}, {"paired_transitions", nlohmann::json::array()}};
  for (const auto& r : runs) {
    nlohmann::json j = {{"run", r.label},       {"dataset", r.dataset}, {"mode", r.mode},
                        {"questions", r.questions}, {"failed", r.failed},   {"em", r.em},
                        {"f1", r.f1},           {"payload_tokens", r.payload}};
    if (r.transitions) j["transitions"] = transition_json(*r.transitions);
    if (r.savings)
      j["threshold"] = {{"complete", r.savings->complete},
                        {"continue", r.savings->continued},
                        {"avg_input_tokens_saved", r.savings->avg_input_tokens_saved}};
    out["runs"].push_back(std::move(j));
  }
  for (const auto& p : pairs) {
    auto j = transition_json(p.report);
    j["before"] = p.before_label;
    j["after"] = p.after_label;
    j["dataset"] = p.dataset;
    out["paired_transitions"].push_back(std::move(j));
  }
  return out;
}

}  // namespace anchorqa
