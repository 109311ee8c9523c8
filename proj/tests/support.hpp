#pragma once

// Shared fixtures and independent oracles for the test binaries.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <regex>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "anchorqa/anchorqa.hpp"

namespace aqtest {

namespace fs = std::filesystem;
using namespace anchorqa;

inline fs::path data_dir() { return AQ_TEST_DATA_DIR; }
inline fs::path prompts_dir() { return AQ_PROMPTS_DIR; }

class TempDir {
 public:
  TempDir() {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = fs::temp_directory_path() / ("aqtest-" + to_hex(rng(), 12));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::string slurp(const fs::path& p) { return detail::read_file(p); }

// ---------------------------------------------------------------------------
// Golden corpus: the Bannan question and two small companions.

struct Golden {
  LoadedDataset data;
  std::vector<Chunk> chunks;
  HashingEmbedder embedder;
  DenseIndex index;
  std::vector<ScriptedFixture> fixtures;

  const QAItem& item(const std::string& id) const {
    for (const auto& q : data.items)
      if (q.question_id == id) return q;
    throw std::runtime_error("no golden item " + id);
  }
  const Chunk* chunk_titled(const std::string& title) const {
    for (const auto& c : chunks)
      if (c.title == title) return &c;
    return nullptr;
  }
};

inline const Golden& golden() {
  static const Golden g = [] {
    Golden g;
    g.data = load_dataset(data_dir() / "golden_hotpot.json", DatasetTag::hotpotqa);
    g.chunks = build_corpus(g.data.documents);
    g.index = DenseIndex::build(g.chunks, g.embedder);
    g.fixtures = read_jsonl_file<ScriptedFixture>(data_dir() / "golden_fixtures.jsonl");
    return g;
  }();
  return g;
}

// ---------------------------------------------------------------------------
// Oracles written without the library's search or scoring code.

// Top-k by cosine over raw count vectors, full sort. Features are integer
// counts, so ranking compares dot^2/|row|^2 exactly in integer arithmetic;
// the reported score is a long double cosine.
inline std::vector<std::pair<double, std::string>> brute_force_topk(
    const std::vector<std::vector<double>>& rows, const std::vector<std::string>& ids,
    const std::vector<double>& query, std::size_t k) {
  struct Row {
    long long dot = 0, sq = 0;
    double score = 0;
    std::string id;
  };
  long long qsq = 0;
  for (double x : query) qsq += static_cast<long long>(x) * static_cast<long long>(x);
  std::vector<Row> all;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Row r;
    r.id = ids[i];
    for (std::size_t j = 0; j < query.size(); ++j) {
      const auto a = static_cast<long long>(rows[i][j]), q = static_cast<long long>(query[j]);
      r.dot += a * q;
      r.sq += a * a;
    }
    r.score = static_cast<double>(static_cast<long double>(r.dot) /
                                  std::sqrt(static_cast<long double>(r.sq) * static_cast<long double>(qsq)));
    all.push_back(std::move(r));
  }
  std::sort(all.begin(), all.end(), [](const Row& a, const Row& b) {
    const __int128 lhs = static_cast<__int128>(a.dot) * a.dot * b.sq;
    const __int128 rhs = static_cast<__int128>(b.dot) * b.dot * a.sq;
    if (lhs != rhs) return lhs > rhs;
    return a.id < b.id;
  });
  std::vector<std::pair<double, std::string>> out;
  for (std::size_t i = 0; i < std::min(k, all.size()); ++i) out.emplace_back(all[i].score, all[i].id);
  return out;
}

// Token count by regex: runs of word bytes, or any single non-space byte.
inline std::size_t regex_token_count(const std::string& s) {
  static const std::regex re("[A-Za-z0-9\\x80-\\xff]+|[^ \\t\\n\\r\\f\\v]");
  return static_cast<std::size_t>(
      std::distance(std::sregex_iterator(s.begin(), s.end(), re), std::sregex_iterator()));
}

// SQuAD normalization done the reference way (ASCII input only).
inline std::string regex_normalize(std::string s) {
  static const std::string punct = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";
  std::string out;
  for (char c : s) {
    if (punct.find(c) != std::string::npos) continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  static const std::regex articles("\\b(a|an|the)\\b");
  out = std::regex_replace(out, articles, " ");
  std::istringstream is(out);
  std::string w, joined;
  while (is >> w) joined += (joined.empty() ? "" : " ") + w;
  return joined;
}

inline double regex_f1(const std::string& pred, const std::string& gold) {
  auto split = [](const std::string& s) {
    std::istringstream is(s);
    std::vector<std::string> v;
    std::string w;
    while (is >> w) v.push_back(w);
    return v;
  };
  const auto p = split(regex_normalize(pred)), g = split(regex_normalize(gold));
  if (p.empty() && g.empty()) return 1.0;
  if (p.empty() || g.empty()) return 0.0;
  std::unordered_map<std::string, int> cg;
  for (const auto& t : g) ++cg[t];
  int same = 0;
  for (const auto& t : p)
    if (cg[t]-- > 0) ++same;
  if (same == 0) return 0.0;
  const double precision = 1.0 * same / static_cast<double>(p.size());
  const double recall = 1.0 * same / static_cast<double>(g.size());
  return (2 * precision * recall) / (precision + recall);
}

// ---------------------------------------------------------------------------
// Synthetic traces and fixtures

inline PipelineTrace outcome_trace(std::string id, DatasetTag tag, bool s1_correct, bool final_correct) {
  PipelineTrace t;
  t.question_id = std::move(id);
  t.question = "q";
  t.gold_answer = "gold answer";
  t.dataset_tag = tag;
  t.mode = Mode::full;
  t.system1_answer = s1_correct ? "Gold Answer" : "something else";
  t.final_answer = final_correct ? "the gold answer." : "another thing";
  t.system2_sent = true;
  return t;
}

// 500 traces per dataset with the given C->C / I->C / C->I counts; the rest
// are I->I.
inline std::vector<PipelineTrace> transition_traces(DatasetTag tag, int cc, int ic, int ci, int n = 500) {
  std::vector<PipelineTrace> out;
  const std::string prefix(to_string(tag));
  for (int i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "%s-%03d", prefix.c_str(), i);
    bool s1 = false, fin = false;
    if (i < cc) s1 = fin = true;
    else if (i < cc + ic) fin = true;
    else if (i < cc + ic + ci) s1 = true;
    out.push_back(outcome_trace(id, tag, s1, fin));
  }
  // Interleave outcomes so nothing depends on their order.
  std::mt19937_64 rng(7);
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

inline std::vector<PipelineTrace> outcome_table_traces() {
  std::vector<PipelineTrace> all;
  for (auto [tag, cc, ic, ci] : {std::tuple{DatasetTag::two_wiki, 82, 66, 45},
                                 std::tuple{DatasetTag::hotpotqa, 49, 55, 22},
                                 std::tuple{DatasetTag::musique, 9, 42, 4}}) {
    auto part = transition_traces(tag, cc, ic, ci);
    all.insert(all.end(), part.begin(), part.end());
  }
  return all;
}

// A small biography corpus and 500 questions about it. `n_confident` of the
// System-I fixtures carry logprobs [-2, -3] (mean prob ~0.0926); the rest
// carry [-4, -4] (~0.0183).
struct GateFixture {
  std::vector<Document> docs;
  std::vector<QAItem> items;
  std::vector<ScriptedFixture> fixtures;
  std::vector<bool> confident;
};

inline GateFixture gate_fixture(std::size_t n = 500, std::size_t n_confident = 238) {
  static const char* cities[] = {"Lisbon", "Oslo", "Quito", "Hanoi", "Dakar", "Perth", "Lima",
                                 "Tunis", "Cork", "Riga", "Accra", "Sucre", "Turku"};
  constexpr std::size_t n_people = 40;
  GateFixture f;
  for (std::size_t p = 0; p < n_people; ++p) {
    const std::string name = "Person" + std::to_string(p);
    const std::string city = cities[p % 13];
    Document d;
    d.title = name;
    d.text = name + " is a painter born in " + city + ". " + name + " studied at the academy of " +
             cities[(p + 5) % 13] + " and exhibited work in " + cities[(p + 9) % 13] + ".";
    d.doc_id = document_id(d.title, d.text);
    f.docs.push_back(std::move(d));
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(2024);
  std::shuffle(order.begin(), order.end(), rng);
  f.confident.assign(n, false);
  for (std::size_t i = 0; i < n_confident; ++i) f.confident[order[i]] = true;

  for (std::size_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "w%03zu", i);
    const std::size_t p = i % n_people;
    const std::string name = "Person" + std::to_string(p);
    const std::string city = cities[p % 13];
    const std::string guess = cities[(p + i) % 13];
    QAItem q;
    q.question_id = id;
    q.question = "In which city was " + name + " born?";
    q.gold_answer = city;
    q.dataset_tag = DatasetTag::two_wiki;
    f.items.push_back(q);

    ScriptedFixture s1;
    s1.stage_tag = "system1";
    s1.question_id = id;
    s1.text = "<output>\n<answer>" + guess + "</answer>\n</output>";
    s1.token_logprobs = f.confident[i] ? std::vector<TokenLogprob>{{"", -2.0}, {"", -3.0}}
                                       : std::vector<TokenLogprob>{{"", -4.0}, {"", -4.0}};
    f.fixtures.push_back(s1);

    ScriptedFixture tg;
    tg.stage_tag = "triple_gen";
    tg.question_id = id;
    tg.text = "<output>\n<triple>" + name + " | born_in | " + guess + "</triple>\n<triple>" + guess +
              " | city_of | painter " + name + "</triple>\n</output>";
    f.fixtures.push_back(tg);

    ScriptedFixture s2;
    s2.stage_tag = "system2";
    s2.question_id = id;
    s2.text = "The documents say " + name + " was born in " + city + ".\n<final_answer>" + city +
              "</final_answer>";
    f.fixtures.push_back(s2);
  }
  return f;
}

// Random text of exactly `n` wordpunct tokens.
inline std::string random_text(std::mt19937_64& rng, std::size_t n) {
  static const char* words[] = {"alpha", "Beta", "gamma42", "delta", "x", "Zeta", "eta", "theta9"};
  static const char* puncts[] = {".", ",", "(", ")", "-", "'", ":", ";"};
  static const char* spaces[] = {" ", " ", " ", "\n", "  ", "\t"};
  std::string s;
  std::uniform_int_distribution<int> w(0, 7), sp(0, 5), kind(0, 3);
  bool prev_word = false;
  for (std::size_t i = 0; i < n; ++i) {
    const bool word = kind(rng) != 0;
    if (i > 0 && (prev_word && word ? true : kind(rng) == 0)) s += spaces[sp(rng)];
    s += word ? words[w(rng)] : puncts[w(rng)];
    prev_word = word;
  }
  return s;
}

}  // namespace aqtest
