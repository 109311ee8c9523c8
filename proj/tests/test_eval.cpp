#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace aqtest;

TEST(Metrics, FrozenReferencePairs) {
  const auto rows = nlohmann::json::parse(slurp(data_dir() / "squad_pairs.json"));
  ASSERT_EQ(rows.size(), 50u);
  for (const auto& r : rows) {
    const auto pred = r.at("prediction").get<std::string>();
    const auto gold = r.at("gold").get<std::string>();
    EXPECT_EQ(exact_match(pred, gold), r.at("em").get<int>()) << pred << " / " << gold;
    EXPECT_EQ(token_f1(pred, gold), r.at("f1").get<double>()) << pred << " / " << gold;
  }
}

TEST(Metrics, NamedCases) {
  EXPECT_NEAR(token_f1("pac12 conference", "pac12"), 2.0 / 3.0, 1e-15);
  EXPECT_EQ(exact_match("Big 12 Conference", "Pac-12 Conference"), 0);
  EXPECT_EQ(exact_match("The Pac-12 Conference.", "pac12 conference"), 1);
  EXPECT_EQ(normalize_answer("  The  Quick, (brown) fox!  "), "quick brown fox");
  EXPECT_EQ(normalize_answer("anthem theatre a-team"), "anthem theatre ateam");
  EXPECT_EQ(exact_match("", ""), 1);
  EXPECT_EQ(token_f1("the", "a"), 1.0);
  EXPECT_EQ(token_f1("", "x"), 0.0);
  EXPECT_EQ(token_f1("x", ""), 0.0);
  // Multiset overlap.
  EXPECT_NEAR(token_f1("x y y", "y y z"), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(token_f1("y y y", "y"), 0.5, 1e-15);
}

TEST(Metrics, AgreeWithRegexScorer) {
  std::mt19937_64 rng(31);
  const std::vector<std::string> pieces{"the", "The", "a", "an", "An", "Pac", "-", "12", " ", "  ",
                                        ".", ",", "conference", "Big", "Ten", "'s", "x", "theatre",
                                        "(", ")", "\t", "another", "A", "_", "1,000"};
  std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1), len(0, 12);
  auto make = [&] {
    std::string s;
    for (auto n = len(rng); n > 0; --n) {
      s += pieces[pick(rng)];
      if (pick(rng) % 2) s += ' ';
    }
    return s;
  };
  for (int i = 0; i < 5000; ++i) {
    const auto p = make(), g = make();
    ASSERT_EQ(normalize_answer(p), regex_normalize(p)) << "[" << p << "]";
    EXPECT_EQ(exact_match(p, g), regex_normalize(p) == regex_normalize(g) ? 1 : 0);
    EXPECT_EQ(token_f1(p, g), regex_f1(p, g)) << "[" << p << "] [" << g << "]";
    EXPECT_EQ(token_f1(p, g), token_f1(g, p));
    EXPECT_LE(exact_match(p, g), token_f1(p, g));
    EXPECT_EQ(normalize_answer(normalize_answer(p)), normalize_answer(p));
  }
}

TEST(Metrics, AggregateRoundsToTwoDecimals) {
  std::vector<EvalScore> s{{"a", 1, 1.0}, {"b", 0, 2.0 / 3.0}, {"c", 0, 0.0}};
  const auto a = aggregate(s);
  EXPECT_EQ(a.n, 3u);
  EXPECT_DOUBLE_EQ(a.em, 33.33);
  EXPECT_DOUBLE_EQ(a.f1, 55.56);
  EXPECT_THROW(aggregate({}), InputError);
}

TEST(Transitions, OutcomeTable) {
  const auto traces = outcome_table_traces();
  const auto rows = summarize("full", traces);
  ASSERT_EQ(rows.size(), 4u);
  std::map<std::string, long long> net;
  for (const auto& r : rows)
    if (r.transitions) net[r.dataset] = r.transitions->net_gain();
  EXPECT_EQ(net["2wiki"], 21);
  EXPECT_EQ(net["hotpotqa"], 33);
  EXPECT_EQ(net["musique"], 38);
  const auto& two = rows[0];
  EXPECT_EQ(two.dataset, "2wiki");
  EXPECT_EQ(two.transitions->both_correct, 82u);
  EXPECT_EQ(two.transitions->gained, 66u);
  EXPECT_EQ(two.transitions->lost, 45u);
  EXPECT_EQ(two.transitions->both_incorrect, 500u - 82 - 66 - 45);
  EXPECT_EQ(two.transitions->total(), 500u);
  EXPECT_EQ(rows.back().dataset, "average");
}

TEST(Transitions, PairedRuns) {
  std::vector<PipelineTrace> before, after;
  for (int i = 0; i < 10; ++i) {
    auto b = outcome_trace("q" + std::to_string(i), DatasetTag::hotpotqa, i < 4, i < 4);
    b.mode = Mode::system1_only;
    before.push_back(b);
    after.push_back(outcome_trace("q" + std::to_string(9 - i), DatasetTag::hotpotqa, false, (9 - i) % 2 == 0));
  }
  const auto pairs = paired_transitions("s1", before, "full", after);
  ASSERT_EQ(pairs.size(), 1u);
  // Before correct: q0..q3. After correct: q0,q2,q4,q6,q8.
  EXPECT_EQ(pairs[0].report.both_correct, 2u);
  EXPECT_EQ(pairs[0].report.lost, 2u);
  EXPECT_EQ(pairs[0].report.gained, 3u);
  EXPECT_EQ(pairs[0].report.both_incorrect, 3u);

  after.pop_back();
  EXPECT_THROW(paired_transitions("s1", before, "full", after), InputError);
  after.push_back(after.front());
  EXPECT_THROW(paired_transitions("s1", before, "full", after), InputError);
}

TEST(Payload, MeansAndSystemOneZero) {
  std::vector<PipelineTrace> t(3);
  t[0].payload_tokens = 100;
  t[1].payload_tokens = 200;
  t[2].payload_tokens = 600;
  t[2].dataset_tag = DatasetTag::musique;
  const auto r = payload_tokens(t);
  EXPECT_DOUBLE_EQ(r.mean, 300.0);
  EXPECT_DOUBLE_EQ(r.per_dataset.at("hotpotqa"), 150.0);
  EXPECT_DOUBLE_EQ(r.per_dataset.at("musique"), 600.0);
  EXPECT_EQ(payload_tokens({}).mean, 0.0);
}

TEST(Savings, CountsCompleteAndUnsentPrompts) {
  std::vector<PipelineTrace> t(4);
  t[0].gate_decision = GateDecision::complete;
  t[0].system2_prompt_tokens = 300;
  t[1].gate_decision = GateDecision::complete;
  t[1].system2_prompt_tokens = 501;
  t[2].gate_decision = GateDecision::continue_;
  t[2].system2_prompt_tokens = 9999;
  t[2].system2_sent = true;
  t[3].gate_decision = GateDecision::complete;  // nothing estimated
  const auto s = threshold_savings(t);
  EXPECT_EQ(s.complete, 3u);
  EXPECT_EQ(s.continued, 1u);
  EXPECT_EQ(s.estimated, 2u);
  EXPECT_DOUBLE_EQ(s.avg_input_tokens_saved, 400.5);
}

TEST(Reports, RenderAllFormats) {
  auto traces = outcome_table_traces();
  const auto rows = summarize("ours", traces);
  const auto text = render_text(rows);
  EXPECT_NE(text.find("2wiki"), std::string::npos);
  EXPECT_NE(text.find("System-I -> final transitions"), std::string::npos);
  const auto csv = render_csv(rows);
  std::istringstream in(csv);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 15) << line;
  }
  EXPECT_EQ(lines, rows.size() + 1);
  const auto j = render_json(rows);
  ASSERT_EQ(j["runs"].size(), 4u);
  EXPECT_EQ(j["runs"][0]["transitions"]["net_gain"], 21);
  EXPECT_EQ(j["runs"][2]["transitions"]["net_gain"], 38);
}
