#include <gtest/gtest.h>

#include <atomic>
#include <random>
#include <thread>

#include "support.hpp"

using namespace aqtest;

namespace {

std::vector<Chunk> synthetic_chunks(std::mt19937_64& rng, std::size_t n) {
  std::vector<Chunk> out;
  std::uniform_int_distribution<std::size_t> len(1, 60);
  for (std::size_t i = 0; i < n; ++i) {
    Document d{"d" + std::to_string(i), "t", random_text(rng, len(rng))};
    auto c = chunk_document(d);
    out.push_back(c.front());
  }
  return out;
}

// Counts how many embed_raw calls were made.
class CountingEmbedder final : public EmbeddingProvider {
 public:
  std::string id() const override { return inner.id(); }
  std::vector<std::vector<double>> embed_raw(std::span<const std::string> texts) override {
    ++calls;
    return inner.embed_raw(texts);
  }
  HashingEmbedder inner;
  std::atomic<int> calls{0};
};

class BadEmbedder final : public EmbeddingProvider {
 public:
  explicit BadEmbedder(int mode) : mode_(mode) {}
  std::string id() const override { return "bad"; }
  std::vector<std::vector<double>> embed_raw(std::span<const std::string> texts) override {
    std::vector<std::vector<double>> out(texts.size(), std::vector<double>(4, 1.0));
    if (mode_ == 0) out.pop_back();
    if (mode_ == 1) out.back().push_back(1.0);
    if (mode_ == 2) out.back().assign(4, 0.0);
    return out;
  }

 private:
  int mode_;
};

}  // namespace

TEST(Embedding, HashingIsDeterministicAndUnit) {
  HashingEmbedder e;
  const std::vector<std::string> texts{"Colorado Buffaloes", "colorado, buffaloes!", "Big Ten"};
  const auto a = embed(texts, e);
  const auto b = embed(texts, e);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].values, b[i].values);
    EXPECT_NEAR(l2_norm(a[i].values), 1.0, 1e-12);
    EXPECT_EQ(a[i].dim(), 512u);
  }
  // Case and punctuation are folded away.
  EXPECT_EQ(a[0].values, a[1].values);
  EXPECT_EQ(e.id(), "hash-ngram3-d512");
  // Punctuation-only text still embeds.
  EXPECT_NO_THROW(embed_one("?!", e));
  EXPECT_THROW(embed_one("", e), InputError);
}

TEST(Embedding, BatchingPreservesOrder) {
  std::mt19937_64 rng(5);
  std::vector<std::string> texts;
  for (int i = 0; i < 150; ++i) texts.push_back(random_text(rng, 1 + i % 30));
  CountingEmbedder counting;
  const auto batched = embed(texts, counting, {16, 4});
  EXPECT_EQ(counting.calls.load(), 10);
  HashingEmbedder plain;
  const auto one_shot = embed(texts, plain, {1000, 1});
  ASSERT_EQ(batched.size(), one_shot.size());
  for (std::size_t i = 0; i < texts.size(); ++i) EXPECT_EQ(batched[i].values, one_shot[i].values);
}

TEST(Embedding, ProviderContractViolations) {
  const std::vector<std::string> texts{"a", "b"};
  BadEmbedder short_batch(0), ragged(1), zero(2);
  EXPECT_THROW(embed(texts, short_batch, {8, 1}), ProviderError);
  EXPECT_THROW(embed(texts, ragged, {8, 1}), ProviderError);
  EXPECT_THROW(embed(texts, zero, {8, 1}), ProviderError);
}

TEST(Index, MatchesBruteForce) {
  std::mt19937_64 rng(17);
  HashingEmbedder e(64);
  for (int trial = 0; trial < 20; ++trial) {
    auto chunks = synthetic_chunks(rng, 50 + trial * 10);
    std::vector<std::string> ids, texts;
    for (const auto& c : chunks) {
      ids.push_back(c.chunk_id);
      texts.push_back(c.text);
    }
    const auto rows = e.embed_raw(texts);
    const auto idx = DenseIndex::build(chunks, e);
    for (int q = 0; q < 5; ++q) {
      const auto query = random_text(rng, 1 + q * 3);
      for (std::size_t k : {1u, 5u, 1000u}) {
        const auto hits = idx.search(query, e, k);
        const auto expect = brute_force_topk(rows, ids, e.features(query), k);
        ASSERT_EQ(hits.size(), expect.size());
        for (std::size_t r = 0; r < hits.size(); ++r) {
          EXPECT_NEAR(hits[r].score, expect[r].first, 1e-9);
          EXPECT_EQ(hits[r].chunk_id, expect[r].second);
        }
      }
    }
  }
}

TEST(Index, TiesBreakByChunkId) {
  std::vector<Chunk> chunks;
  std::vector<EmbeddingVector> vecs;
  for (const char* id : {"c", "a", "b", "d"}) {
    Chunk c;
    c.chunk_id = id;
    c.text = "x";
    c.token_count = 1;
    c.tokenizer_id = "wordpunct-v1";
    chunks.push_back(c);
    vecs.push_back(normalize({1.0, 0.0}));
  }
  vecs[3] = normalize({0.0, 1.0});
  const auto idx = DenseIndex::from_vectors(chunks, vecs, "manual");
  const auto hits = idx.search(normalize({1.0, 0.0}), 3);
  ASSERT_EQ(hits.size(), 3u);
  EXPECT_EQ(hits[0].chunk_id, "a");
  EXPECT_EQ(hits[1].chunk_id, "b");
  EXPECT_EQ(hits[2].chunk_id, "c");
}

TEST(Index, SearchErrors) {
  const auto& g = golden();
  HashingEmbedder e;
  HashingEmbedder other(128);
  EXPECT_THROW(g.index.search("", e), InputError);
  EXPECT_THROW(g.index.search("x", e, 0), InputError);
  EXPECT_THROW(g.index.search("x", other), InputError);
  EXPECT_THROW(g.index.search(normalize({1.0, 2.0}), 5), ProviderError);
  EXPECT_THROW(DenseIndex().search(normalize({1.0}), 1), InputError);
  EXPECT_THROW(DenseIndex::build({}, e), InputError);
  // k larger than the index returns everything.
  EXPECT_EQ(g.index.search("football", e, 100).size(), g.index.size());
}

TEST(Index, SaveLoadRoundTrip) {
  TempDir tmp;
  const auto& g = golden();
  g.index.save(tmp / "idx.bin");
  EXPECT_TRUE(fs::exists(DenseIndex::sidecar_path(tmp / "idx.bin")));
  const auto loaded = DenseIndex::load(tmp / "idx.bin");
  EXPECT_EQ(loaded.size(), g.index.size());
  EXPECT_EQ(loaded.dim(), g.index.dim());
  EXPECT_EQ(loaded.embedder_id(), g.index.embedder_id());
  EXPECT_EQ(loaded.tokenizer_id(), "wordpunct-v1");
  EXPECT_EQ(loaded.chunks(), g.index.chunks());
  HashingEmbedder e;
  EXPECT_EQ(loaded.search("college football conference", e, 7),
            g.index.search("college football conference", e, 7));
  // Re-saving gives identical bytes.
  loaded.save(tmp / "idx2.bin");
  EXPECT_EQ(slurp(tmp / "idx.bin"), slurp(tmp / "idx2.bin"));
}

TEST(Index, CorruptFilesRejected) {
  TempDir tmp;
  const auto& g = golden();
  g.index.save(tmp / "idx.bin");
  auto bytes = slurp(tmp / "idx.bin");
  {
    std::ofstream(tmp / "trunc.bin", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
    fs::copy_file(DenseIndex::sidecar_path(tmp / "idx.bin"), DenseIndex::sidecar_path(tmp / "trunc.bin"));
  }
  EXPECT_THROW(DenseIndex::load(tmp / "trunc.bin"), InputError);
  std::ofstream(tmp / "junk.bin", std::ios::binary) << "not an index at all";
  EXPECT_THROW(DenseIndex::load(tmp / "junk.bin"), InputError);
  EXPECT_THROW(DenseIndex::load(tmp / "missing.bin"), IoError);
  // Sidecar out of sync.
  std::ofstream(DenseIndex::sidecar_path(tmp / "idx.bin"), std::ios::trunc) << "";
  EXPECT_THROW(DenseIndex::load(tmp / "idx.bin"), InputError);
}

TEST(Index, MixedTokenizersRejected) {
  auto chunks = golden().chunks;
  chunks[1].tokenizer_id = "other";
  HashingEmbedder e;
  EXPECT_THROW(DenseIndex::build(chunks, e), InputError);
}

TEST(Retrieval, UnionKeepsFirstOccurrence) {
  const auto& g = golden();
  HashingEmbedder e;
  const std::vector<ReasoningTriple> triples{
      {"Justin_Bannan", "played_college_football_for", "Penn_State_Nittany_Lions"},
      {"Penn_State_Nittany_Lions", "current_conference_member_of", "Big_Ten_Conference"}};
  const auto r = retrieve_for_triples(g.index, triples, e, 5);
  ASSERT_EQ(r.queries.size(), 2u);
  EXPECT_EQ(r.queries[0], "Justin_Bannan played_college_football_for Penn_State_Nittany_Lions");
  EXPECT_EQ(r.hits.size(), 10u);
  EXPECT_LE(r.chunk_ids.size(), 10u);
  std::set<std::string> uniq(r.chunk_ids.begin(), r.chunk_ids.end());
  EXPECT_EQ(uniq.size(), r.chunk_ids.size());
  // First-occurrence order: walking hits and keeping unseen ids gives chunk_ids.
  std::vector<std::string> walk;
  for (const auto& h : r.hits)
    if (std::find(walk.begin(), walk.end(), h.chunk_id) == walk.end()) walk.push_back(h.chunk_id);
  EXPECT_EQ(walk, r.chunk_ids);
  for (std::size_t i = 0; i < r.hits.size(); ++i) EXPECT_EQ(r.hits[i].query_index, i / 5);
  EXPECT_THROW(retrieve_for_triples(g.index, {}, e), InputError);
}

TEST(Retrieval, ConcurrentSearchesAgree) {
  const auto& g = golden();
  HashingEmbedder e;
  const auto expect = g.index.search("Colorado Pac-12", e, 5);
  std::vector<std::jthread> threads;
  std::atomic<int> mismatches{0};
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&] {
      HashingEmbedder local;
      for (int i = 0; i < 50; ++i)
        if (g.index.search("Colorado Pac-12", local, 5) != expect) ++mismatches;
    });
  threads.clear();
  EXPECT_EQ(mismatches.load(), 0);
}
