#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "anchorqa/corpus.hpp"
#include "anchorqa/embedding.hpp"
#include "anchorqa/error.hpp"
#include "anchorqa/triple.hpp"

namespace anchorqa {

struct RetrievalHit {
  std::string chunk_id;
  double score = 0.0;  // exact cosine similarity
  std::size_t query_index = 0;

  friend bool operator==(const RetrievalHit&, const RetrievalHit&) = default;
};

inline void to_json(nlohmann::json& j, const RetrievalHit& h) {
  j = {{"chunk_id", h.chunk_id}, {"score", h.score}, {"query_index", h.query_index}};
}
inline void from_json(const nlohmann::json& j, RetrievalHit& h) {
  j.at("chunk_id").get_to(h.chunk_id);
  j.at("score").get_to(h.score);
  j.at("query_index").get_to(h.query_index);
}

// Scores closer than this are ties, broken by chunk_id ascending.
inline constexpr double kTieEpsilon = 1e-12;

// Exact (brute-force) cosine index over chunk embeddings. Immutable once
// built; concurrent searches need no synchronization.
class DenseIndex {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  DenseIndex() = default;

  static DenseIndex from_vectors(std::vector<Chunk> chunks, std::vector<EmbeddingVector> vectors,
                                 std::string embedder_id) {
    if (chunks.empty()) throw InputError("cannot build an index from zero chunks");
    if (chunks.size() != vectors.size())
      throw InputError("chunk and vector counts differ");
    DenseIndex idx;
    idx.dim_ = vectors.front().dim();
    idx.embedder_id_ = std::move(embedder_id);
    idx.tokenizer_id_ = chunks.front().tokenizer_id;
    idx.data_.reserve(idx.dim_ * vectors.size());
    for (std::size_t i = 0; i < chunks.size(); ++i) {
      if (vectors[i].dim() != idx.dim_)
        throw ProviderError("embedding dimension mismatch: expected " + std::to_string(idx.dim_) +
                            ", got " + std::to_string(vectors[i].dim()));
      if (chunks[i].tokenizer_id != idx.tokenizer_id_)
        throw InputError("chunks built with different tokenizers cannot share an index");
      if (!idx.positions_.emplace(chunks[i].chunk_id, i).second)
        throw InputError("duplicate chunk_id '" + chunks[i].chunk_id + "'");
      idx.data_.insert(idx.data_.end(), vectors[i].values.begin(), vectors[i].values.end());
    }
    idx.chunks_ = std::move(chunks);
    return idx;
  }

  static DenseIndex build(std::vector<Chunk> chunks, EmbeddingProvider& provider,
                          const EmbedOptions& opts = {}) {
    if (chunks.empty()) throw InputError("cannot build an index from zero chunks");
    std::vector<std::string> texts;
    texts.reserve(chunks.size());
    for (const auto& c : chunks) texts.push_back(c.text);
    auto vectors = embed(texts, provider, opts);
    return from_vectors(std::move(chunks), std::move(vectors), provider.id());
  }

  std::size_t size() const noexcept { return chunks_.size(); }
  bool empty() const noexcept { return chunks_.empty(); }
  std::size_t dim() const noexcept { return dim_; }
  const std::string& embedder_id() const noexcept { return embedder_id_; }
  const std::string& tokenizer_id() const noexcept { return tokenizer_id_; }
  const std::vector<Chunk>& chunks() const noexcept { return chunks_; }

  std::span<const double> vector(std::size_t i) const {
    return std::span<const double>(data_).subspan(i * dim_, dim_);
  }

  const Chunk* find(const std::string& chunk_id) const {
    auto it = positions_.find(chunk_id);
    return it == positions_.end() ? nullptr : &chunks_[it->second];
  }

  std::vector<RetrievalHit> search(const EmbeddingVector& query, std::size_t k,
                                   std::size_t query_index = 0) const {
    if (empty()) throw InputError("search on an empty index");
    if (k == 0) throw InputError("k must be at least 1");
    if (query.dim() != dim_)
      throw ProviderError("query dimension " + std::to_string(query.dim()) +
                          " does not match index dimension " + std::to_string(dim_));

    std::vector<std::pair<double, std::size_t>> scored(size());
    for (std::size_t i = 0; i < size(); ++i) scored[i] = {dot(query.values, vector(i)), i};
    const std::size_t n = std::min(k, size());
    auto by_score = [](const auto& a, const auto& b) { return a.first > b.first; };
    // Candidates: everything that could tie with the n-th best score.
    std::nth_element(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n - 1), scored.end(),
                     by_score);
    const double cutoff = scored[n - 1].first - kTieEpsilon;
    auto tail = std::partition(scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(),
                               [&](const auto& s) { return s.first >= cutoff; });
    scored.erase(tail, scored.end());
    std::sort(scored.begin(), scored.end(), by_score);
    // Equal cosines can differ in the last bits depending on summation
    // order, so scores closer than kTieEpsilon count as ties.
    for (std::size_t b = 0; b < scored.size();) {
      std::size_t e = b + 1;
      while (e < scored.size() && scored[e - 1].first - scored[e].first <= kTieEpsilon) ++e;
      std::sort(scored.begin() + static_cast<std::ptrdiff_t>(b), scored.begin() + static_cast<std::ptrdiff_t>(e),
                [this](const auto& x, const auto& y) { return chunks_[x.second].chunk_id < chunks_[y.second].chunk_id; });
      b = e;
    }

    std::vector<RetrievalHit> hits;
    hits.reserve(n);
    for (std::size_t r = 0; r < n; ++r)
      hits.push_back({chunks_[scored[r].second].chunk_id, scored[r].first, query_index});
    return hits;
  }

  std::vector<RetrievalHit> search(const std::string& query, EmbeddingProvider& provider,
                                   std::size_t k = 5, std::size_t query_index = 0) const {
    if (query.empty()) throw InputError("empty query string");
    check_provider(provider);
    return search(embed_one(query, provider), k, query_index);
  }

  void check_provider(const EmbeddingProvider& provider) const {
    if (provider.id() != embedder_id_)
      throw InputError("index was built with embedder '" + embedder_id_ +
                       "' but queries use '" + provider.id() + "'");
  }

  // Binary layout (little endian):
  //   "AQIDX\0\0\0" | u32 version | u32 dim | u64 count
  //   | str embedder_id | str tokenizer_id | count*dim f64 | count * str chunk_id
  // where str = u32 length + bytes. Chunk records go to the JSONL sidecar
  // at sidecar_path(path).
  void save(const std::filesystem::path& path) const {
    static_assert(std::endian::native == std::endian::little, "index format assumes little endian");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write index: " + path.string());
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kFormatVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
    put<std::uint64_t>(out, chunks_.size());
    put_str(out, embedder_id_);
    put_str(out, tokenizer_id_);
    out.write(reinterpret_cast<const char*>(data_.data()),
              static_cast<std::streamsize>(data_.size() * sizeof(double)));
    for (const auto& c : chunks_) put_str(out, c.chunk_id);
    if (!out) throw IoError("write failed: " + path.string());
    write_jsonl_file(sidecar_path(path), chunks_);
  }

  static DenseIndex load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read index: " + path.string());
    char magic[sizeof kMagic];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
      throw InputError(path.string() + " is not an index file");
    const auto version = get<std::uint32_t>(in);
    if (version != kFormatVersion)
      throw InputError("unsupported index version " + std::to_string(version));
    DenseIndex idx;
    idx.dim_ = get<std::uint32_t>(in);
    const auto count = get<std::uint64_t>(in);
    idx.embedder_id_ = get_str(in);
    idx.tokenizer_id_ = get_str(in);
    idx.data_.resize(static_cast<std::size_t>(count) * idx.dim_);
    in.read(reinterpret_cast<char*>(idx.data_.data()),
            static_cast<std::streamsize>(idx.data_.size() * sizeof(double)));
    std::vector<std::string> ids(static_cast<std::size_t>(count));
    for (auto& id : ids) id = get_str(in);
    if (!in) throw InputError("truncated index file: " + path.string());

    idx.chunks_ = read_jsonl_file<Chunk>(sidecar_path(path));
    if (idx.chunks_.size() != ids.size())
      throw InputError("index sidecar has " + std::to_string(idx.chunks_.size()) +
                       " chunks, index has " + std::to_string(ids.size()));
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (idx.chunks_[i].chunk_id != ids[i])
        throw InputError("index sidecar out of sync at row " + std::to_string(i));
      idx.positions_.emplace(ids[i], i);
    }
    return idx;
  }

  static std::filesystem::path sidecar_path(const std::filesystem::path& index_path) {
    auto p = index_path;
    p += ".chunks.jsonl";
    return p;
  }

 private:
  static constexpr char kMagic[8] = {'A', 'Q', 'I', 'D', 'X', 0, 0, 0};

  template <typename T>
  static void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  static void put_str(std::ostream& out, const std::string& s) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  template <typename T>
  static T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw InputError("truncated index file");
    return v;
  }
  static std::string get_str(std::istream& in) {
    const auto n = get<std::uint32_t>(in);
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) throw InputError("truncated index file");
    return s;
  }

  std::size_t dim_ = 0;
  std::string embedder_id_;
  std::string tokenizer_id_;
  std::vector<double> data_;  // row-major, one unit vector per chunk
  std::vector<Chunk> chunks_;
  std::unordered_map<std::string, std::size_t> positions_;
};

struct TripleRetrieval {
  std::vector<std::string> queries;
  std::vector<RetrievalHit> hits;       // every per-query hit, query order then rank
  std::vector<std::string> chunk_ids;   // de-duplicated, first occurrence wins
};

// Union of per-query top-k results, keeping first-occurrence order.
inline TripleRetrieval retrieve_for_queries(const DenseIndex& index,
                                            const std::vector<std::string>& queries,
                                            EmbeddingProvider& provider, std::size_t k = 5) {
  TripleRetrieval out;
  out.queries = queries;
  std::unordered_set<std::string> seen;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    for (auto& hit : index.search(queries[q], provider, k, q)) {
      if (seen.insert(hit.chunk_id).second) out.chunk_ids.push_back(hit.chunk_id);
      out.hits.push_back(std::move(hit));
    }
  }
  return out;
}

inline TripleRetrieval retrieve_for_triples(const DenseIndex& index,
                                            const std::vector<ReasoningTriple>& triples,
                                            EmbeddingProvider& provider,
                                            std::size_t k_per_triple = 5,
                                            TripleQueryStyle style = TripleQueryStyle::spaced) {
  if (triples.empty()) throw InputError("retrieve_for_triples needs at least one triple");
  std::vector<std::string> queries;
  queries.reserve(triples.size());
  for (const auto& t : triples) queries.push_back(render_query(t, style));
  return retrieve_for_queries(index, queries, provider, k_per_triple);
}

}  // namespace anchorqa
