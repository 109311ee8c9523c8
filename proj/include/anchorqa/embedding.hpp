#pragma once

#include <cmath>
#include <cstddef>
#include <future>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "anchorqa/error.hpp"
#include "anchorqa/hash.hpp"

namespace anchorqa {

// Unit-normalized dense vector.
struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dim() const noexcept { return values.size(); }
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual std::string id() const = 0;
  // Raw (not necessarily normalized) vectors, one per input, order preserved.
  // Implementations must be safe to call from several threads at once.
  virtual std::vector<std::vector<double>> embed_raw(std::span<const std::string> texts) = 0;
};

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline EmbeddingVector normalize(std::vector<double> v) {
  const double n = l2_norm(v);
  if (!(n > 0.0) || !std::isfinite(n)) throw ProviderError("embedding has zero or invalid norm");
  for (auto& x : v) x /= n;
  return EmbeddingVector{std::move(v)};
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Deterministic feature-hashing embedder for tests and offline runs.
// Text is lowercased with every non-alphanumeric byte mapped to a space;
// character trigrams (with word-boundary padding) and whole words are hashed
// into `dim` buckets with FNV-1a and counted.
class HashingEmbedder final : public EmbeddingProvider {
 public:
  explicit HashingEmbedder(std::size_t dim = 512) : dim_(dim) {
    if (dim_ == 0) throw InputError("embedding dimension must be positive");
  }

  std::string id() const override { return "hash-ngram3-d" + std::to_string(dim_); }
  std::size_t dim() const noexcept { return dim_; }

  std::vector<std::vector<double>> embed_raw(std::span<const std::string> texts) override {
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(features(t));
    return out;
  }

  std::vector<double> features(std::string_view text) const {
    std::string norm;
    norm.reserve(text.size() + 2);
    norm.push_back(' ');
    for (unsigned char c : text) {
      const bool alnum = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') ||
                         (c >= 'A' && c <= 'Z') || c >= 0x80;
      const char mapped = alnum ? static_cast<char>(c >= 'A' && c <= 'Z' ? c + 32 : c) : ' ';
      if (mapped == ' ' && norm.back() == ' ') continue;
      norm.push_back(mapped);
    }
    if (norm.back() != ' ') norm.push_back(' ');

    std::vector<double> v(dim_, 0.0);
    if (norm.size() < 3) {
      // Nothing alphanumeric; fall back to the raw bytes so distinct inputs
      // still get distinct, non-zero vectors.
      v[fnv1a64(text) % dim_] += 1.0;
      return v;
    }
    const std::string_view s(norm);
    for (std::size_t i = 0; i + 3 <= s.size(); ++i) v[fnv1a64(s.substr(i, 3)) % dim_] += 1.0;
    std::size_t w = 1;
    while (w < s.size()) {
      const auto e = s.find(' ', w);
      if (e == std::string_view::npos || e == w) break;
      v[fnv1a64(s.substr(w, e - w), 0x84222325cbf29ce4ULL) % dim_] += 1.0;
      w = e + 1;
    }
    return v;
  }

 private:
  std::size_t dim_;
};

struct EmbedOptions {
  std::size_t batch_size = 64;
  std::size_t max_in_flight = 4;
};

// Embeds texts through `provider` in batches (up to max_in_flight batches
// concurrently) and returns unit-normalized vectors in input order.
inline std::vector<EmbeddingVector> embed(std::span<const std::string> texts,
                                          EmbeddingProvider& provider,
                                          const EmbedOptions& opts = {}) {
  for (const auto& t : texts)
    if (t.empty()) throw InputError("cannot embed an empty string");
  const std::size_t batch = std::max<std::size_t>(1, opts.batch_size);
  const std::size_t in_flight = std::max<std::size_t>(1, opts.max_in_flight);

  std::vector<std::vector<double>> raw(texts.size());
  std::vector<std::future<void>> pending;
  for (std::size_t begin = 0; begin < texts.size(); begin += batch) {
    const std::size_t end = std::min(texts.size(), begin + batch);
    auto job = [&, begin, end] {
      auto part = provider.embed_raw(texts.subspan(begin, end - begin));
      if (part.size() != end - begin)
        throw ProviderError("embedding provider returned " + std::to_string(part.size()) +
                            " vectors for " + std::to_string(end - begin) + " inputs");
      for (std::size_t i = 0; i < part.size(); ++i) raw[begin + i] = std::move(part[i]);
    };
    if (in_flight == 1) {
      job();
      continue;
    }
    if (pending.size() >= in_flight) {
      pending.front().get();
      pending.erase(pending.begin());
    }
    pending.push_back(std::async(std::launch::async, job));
  }
  for (auto& f : pending) f.get();

  std::vector<EmbeddingVector> out;
  out.reserve(raw.size());
  for (auto& r : raw) {
    if (!out.empty() && r.size() != out.front().dim())
      throw ProviderError("embedding dimension changed within one request");
    out.push_back(normalize(std::move(r)));
  }
  return out;
}

inline EmbeddingVector embed_one(const std::string& text, EmbeddingProvider& provider) {
  return std::move(embed(std::span<const std::string>(&text, 1), provider).front());
}

}  // namespace anchorqa
