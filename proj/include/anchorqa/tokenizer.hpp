#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace anchorqa {

// A token is a byte range into the text it was produced from.
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;

  // Identifies the tokenization scheme; recorded on every chunk and index so
  // artifacts built with different tokenizers are never mixed.
  virtual std::string id() const = 0;
  virtual std::vector<TokenSpan> tokenize(std::string_view text) const = 0;

  std::size_t count(std::string_view text) const { return tokenize(text).size(); }
};

// Word/punctuation splitter. Maximal runs of ASCII alphanumerics (and any
// non-ASCII byte, so UTF-8 letters stay inside words) form one token; every
// other non-space character is a token of its own.
class WordPunctTokenizer final : public Tokenizer {
 public:
  std::string id() const override { return "wordpunct-v1"; }

  std::vector<TokenSpan> tokenize(std::string_view text) const override {
    std::vector<TokenSpan> out;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
      const auto c = static_cast<unsigned char>(text[i]);
      if (is_space(c)) {
        ++i;
        continue;
      }
      if (is_word(c)) {
        std::size_t j = i + 1;
        while (j < n && is_word(static_cast<unsigned char>(text[j]))) ++j;
        out.push_back({i, j});
        i = j;
      } else {
        out.push_back({i, i + 1});
        ++i;
      }
    }
    return out;
  }

 private:
  static bool is_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  }
  static bool is_word(unsigned char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
           c >= 0x80;
  }
};

inline const Tokenizer& default_tokenizer() {
  static const WordPunctTokenizer tok;
  return tok;
}

}  // namespace anchorqa
