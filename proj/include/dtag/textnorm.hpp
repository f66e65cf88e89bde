#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "dtag/util.hpp"

namespace dtag {

enum class TokenKind { word, number, punct, hashtag, mention, url, hashtag_derived };

inline std::string_view to_string(TokenKind k) {
  switch (k) {
    case TokenKind::word: return "word";
    case TokenKind::number: return "number";
    case TokenKind::punct: return "punct";
    case TokenKind::hashtag: return "hashtag";
    case TokenKind::mention: return "mention";
    case TokenKind::url: return "url";
    case TokenKind::hashtag_derived: return "hashtag_derived";
  }
  return "word";
}

/// Half-open byte range into the original text.
struct CharSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const CharSpan&) const = default;
};

struct Token {
  std::string surface;
  std::string lemma;
  CharSpan span;
  TokenKind kind = TokenKind::word;
  // Index of the token this one came from in the raw tokenization. Tokens
  // split off a hashtag share the index (and span) of that hashtag.
  std::size_t source = 0;
};

// ---------------------------------------------------------------------------
// tokenization

namespace detail {

inline bool is_symbol_codepoint(char32_t cp) {
  return (cp >= 0x00A0 && cp <= 0x00BF) || cp == 0x00D7 || cp == 0x00F7 ||
         (cp >= 0x2000 && cp <= 0x2BFF) || (cp >= 0x2E00 && cp <= 0x2E7F) ||
         (cp >= 0x3000 && cp <= 0x303F) || (cp >= 0xFE00 && cp <= 0xFE0F) ||
         (cp >= 0xFF01 && cp <= 0xFF0F) || (cp >= 0x1F000 && cp <= 0x1FAFF) ||
         cp >= 0xE0000 || cp == 0xFFFD;
}

/// Letter, digit or underscore, with any non-symbol non-ASCII code point
/// treated as a letter.
inline bool is_word_codepoint(char32_t cp) {
  if (cp < 0x80) {
    const char c = static_cast<char>(cp);
    return is_ascii_alpha(c) || is_ascii_digit(c) || c == '_';
  }
  return !is_symbol_codepoint(cp);
}

inline bool is_apostrophe(char32_t cp) { return cp == U'\'' || cp == 0x2019; }

inline bool is_url(std::string_view chunk) {
  static const std::regex scheme(R"(^(https?://|www\.)\S+$)", std::regex::icase);
  static const std::regex bare(R"(^[A-Za-z0-9-]+(\.[A-Za-z0-9-]+)*\.[A-Za-z]{2,}/\S*$)");
  if (chunk.find('/') == std::string_view::npos &&
      !(chunk.size() > 4 && to_lower(chunk.substr(0, 4)) == "www.")) {
    return false;
  }
  const std::string s(chunk);
  return std::regex_match(s, scheme) || std::regex_match(s, bare);
}

inline bool is_clitic(std::string_view letters) {
  const auto l = to_lower(letters);
  return l == "s" || l == "m" || l == "re" || l == "ll" || l == "ve" || l == "d" || l == "t";
}

}  // namespace detail

/// Splits on whitespace and punctuation. URLs, `#hashtag` and `@mention` stay
/// single tokens; English clitics ('s, 'm, n't, ...) are split off. Lemmas
/// are only lowercased here; see Lemmatizer for real lemmatization.
inline std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  auto emit = [&](std::size_t b, std::size_t e, TokenKind kind) {
    Token t;
    t.surface = std::string(text.substr(b, e - b));
    t.lemma = to_lower(t.surface);
    t.span = {b, e};
    t.kind = kind;
    t.source = out.size();
    out.push_back(std::move(t));
  };
  auto word_end = [&](std::size_t p) {
    while (p < text.size()) {
      auto [cp, len] = decode_utf8(text, p);
      if (!detail::is_word_codepoint(cp)) break;
      p += len;
    }
    return p;
  };

  std::size_t pos = 0;
  while (pos < text.size()) {
    if (is_ascii_space(text[pos])) {
      ++pos;
      continue;
    }
    // URL check on the whitespace-delimited chunk.
    std::size_t chunk_end = pos;
    while (chunk_end < text.size() && !is_ascii_space(text[chunk_end])) ++chunk_end;
    if (detail::is_url(text.substr(pos, chunk_end - pos))) {
      emit(pos, chunk_end, TokenKind::url);
      pos = chunk_end;
      continue;
    }

    const char c = text[pos];
    if ((c == '#' || c == '@') && pos + 1 < text.size()) {
      auto [cp, len] = decode_utf8(text, pos + 1);
      const bool ok = c == '#' ? detail::is_word_codepoint(cp)
                               : (cp < 0x80 && (is_ascii_alpha(static_cast<char>(cp)) ||
                                                is_ascii_digit(static_cast<char>(cp)) || cp == '_'));
      if (ok) {
        std::size_t e = pos + 1;
        if (c == '#') {
          e = word_end(e);
        } else {
          while (e < text.size() && (is_ascii_alpha(text[e]) || is_ascii_digit(text[e]) || text[e] == '_')) ++e;
        }
        emit(pos, e, c == '#' ? TokenKind::hashtag : TokenKind::mention);
        pos = e;
        continue;
      }
    }

    auto [cp, len] = decode_utf8(text, pos);
    if (detail::is_word_codepoint(cp)) {
      std::size_t e = word_end(pos);
      // Digit groups such as 10,000 or 3.5 stay together.
      while (e + 1 < text.size() && (text[e] == '.' || text[e] == ',' || text[e] == ':') &&
             is_ascii_digit(text[e - 1]) && is_ascii_digit(text[e + 1])) {
        e = word_end(e + 1);
      }
      // Apostrophes: split clitics, keep names like O'Neil whole.
      while (e < text.size()) {
        auto [ap, alen] = decode_utf8(text, e);
        if (!detail::is_apostrophe(ap)) break;
        const std::size_t after = word_end(e + alen);
        if (after == e + alen) break;
        const auto letters = text.substr(e + alen, after - e - alen);
        if (detail::is_clitic(letters)) {
          std::size_t split = e;
          if (to_lower(letters) == "t" && split > pos + 1 && (text[split - 1] == 'n' || text[split - 1] == 'N')) {
            --split;  // n't
          }
          emit(pos, split, TokenKind::word);
          emit(split, after, TokenKind::word);
          pos = after;
          e = pos;
          break;
        }
        e = after;
      }
      if (e == pos) continue;
      bool numeric = true;
      for (std::size_t i = pos; i < e; ++i) {
        if (!is_ascii_digit(text[i]) && text[i] != '.' && text[i] != ',' && text[i] != ':') numeric = false;
      }
      emit(pos, e, numeric ? TokenKind::number : TokenKind::word);
      pos = e;
      continue;
    }

    // Punctuation: a run of the same code point is one token ("...", "!!").
    std::size_t e = pos + len;
    while (e < text.size()) {
      auto [cp2, len2] = decode_utf8(text, e);
      if (cp2 != cp) break;
      e += len2;
    }
    emit(pos, e, TokenKind::punct);
    pos = e;
  }
  return out;
}

/// Removes @mentions and URLs.
inline std::vector<Token> strip_noise(std::vector<Token> tokens) {
  std::erase_if(tokens, [](const Token& t) {
    return t.kind == TokenKind::mention || t.kind == TokenKind::url;
  });
  return tokens;
}

// ---------------------------------------------------------------------------
// hashtag segmentation

class SegmentationDict {
 public:
  SegmentationDict() = default;

  /// Builds from raw counts; scores are log relative frequencies.
  explicit SegmentationDict(const std::vector<std::pair<std::string, double>>& counts) {
    double total = 0.0;
    for (const auto& [w, c] : counts) {
      if (c <= 0) throw DataError("segmentation count must be positive for '" + w + "'");
      total += c;
    }
    for (const auto& [w, c] : counts) {
      const auto key = to_lower(w);
      auto it = scores_.find(key);
      const double s = std::log(c / total);
      if (it == scores_.end() || s > it->second) scores_[key] = s;
      max_word_len_ = std::max(max_word_len_, key.size());
    }
  }

  /// Reads `word count` lines.
  static SegmentationDict load(const std::string& path) {
    std::vector<std::pair<std::string, double>> counts;
    const auto lines = read_lines(path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const auto fields = split_ws(lines[i]);
      if (fields.empty() || fields[0][0] == '#') continue;
      if (fields.size() != 2) {
        throw DataError(path + ":" + std::to_string(i + 1) + ": expected 'word count'");
      }
      double c = 0;
      try {
        c = std::stod(fields[1]);
      } catch (const std::exception&) {
        throw DataError(path + ":" + std::to_string(i + 1) + ": bad count '" + fields[1] + "'");
      }
      counts.emplace_back(fields[0], c);
    }
    if (counts.empty()) throw DataError("empty segmentation wordlist: " + path);
    return SegmentationDict(counts);
  }

  static double unknown_score(std::size_t length) { return -(20.0 + 3.0 * static_cast<double>(length)); }

  /// Score of one piece: its log frequency if known, otherwise the
  /// unknown-substring penalty.
  double score(std::string_view piece) const {
    if (piece.size() <= max_word_len_) {
      auto it = scores_.find(std::string(piece));
      if (it != scores_.end()) return it->second;
    }
    return unknown_score(piece.size());
  }

  bool contains(std::string_view w) const { return scores_.count(std::string(w)) != 0; }
  bool empty() const { return scores_.empty(); }
  std::size_t size() const { return scores_.size(); }
  std::size_t max_word_len() const { return max_word_len_; }

 private:
  std::unordered_map<std::string, double> scores_;
  std::size_t max_word_len_ = 0;
};

/// Best-scoring split of a lowercased string. Ties prefer fewer pieces, then
/// the longer final piece.
inline std::vector<std::string> segment_body(std::string_view body, const SegmentationDict& dict) {
  const std::size_t n = body.size();
  if (n == 0) return {};
  constexpr double kNeg = -std::numeric_limits<double>::infinity();
  std::vector<double> best(n + 1, kNeg);
  std::vector<std::size_t> pieces(n + 1, 0), back(n + 1, 0);
  best[0] = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      // Never cut inside a UTF-8 sequence.
      if (j > 0 && (static_cast<unsigned char>(body[j]) & 0xC0) == 0x80) continue;
      const double s = best[j] + dict.score(body.substr(j, i - j));
      const std::size_t p = pieces[j] + 1;
      const double tol = 1e-9 * std::max(1.0, std::abs(s));
      if (s > best[i] + tol || (std::abs(s - best[i]) <= tol && p < pieces[i])) {
        best[i] = s;
        pieces[i] = p;
        back[i] = j;
      }
    }
  }
  std::vector<std::string> out;
  for (std::size_t i = n; i > 0; i = back[i]) out.emplace_back(body.substr(back[i], i - back[i]));
  return {out.rbegin(), out.rend()};
}

/// Splits a hashtag into constituent words, e.g. "#HurricaneIrma" ->
/// {"hurricane", "irma"}. The leading '#' is optional.
inline std::vector<std::string> segment_hashtag(std::string_view tag, const SegmentationDict& dict) {
  if (!tag.empty() && tag.front() == '#') tag.remove_prefix(1);
  return segment_body(to_lower(tag), dict);
}

// ---------------------------------------------------------------------------
// lemmatization

/// Rule-based lemmatizer: an exception map for irregular forms, a set of base
/// forms at which stripping stops, and ordered suffix rules. Rules are applied
/// until a fixed point, which makes lemmatize idempotent.
class Lemmatizer {
 public:
  Lemmatizer() = default;
  Lemmatizer(std::unordered_set<std::string> base, std::unordered_map<std::string, std::string> exceptions)
      : base_(std::move(base)), exceptions_(std::move(exceptions)) {
    for (const auto& [form, lemma] : exceptions_) {
      if (exceptions_.count(lemma)) {
        throw DataError("lemma exception target '" + lemma + "' is itself an exception key");
      }
    }
  }

  /// `base_path` lists one base form per line; `exceptions_path` is
  /// `form<TAB>lemma`. Either may be empty to skip it.
  static Lemmatizer load(const std::string& base_path, const std::string& exceptions_path) {
    std::unordered_set<std::string> base;
    std::unordered_map<std::string, std::string> exc;
    if (!base_path.empty()) {
      for (const auto& line : read_lines(base_path)) {
        const auto w = trim(line);
        if (!w.empty() && w[0] != '#') base.insert(to_lower(w));
      }
    }
    if (!exceptions_path.empty()) {
      const auto lines = read_lines(exceptions_path);
      for (std::size_t i = 0; i < lines.size(); ++i) {
        if (trim(lines[i]).empty() || lines[i][0] == '#') continue;
        const auto f = split_char(lines[i], '\t');
        if (f.size() != 2 || f[0].empty() || f[1].empty()) {
          throw DataError(exceptions_path + ":" + std::to_string(i + 1) + ": expected 'form<TAB>lemma'");
        }
        exc[to_lower(f[0])] = to_lower(f[1]);
      }
    }
    return Lemmatizer(std::move(base), std::move(exc));
  }

  std::string lemmatize(std::string_view word) const {
    std::string w = to_lower(word);
    if (!is_alpha_word(w)) return w;
    for (int iter = 0; iter < 32; ++iter) {
      if (auto it = exceptions_.find(w); it != exceptions_.end()) {
        w = it->second;
        continue;
      }
      if (base_.count(w)) break;
      auto next = strip_once(w);
      if (!next) break;
      w = std::move(*next);
    }
    return w;
  }

  bool is_base(const std::string& w) const { return base_.count(w) != 0; }

 private:
  static bool has_vowel(std::string_view s) {
    return s.find_first_of("aeiouy") != std::string_view::npos;
  }
  static bool ends_with(std::string_view s, std::string_view suf) {
    return s.size() >= suf.size() && s.substr(s.size() - suf.size()) == suf;
  }
  static std::string undouble(std::string_view stem) {
    const std::size_t n = stem.size();
    if (n >= 3 && stem[n - 1] == stem[n - 2] && std::string_view("aeiouy").find(stem[n - 1]) == std::string_view::npos) {
      return std::string(stem.substr(0, n - 1));
    }
    return {};
  }

  std::string pick(std::initializer_list<std::string> candidates, std::string fallback) const {
    for (const auto& c : candidates) {
      if (!c.empty() && base_.count(c)) return c;
    }
    return fallback;
  }

  // Keep in sync with tools/gen_lexical_data.py.
  std::optional<std::string> strip_once(const std::string& w) const {
    const std::size_t n = w.size();
    const std::string_view v(w);
    if (n >= 5 && ends_with(v, "ies")) {
      return pick({w.substr(0, n - 3) + "y", w.substr(0, n - 1)}, w.substr(0, n - 3) + "y");
    }
    if (n >= 5 && ends_with(v, "ied")) {
      return pick({w.substr(0, n - 3) + "y", w.substr(0, n - 1)}, w.substr(0, n - 3) + "y");
    }
    if (n >= 5 && ends_with(v, "ing") && has_vowel(v.substr(0, n - 3))) {
      const auto stem = w.substr(0, n - 3);
      const auto u = undouble(stem);
      return pick({stem, stem + "e", u}, u.empty() ? stem : u);
    }
    if (n >= 4 && ends_with(v, "ed") && !ends_with(v, "eed") && has_vowel(v.substr(0, n - 2))) {
      const auto stem = w.substr(0, n - 2);
      const auto u = undouble(stem);
      return pick({stem, stem + "e", u}, u.empty() ? stem : u);
    }
    if (n >= 4 && ends_with(v, "es")) {
      const auto stem = w.substr(0, n - 2);
      const bool sibilant = ends_with(stem, "s") || ends_with(stem, "x") || ends_with(stem, "z") ||
                            ends_with(stem, "ch") || ends_with(stem, "sh");
      return pick({stem, w.substr(0, n - 1)}, sibilant ? stem : w.substr(0, n - 1));
    }
    if (n >= 3 && ends_with(v, "s") && !ends_with(v, "ss") && !ends_with(v, "us") && !ends_with(v, "is")) {
      return w.substr(0, n - 1);
    }
    return std::nullopt;
  }

  std::unordered_set<std::string> base_;
  std::unordered_map<std::string, std::string> exceptions_;
};

// ---------------------------------------------------------------------------
// pipeline pieces

/// Replaces every hashtag token by the words it segments into. The new
/// tokens keep the original casing, share the hashtag's span and source,
/// and carry no '#'.
inline std::vector<Token> expand_hashtags(const std::vector<Token>& tokens, const SegmentationDict& dict) {
  std::vector<Token> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    if (t.kind != TokenKind::hashtag) {
      out.push_back(t);
      continue;
    }
    const std::string_view body = std::string_view(t.surface).substr(1);
    std::size_t offset = 0;
    for (const auto& piece : segment_hashtag(t.surface, dict)) {
      Token d;
      d.surface = std::string(body.substr(offset, piece.size()));
      d.lemma = piece;
      d.span = t.span;
      d.kind = TokenKind::hashtag_derived;
      d.source = t.source;
      offset += piece.size();
      out.push_back(std::move(d));
    }
  }
  return out;
}

inline void lemmatize_tokens(std::vector<Token>& tokens, const Lemmatizer& lem) {
  for (auto& t : tokens) t.lemma = lem.lemmatize(t.surface);
}

struct TextResources {
  SegmentationDict segmentation;
  Lemmatizer lemmatizer;
};

/// tokenize -> strip_noise -> expand_hashtags -> lemmatize.
inline std::vector<Token> prepare_tokens(std::string_view text, const TextResources& res) {
  auto tokens = expand_hashtags(strip_noise(tokenize(text)), res.segmentation);
  lemmatize_tokens(tokens, res.lemmatizer);
  return tokens;
}

}  // namespace dtag
