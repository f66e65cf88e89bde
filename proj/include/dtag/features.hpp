#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtag/binary_io.hpp"
#include "dtag/lexicon.hpp"
#include "dtag/nn/tensor.hpp"
#include "dtag/textnorm.hpp"

namespace dtag {

using nn::Mat;
using nn::Parameter;
using nn::ParamList;
using nn::Vec;

// ---------------------------------------------------------------------------
// variants and dimensions

enum class Variant { mtl, mtl_ctx, mtl_ipa_pos, mtl_ctx_ipa_pos };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::mtl: return "mtl";
    case Variant::mtl_ctx: return "mtl_ctx";
    case Variant::mtl_ipa_pos: return "mtl_ipa_pos";
    case Variant::mtl_ctx_ipa_pos: return "mtl_ctx_ipa_pos";
  }
  return "mtl";
}

inline Variant variant_from_string(std::string_view s) {
  for (auto v : {Variant::mtl, Variant::mtl_ctx, Variant::mtl_ipa_pos, Variant::mtl_ctx_ipa_pos}) {
    if (to_string(v) == s) return v;
  }
  throw ConfigError("unknown variant '" + std::string(s) + "' (expected mtl, mtl_ctx, mtl_ipa_pos, mtl_ctx_ipa_pos)");
}

inline bool uses_context(Variant v) { return v == Variant::mtl_ctx || v == Variant::mtl_ctx_ipa_pos; }
inline bool uses_ipa_pos(Variant v) { return v == Variant::mtl_ipa_pos || v == Variant::mtl_ctx_ipa_pos; }

struct FeatureConfig {
  Variant variant = Variant::mtl;
  int d_word = 100;
  int d_pos = 64;
  int d_ipa = 22;
  int n_phon_features = 22;
  int n_filters = 128;
  int kernel = 3;
  int d_ctx = 1024;

  /// The three-word window is used only when no contextual vectors are.
  bool window() const { return !uses_context(variant); }
  int word_block() const { return window() ? 3 * d_word : d_word; }
  int cnn_channels() const { return d_ipa + n_phon_features; }

  /// Per-token input length:
  ///   mtl             3*d_word
  ///   mtl_ctx         d_word + d_ctx
  ///   mtl_ipa_pos     3*d_word + d_pos + n_filters
  ///   mtl_ctx_ipa_pos d_word + d_ctx + d_pos + n_filters
  int input_dim() const {
    int d = word_block();
    if (uses_context(variant)) d += d_ctx;
    if (uses_ipa_pos(variant)) d += d_pos + n_filters;
    return d;
  }

  void validate() const {
    auto pos = [](int v, const char* name) {
      if (v <= 0) throw ConfigError(std::string(name) + " must be positive");
    };
    pos(d_word, "d_word");
    if (uses_context(variant)) pos(d_ctx, "d_ctx");
    if (uses_ipa_pos(variant)) {
      pos(d_pos, "d_pos");
      pos(d_ipa, "d_ipa");
      pos(n_phon_features, "n_phon_features");
      pos(n_filters, "n_filters");
      if (kernel <= 0 || kernel % 2 == 0) throw ConfigError("kernel must be a positive odd integer");
    }
  }

  nlohmann::json to_json() const {
    return {{"variant", std::string(to_string(variant))}, {"d_word", d_word}, {"d_pos", d_pos},
            {"d_ipa", d_ipa}, {"n_phon_features", n_phon_features}, {"n_filters", n_filters},
            {"kernel", kernel}, {"d_ctx", d_ctx}};
  }

  static FeatureConfig from_json(const nlohmann::json& j) {
    FeatureConfig c;
    c.variant = variant_from_string(j.at("variant").get<std::string>());
    c.d_word = j.at("d_word");
    c.d_pos = j.at("d_pos");
    c.d_ipa = j.at("d_ipa");
    c.n_phon_features = j.at("n_phon_features");
    c.n_filters = j.at("n_filters");
    c.kernel = j.at("kernel");
    c.d_ctx = j.at("d_ctx");
    return c;
  }
};

// ---------------------------------------------------------------------------
// word embeddings

/// Pretrained vectors, one column per word plus a final unk column.
struct EmbeddingTable {
  int dim = 0;
  std::vector<std::string> words;
  std::unordered_map<std::string, int> index;
  Eigen::MatrixXf vectors;  // dim x (words.size() + 1)
  bool trainable = true;

  int unk_id() const { return static_cast<int>(words.size()); }
  int id(const std::string& w) const {
    auto it = index.find(w);
    return it == index.end() ? unk_id() : it->second;
  }
  Eigen::VectorXf lookup(const std::string& w) const { return vectors.col(id(w)); }
  Eigen::VectorXf unk_vector() const { return vectors.col(unk_id()); }
};

struct EmbeddingLoad {
  EmbeddingTable table;
  std::vector<std::size_t> rejected_lines;  // 1-based
};

namespace detail {

inline bool parse_float(std::string_view s, float& out) {
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end && std::isfinite(out);
}

}  // namespace detail

/// Text format `word v1 ... v_dim`. Rows with the wrong number of values (or
/// unparsable ones) are skipped and reported; a repeated word keeps its first
/// row. The unk vector is the mean of all loaded rows.
inline EmbeddingLoad load_word_embeddings(const std::string& path, int dim) {
  if (dim <= 0) throw ConfigError("embedding dim must be positive");
  const auto lines = read_lines(path);
  EmbeddingLoad out;
  auto& t = out.table;
  t.dim = dim;
  std::vector<float> data;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto fields = split_ws(lines[i]);
    bool ok = fields.size() == static_cast<std::size_t>(dim) + 1;
    std::vector<float> row(dim);
    for (int k = 0; ok && k < dim; ++k) ok = detail::parse_float(fields[k + 1], row[k]);
    if (!ok) {
      out.rejected_lines.push_back(i + 1);
      continue;
    }
    if (t.index.count(fields[0])) continue;
    t.index.emplace(fields[0], static_cast<int>(t.words.size()));
    t.words.push_back(fields[0]);
    data.insert(data.end(), row.begin(), row.end());
  }
  if (t.words.empty()) {
    if (out.rejected_lines.empty()) throw DataError(path + ": empty embedding file");
    throw DataError(path + ": no row has dimension " + std::to_string(dim) + " (" +
                    std::to_string(out.rejected_lines.size()) + " rejected)");
  }
  const auto n = static_cast<Eigen::Index>(t.words.size());
  t.vectors.resize(dim, n + 1);
  t.vectors.leftCols(n) = Eigen::Map<const Eigen::MatrixXf>(data.data(), dim, n);
  Eigen::VectorXd mean = t.vectors.leftCols(n).cast<double>().rowwise().mean();
  t.vectors.col(n) = mean.cast<float>();
  return out;
}

/// [e(t-1); e(t); e(t+1)] with zero vectors past either end.
template <typename V>
std::vector<V> window_concat(const std::vector<V>& e) {
  std::vector<V> out;
  if (e.empty()) return out;
  const auto d = e[0].size();
  for (std::size_t t = 0; t < e.size(); ++t) {
    V v = V::Zero(3 * d);
    if (t > 0) v.segment(0, d) = e[t - 1];
    v.segment(d, d) = e[t];
    if (t + 1 < e.size()) v.segment(2 * d, d) = e[t + 1];
    out.push_back(std::move(v));
  }
  return out;
}

/// Model vocabulary: known words plus a trailing unk id.
struct WordVocab {
  std::vector<std::string> words;
  std::unordered_map<std::string, int> index;

  WordVocab() = default;
  explicit WordVocab(std::vector<std::string> ws) : words(std::move(ws)) {
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (!index.emplace(words[i], static_cast<int>(i)).second) throw DataError("duplicate vocabulary word '" + words[i] + "'");
    }
  }

  int unk_id() const { return static_cast<int>(words.size()); }
  int size() const { return static_cast<int>(words.size()) + 1; }
  int id(const std::string& w) const {
    auto it = index.find(w);
    return it == index.end() ? unk_id() : it->second;
  }
};

/// Lookup key for a token in word tables.
inline std::string word_key(const Token& t) { return to_lower(t.surface); }

/// Words seen at least `min_count` times, ordered by first occurrence.
inline WordVocab build_vocab(const std::vector<LabeledSequence>& seqs, int min_count = 1) {
  std::unordered_map<std::string, int> counts;
  std::vector<std::string> order;
  for (const auto& s : seqs) {
    for (const auto& t : s.tokens) {
      const auto k = word_key(t);
      if (counts[k]++ == 0) order.push_back(k);
    }
  }
  std::vector<std::string> kept;
  for (const auto& w : order) {
    if (counts[w] >= min_count) kept.push_back(w);
  }
  return WordVocab(std::move(kept));
}

// ---------------------------------------------------------------------------
// phonemes and grapheme-to-phoneme rules

/// Phoneme symbols with fixed ternary articulatory feature vectors.
struct PhonemeInventory {
  std::vector<std::string> phonemes;
  std::unordered_map<std::string, int> index;
  Eigen::MatrixXd features;  // n_features x phonemes.size(), values in {-1,0,1}

  int size() const { return static_cast<int>(phonemes.size()); }
  int n_features() const { return static_cast<int>(features.rows()); }
  int id(const std::string& p) const {
    auto it = index.find(p);
    if (it == index.end()) throw DataError("unknown phoneme '" + p + "'");
    return it->second;
  }
  bool contains(const std::string& p) const { return index.count(p) > 0; }

  static PhonemeInventory from_rows(const std::vector<std::pair<std::string, std::vector<int>>>& rows) {
    PhonemeInventory inv;
    if (rows.empty()) throw DataError("empty phoneme inventory");
    const auto nf = rows[0].second.size();
    inv.features.resize(static_cast<Eigen::Index>(nf), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const auto& [p, f] = rows[j];
      if (f.size() != nf) throw DataError("phoneme '" + p + "' has " + std::to_string(f.size()) + " features, expected " + std::to_string(nf));
      if (!inv.index.emplace(p, static_cast<int>(j)).second) throw DataError("duplicate phoneme '" + p + "'");
      inv.phonemes.push_back(p);
      for (std::size_t k = 0; k < nf; ++k) {
        if (f[k] < -1 || f[k] > 1) throw DataError("phoneme '" + p + "': feature values must be -1, 0 or 1");
        inv.features(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = f[k];
      }
    }
    return inv;
  }

  /// TSV `phoneme<TAB>f1 ... fn`; '#' lines are comments.
  static PhonemeInventory load(const std::string& path) {
    std::vector<std::pair<std::string, std::vector<int>>> rows;
    const auto lines = read_lines(path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const auto line = trim(lines[i]);
      if (line.empty() || line[0] == '#') continue;
      const auto tab = split_char(lines[i], '\t');
      if (tab.size() != 2) throw DataError(path + ":" + std::to_string(i + 1) + ": expected phoneme<TAB>features");
      std::vector<int> f;
      for (const auto& v : split_ws(tab[1])) {
        int x = 0;
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
        if (ec != std::errc() || p != v.data() + v.size()) throw DataError(path + ":" + std::to_string(i + 1) + ": bad feature value '" + v + "'");
        f.push_back(x);
      }
      rows.emplace_back(std::string(trim(tab[0])), std::move(f));
    }
    try {
      return from_rows(rows);
    } catch (const DataError& e) {
      throw DataError(path + ": " + e.what());
    }
  }
};

struct G2PRule {
  std::string left;   // context before the focus
  std::string focus;  // letters consumed
  std::string right;  // context after the focus
  std::vector<std::string> phonemes;  // empty: silent
};

/// Ordered rewrite rules plus whole-word exceptions. Context symbols: '#'
/// word boundary, 'V' vowel letter, 'C' consonant letter; anything else is a
/// literal letter.
class G2PRules {
 public:
  G2PRules() = default;

  /// Rules are ordered by total pattern length, longest first; equal
  /// lengths keep the given order.
  G2PRules(std::vector<G2PRule> rules, std::map<std::string, std::vector<std::string>> exceptions)
      : rules_(std::move(rules)), exceptions_(std::move(exceptions)) {
    std::stable_sort(rules_.begin(), rules_.end(), [](const G2PRule& a, const G2PRule& b) {
      return a.left.size() + a.focus.size() + a.right.size() > b.left.size() + b.focus.size() + b.right.size();
    });
    for (char c = 'a'; c <= 'z'; ++c) {
      for (const auto& r : rules_) {
        if (r.focus.size() == 1 && r.focus[0] == c && r.left.empty() && r.right.empty() && !r.phonemes.empty()) {
          letter_[c - 'a'] = &r;
          break;
        }
      }
    }
  }

  /// Parses `left(focus)right` or a bare focus.
  static G2PRule parse_rule(std::string_view pattern, std::string_view phonemes) {
    G2PRule r;
    const auto open = pattern.find('('), close = pattern.find(')');
    if (open == std::string_view::npos && close == std::string_view::npos) {
      r.focus = std::string(pattern);
    } else if (open != std::string_view::npos && close != std::string_view::npos && open < close) {
      r.left = std::string(pattern.substr(0, open));
      r.focus = std::string(pattern.substr(open + 1, close - open - 1));
      r.right = std::string(pattern.substr(close + 1));
    } else {
      throw DataError("malformed G2P pattern '" + std::string(pattern) + "'");
    }
    if (r.focus.empty() || !is_alpha_word(r.focus)) throw DataError("G2P focus must be letters: '" + std::string(pattern) + "'");
    r.focus = to_lower(r.focus);
    if (trim(phonemes) != "-") r.phonemes = split_ws(phonemes);
    return r;
  }

  static G2PRules load(const std::string& rules_path, const std::string& exceptions_path,
                       const PhonemeInventory* inventory = nullptr) {
    std::vector<G2PRule> rules;
    auto check = [&](const std::vector<std::string>& ps, const std::string& where) {
      if (!inventory) return;
      for (const auto& p : ps) {
        if (!inventory->contains(p)) throw DataError(where + ": phoneme '" + p + "' not in inventory");
      }
    };
    const auto lines = read_lines(rules_path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const auto line = trim(lines[i]);
      if (line.empty() || (line[0] == '#' && line.find('\t') == std::string_view::npos)) continue;
      const auto where = rules_path + ":" + std::to_string(i + 1);
      const auto cols = split_char(line, '\t');
      if (cols.size() != 2) throw DataError(where + ": expected pattern<TAB>phonemes");
      try {
        rules.push_back(parse_rule(cols[0], cols[1]));
      } catch (const DataError& e) {
        throw DataError(where + ": " + e.what());
      }
      check(rules.back().phonemes, where);
    }
    std::map<std::string, std::vector<std::string>> exc;
    if (!exceptions_path.empty()) {
      const auto el = read_lines(exceptions_path);
      for (std::size_t i = 0; i < el.size(); ++i) {
        const auto line = trim(el[i]);
        if (line.empty() || line[0] == '#') continue;
        const auto where = exceptions_path + ":" + std::to_string(i + 1);
        const auto cols = split_char(line, '\t');
        if (cols.size() != 2) throw DataError(where + ": expected word<TAB>phonemes");
        auto ps = split_ws(cols[1]);
        if (ps.empty()) throw DataError(where + ": empty phoneme sequence");
        check(ps, where);
        exc[to_lower(cols[0])] = std::move(ps);
      }
    }
    return G2PRules(std::move(rules), std::move(exc));
  }

  const std::vector<G2PRule>& rules() const { return rules_; }
  const std::map<std::string, std::vector<std::string>>& exceptions() const { return exceptions_; }

  std::vector<std::string> convert(std::string_view word) const {
    std::string w;
    for (char c : word) {
      if (is_ascii_alpha(c)) w.push_back(static_cast<char>(c | 0x20));
    }
    if (w.empty()) return {};
    if (auto it = exceptions_.find(w); it != exceptions_.end()) return it->second;
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < w.size()) {
      const G2PRule* hit = nullptr;
      for (const auto& r : rules_) {
        if (matches(r, w, i)) {
          hit = &r;
          break;
        }
      }
      if (!hit) hit = letter_[w[i] - 'a'];
      if (!hit) {
        ++i;
        continue;
      }
      out.insert(out.end(), hit->phonemes.begin(), hit->phonemes.end());
      i += hit->focus.size();
    }
    if (out.empty()) {
      for (char c : w) {
        if (const auto* r = letter_[c - 'a']) out.insert(out.end(), r->phonemes.begin(), r->phonemes.end());
      }
    }
    return out;
  }

 private:
  static bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

  // Does context symbol `p` accept the letter at `pos` of `w` (pos may be
  // -1 or w.size() for the boundaries)?
  static bool accepts(char p, const std::string& w, long pos) {
    const bool inside = pos >= 0 && pos < static_cast<long>(w.size());
    if (p == '#') return !inside;
    if (!inside) return false;
    const char c = w[static_cast<std::size_t>(pos)];
    if (p == 'V') return is_vowel(c);
    if (p == 'C') return !is_vowel(c);
    return c == static_cast<char>(p | 0x20);
  }

  static bool matches(const G2PRule& r, const std::string& w, std::size_t i) {
    if (w.compare(i, r.focus.size(), r.focus) != 0) return false;
    long pos = static_cast<long>(i) - 1;
    for (auto it = r.left.rbegin(); it != r.left.rend(); ++it, --pos) {
      if (!accepts(*it, w, pos)) return false;
      if (*it == '#') break;
    }
    pos = static_cast<long>(i + r.focus.size());
    for (char p : r.right) {
      if (!accepts(p, w, pos)) return false;
      if (p == '#') break;
      ++pos;
    }
    return true;
  }

  std::vector<G2PRule> rules_;
  std::map<std::string, std::vector<std::string>> exceptions_;
  std::array<const G2PRule*, 26> letter_{};
};

inline std::vector<std::string> grapheme_to_phoneme(std::string_view word, const G2PRules& rules) {
  return rules.convert(word);
}

// ---------------------------------------------------------------------------
// character CNN over phonemes

/// Per-phoneme input columns [ipa embedding; phonological features], padded
/// with zero columns to at least `kernel` positions.
template <typename S>
Mat<S> phoneme_input(const std::vector<int>& ids, const Mat<S>& ipa_embedding, const Mat<S>& features, int kernel) {
  const auto d_ipa = ipa_embedding.rows(), nf = features.rows();
  const auto len = std::max<Eigen::Index>(static_cast<Eigen::Index>(ids.size()), kernel);
  Mat<S> x = Mat<S>::Zero(d_ipa + nf, len);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    x.block(0, t, d_ipa, 1) = ipa_embedding.col(ids[t]);
    x.block(d_ipa, t, nf, 1) = features.col(ids[t]);
  }
  return x;
}

/// Same-padded convolution as a matrix: column t stacks the input columns
/// t-k/2 .. t+k/2 (zeros outside).
template <typename S>
Mat<S> im2col(const Mat<S>& x, int kernel) {
  const auto c = x.rows(), len = x.cols();
  const int half = kernel / 2;
  Mat<S> p = Mat<S>::Zero(c * kernel, len);
  for (Eigen::Index t = 0; t < len; ++t) {
    for (int k = 0; k < kernel; ++k) {
      const auto src = t + k - half;
      if (src >= 0 && src < len) p.block(k * c, t, c, 1) = x.col(src);
    }
  }
  return p;
}

/// Convolution, ReLU and global max pool. `weights` is filters x (kernel*C)
/// with column k*C + c for offset k - kernel/2 and channel c. `argmax`
/// receives the winning position per filter, or -1 when the filter's
/// activation is zero everywhere.
template <typename S>
Vec<S> cnn_max_pool(const Mat<S>& cols, const Mat<S>& weights, const Mat<S>& bias, std::vector<int>* argmax = nullptr) {
  Mat<S> z = weights * cols;
  z.colwise() += bias.col(0);
  const auto nf = weights.rows();
  Vec<S> out = Vec<S>::Zero(nf);
  if (argmax) argmax->assign(static_cast<std::size_t>(nf), -1);
  for (Eigen::Index f = 0; f < nf; ++f) {
    Eigen::Index best = 0;
    const S mx = z.row(f).maxCoeff(&best);
    if (mx > S(0)) {
      out(f) = mx;
      if (argmax) (*argmax)[f] = static_cast<int>(best);
    }
  }
  return out;
}

template <typename S>
struct CharCnnParams {
  Mat<S> ipa_embedding;  // d_ipa x n_phonemes
  Mat<S> weights;        // n_filters x (kernel * (d_ipa + n_features))
  Mat<S> bias;           // n_filters x 1
  int kernel = 3;
};

/// Phonetic encoding of one word: G2P, per-phoneme embedding+features,
/// convolution, ReLU, max over positions.
template <typename S>
Vec<S> encode_phonetics(std::string_view word, const PhonemeInventory& inventory, const G2PRules& rules,
                        const CharCnnParams<S>& p) {
  std::vector<int> ids;
  for (const auto& ph : rules.convert(word)) ids.push_back(inventory.id(ph));
  const Mat<S> feats = inventory.features.cast<S>();
  return cnn_max_pool<S>(im2col<S>(phoneme_input<S>(ids, p.ipa_embedding, feats, p.kernel), p.kernel), p.weights, p.bias);
}

// ---------------------------------------------------------------------------
// POS tags

/// The 25-tag Twitter part-of-speech tagset.
inline constexpr std::array<std::string_view, 25> kPosTags = {"N", "O", "^", "S", "Z", "V", "A", "R", "!",
                                                              "D", "P", "&", "T", "X", "#", "@", "~", "U",
                                                              "E", "$", ",", "G", "L", "M", "Y"};

inline int pos_index(std::string_view tag) {
  for (std::size_t i = 0; i < kPosTags.size(); ++i) {
    if (kPosTags[i] == tag) return static_cast<int>(i);
  }
  throw DataError("unknown POS tag '" + std::string(tag) + "'");
}

/// Coarse tagger used when a tweet carries no POS tags: token kind first,
/// then a word list, then capitalization.
class FallbackPosTagger {
 public:
  FallbackPosTagger() = default;
  explicit FallbackPosTagger(std::unordered_map<std::string, std::string> lexicon) : lexicon_(std::move(lexicon)) {
    for (const auto& [w, t] : lexicon_) pos_index(t);
  }

  static FallbackPosTagger load(const std::string& path) {
    std::unordered_map<std::string, std::string> lex;
    const auto lines = read_lines(path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const auto line = trim(lines[i]);
      if (line.empty() || line[0] == '#') continue;
      const auto cols = split_char(line, '\t');
      if (cols.size() != 2) throw DataError(path + ":" + std::to_string(i + 1) + ": expected word<TAB>tag");
      lex.emplace(to_lower(cols[0]), std::string(trim(cols[1])));
    }
    try {
      return FallbackPosTagger(std::move(lex));
    } catch (const DataError& e) {
      throw DataError(path + ": " + e.what());
    }
  }

  std::string tag(const Token& t) const {
    switch (t.kind) {
      case TokenKind::hashtag:
      case TokenKind::hashtag_derived: return "^";
      case TokenKind::mention: return "@";
      case TokenKind::url: return "U";
      case TokenKind::number: return "$";
      case TokenKind::punct: return ",";
      case TokenKind::word: break;
    }
    if (auto it = lexicon_.find(to_lower(t.surface)); it != lexicon_.end()) return it->second;
    if (!t.surface.empty() && t.surface[0] >= 'A' && t.surface[0] <= 'Z') return "^";
    return "N";
  }

 private:
  std::unordered_map<std::string, std::string> lexicon_;
};

// ---------------------------------------------------------------------------
// contextual vectors

/// Precomputed per-token vectors keyed by tweet id. Each record is a
/// dim x n_tokens matrix (column = token).
class ContextVectors {
 public:
  static constexpr std::string_view kMagic = "DTAGCTX1";

  ContextVectors() = default;
  explicit ContextVectors(int dim) : dim_(dim) {
    if (dim <= 0) throw DataError("contextual vector dim must be positive");
  }

  int dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }

  void add(const std::string& id, Eigen::MatrixXf vectors) {
    if (vectors.rows() != dim_) throw DataError("contextual vectors for '" + id + "' have dim " + std::to_string(vectors.rows()) + ", expected " + std::to_string(dim_));
    if (!index_.emplace(id, ids_.size()).second) throw DataError("duplicate contextual vector id '" + id + "'");
    ids_.push_back(id);
    data_.push_back(std::move(vectors));
  }

  const Eigen::MatrixXf* find(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &data_[it->second];
  }

  const Eigen::MatrixXf& at(const std::string& id) const {
    if (const auto* m = find(id)) return *m;
    throw DataError("no contextual vectors for tweet id '" + id + "'");
  }

  std::string to_binary() const {
    ByteWriter w;
    w.bytes(kMagic);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(dim_));
    w.put<std::uint64_t>(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      w.put<std::uint32_t>(static_cast<std::uint32_t>(ids_[i].size()));
      w.bytes(ids_[i]);
      w.put<std::uint32_t>(static_cast<std::uint32_t>(data_[i].cols()));
      for (Eigen::Index k = 0; k < data_[i].size(); ++k) w.put<float>(data_[i].data()[k]);
    }
    return w.take();
  }

  static ContextVectors from_binary(std::string_view bytes, const std::string& what = "contextual vectors") {
    ByteReader r(bytes, what);
    if (r.bytes(kMagic.size()) != kMagic) throw DataError(what + ": bad magic");
    ContextVectors cv(static_cast<int>(r.get<std::uint32_t>()));
    const auto n = r.get<std::uint64_t>();
    for (std::uint64_t i = 0; i < n; ++i) {
      const auto id_len = r.get<std::uint32_t>();
      std::string id(r.bytes(id_len));
      const auto t = r.get<std::uint32_t>();
      Eigen::MatrixXf m(cv.dim_, t);
      for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = r.get<float>();
      cv.add(id, std::move(m));
    }
    if (r.remaining() != 0) throw DataError(what + ": trailing bytes");
    return cv;
  }

  /// JSONL: a header `{"dim": d}` then `{"id": ..., "vectors": [[...], ...]}`.
  std::string to_jsonl() const {
    std::string out = nlohmann::json{{"dim", dim_}}.dump() + "\n";
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      nlohmann::json vecs = nlohmann::json::array();
      for (Eigen::Index t = 0; t < data_[i].cols(); ++t) {
        std::vector<float> v(data_[i].col(t).data(), data_[i].col(t).data() + dim_);
        vecs.push_back(v);
      }
      out += nlohmann::json{{"id", ids_[i]}, {"vectors", vecs}}.dump() + "\n";
    }
    return out;
  }

  static ContextVectors from_jsonl(std::string_view text, const std::string& what = "contextual vectors") {
    std::optional<ContextVectors> cv;
    std::size_t line_no = 0, pos = 0;
    while (pos < text.size()) {
      auto nl = text.find('\n', pos);
      if (nl == std::string_view::npos) nl = text.size();
      const auto line = trim(text.substr(pos, nl - pos));
      pos = nl + 1;
      ++line_no;
      if (line.empty()) continue;
      const auto where = what + ":" + std::to_string(line_no);
      try {
        const auto j = nlohmann::json::parse(line);
        if (!cv) {
          cv.emplace(j.at("dim").get<int>());
          continue;
        }
        const auto& vecs = j.at("vectors");
        Eigen::MatrixXf m(cv->dim_, static_cast<Eigen::Index>(vecs.size()));
        for (std::size_t t = 0; t < vecs.size(); ++t) {
          if (vecs[t].size() != static_cast<std::size_t>(cv->dim_)) throw DataError("vector of wrong dim");
          for (int k = 0; k < cv->dim_; ++k) m(k, static_cast<Eigen::Index>(t)) = vecs[t][k].get<float>();
        }
        const auto& id = j.at("id");
        cv->add(id.is_string() ? id.get<std::string>() : id.dump(), std::move(m));
      } catch (const nlohmann::json::exception& e) {
        throw DataError(where + ": " + e.what());
      } catch (const DataError& e) {
        throw DataError(where + ": " + e.what());
      }
    }
    if (!cv) throw DataError(what + ": missing header line");
    return std::move(*cv);
  }

  /// Format chosen by content: binary if the magic matches, else JSONL.
  static ContextVectors load(const std::string& path) {
    const auto bytes = read_file(path);
    if (bytes.compare(0, kMagic.size(), kMagic) == 0) return from_binary(bytes, path);
    return from_jsonl(bytes, path);
  }

  void save(const std::string& path, bool binary = true) const { write_file(path, binary ? to_binary() : to_jsonl()); }

 private:
  int dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<Eigen::MatrixXf> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// sequence indexing and encoding

/// Integer view of one sequence, ready for the encoder.
struct SequenceInput {
  std::vector<int> word_ids;
  std::vector<int> pos_ids;                // *_ipa_pos variants
  std::vector<std::vector<int>> phonemes;  // *_ipa_pos variants
  Eigen::MatrixXf context;                 // d_ctx x T, *_ctx variants

  std::size_t size() const { return word_ids.size(); }
};

/// Lookup resources for indexing. Pointers may be null when the variant
/// does not need them.
struct FeatureResources {
  const WordVocab* vocab = nullptr;
  const FallbackPosTagger* pos_tagger = nullptr;
  const PhonemeInventory* inventory = nullptr;
  const G2PRules* g2p = nullptr;
  const ContextVectors* context = nullptr;
};

inline SequenceInput index_sequence(const LabeledSequence& seq, const FeatureConfig& cfg, const FeatureResources& res) {
  if (!res.vocab) throw ConfigError("word vocabulary required");
  SequenceInput in;
  for (const auto& t : seq.tokens) in.word_ids.push_back(res.vocab->id(word_key(t)));
  if (uses_ipa_pos(cfg.variant)) {
    if (!seq.pos && !res.pos_tagger) throw DataError(seq.id + ": no POS tags and no fallback POS lexicon for variant " + std::string(to_string(cfg.variant)));
    if (!res.inventory || !res.g2p) throw ConfigError("phoneme inventory and G2P rules required for variant " + std::string(to_string(cfg.variant)));
    for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
      in.pos_ids.push_back(pos_index(seq.pos ? (*seq.pos)[i] : res.pos_tagger->tag(seq.tokens[i])));
      std::vector<int> ids;
      for (const auto& p : res.g2p->convert(seq.tokens[i].surface)) ids.push_back(res.inventory->id(p));
      in.phonemes.push_back(std::move(ids));
    }
  }
  if (uses_context(cfg.variant)) {
    if (!res.context) throw ConfigError("contextual vectors required for variant " + std::string(to_string(cfg.variant)));
    if (res.context->dim() != cfg.d_ctx) throw DataError("contextual vector dim " + std::to_string(res.context->dim()) + " does not match d_ctx " + std::to_string(cfg.d_ctx));
    const auto& m = res.context->at(seq.id);
    if (static_cast<std::size_t>(m.cols()) != seq.tokens.size()) {
      throw DataError(seq.id + ": " + std::to_string(m.cols()) + " contextual vectors for " + std::to_string(seq.tokens.size()) + " tokens");
    }
    in.context = m;
  }
  return in;
}

template <typename S>
struct FeatureBundle {
  Variant variant = Variant::mtl;
  Mat<S> vectors;  // input_dim x T
};

/// Learnable input tables (word, POS, IPA embeddings and the char CNN) and
/// the frozen phonological features. Produces per-token input columns laid
/// out as [word window or word | context | POS | CNN].
template <typename S>
class FeatureEncoder {
 public:
  struct TokenCache {
    Mat<S> cols;  // im2col of the padded phoneme input
    std::vector<int> argmax;
  };
  struct Cache {
    std::vector<TokenCache> tokens;
  };

  FeatureEncoder() = default;
  FeatureEncoder(const FeatureConfig& cfg, int vocab_size, const Eigen::MatrixXd& phon_features)
      : word_emb("word_embedding", cfg.d_word, vocab_size), cfg_(cfg) {
    cfg_.validate();
    if (uses_ipa_pos(cfg_.variant)) {
      if (phon_features.rows() != cfg_.n_phon_features) {
        throw ConfigError("phoneme inventory has " + std::to_string(phon_features.rows()) + " features, config expects " + std::to_string(cfg_.n_phon_features));
      }
      phon_features_ = phon_features.cast<S>();
      pos_emb = Parameter<S>("pos_embedding", cfg_.d_pos, static_cast<Eigen::Index>(kPosTags.size()));
      ipa_emb = Parameter<S>("ipa_embedding", cfg_.d_ipa, phon_features.cols());
      cnn_w = Parameter<S>("cnn_weight", cfg_.n_filters, cfg_.kernel * cfg_.cnn_channels());
      cnn_b = Parameter<S>("cnn_bias", cfg_.n_filters, 1);
    }
  }

  const FeatureConfig& config() const { return cfg_; }
  int input_dim() const { return cfg_.input_dim(); }

  /// Embeddings: uniform +-sqrt(3/d) (unit variance per row). CNN weights:
  /// uniform +-1/sqrt(fan_in), zero bias.
  void init(Rng& rng) {
    nn::fill_uniform(word_emb.value, rng, std::sqrt(3.0 / cfg_.d_word));
    if (uses_ipa_pos(cfg_.variant)) {
      nn::fill_uniform(pos_emb.value, rng, std::sqrt(3.0 / cfg_.d_pos));
      nn::fill_uniform(ipa_emb.value, rng, std::sqrt(3.0 / cfg_.d_ipa));
      nn::fill_uniform(cnn_w.value, rng, 1.0 / std::sqrt(static_cast<double>(cnn_w.value.cols())));
      cnn_b.value.setZero();
    }
  }

  /// Copies pretrained rows for vocabulary words the table knows; others
  /// take the table's unk vector.
  void load_pretrained(const EmbeddingTable& table, const WordVocab& vocab) {
    if (table.dim != cfg_.d_word) throw ConfigError("embedding dim " + std::to_string(table.dim) + " != d_word " + std::to_string(cfg_.d_word));
    for (int i = 0; i < vocab.size(); ++i) {
      const auto col = i == vocab.unk_id() ? table.unk_id() : table.id(vocab.words[i]);
      word_emb.value.col(i) = table.vectors.col(col).template cast<S>();
    }
  }

  ParamList<S> parameters() {
    ParamList<S> out{&word_emb};
    if (uses_ipa_pos(cfg_.variant)) {
      out.push_back(&pos_emb);
      out.push_back(&ipa_emb);
      out.push_back(&cnn_w);
      out.push_back(&cnn_b);
    }
    return out;
  }

  const Mat<S>& phon_features() const { return phon_features_; }

  Mat<S> forward(const SequenceInput& in, Cache* cache = nullptr) const {
    const auto n = static_cast<Eigen::Index>(in.size());
    const int d = cfg_.d_word;
    Mat<S> x = Mat<S>::Zero(input_dim(), n);
    for (Eigen::Index t = 0; t < n; ++t) {
      const int id = in.word_ids[t];
      if (id < 0 || id >= word_emb.value.cols()) throw DataError("word id out of range");
      if (cfg_.window()) {
        x.block(d, t, d, 1) = word_emb.value.col(id);
        if (t > 0) x.block(2 * d, t - 1, d, 1) = word_emb.value.col(id);
        if (t + 1 < n) x.block(0, t + 1, d, 1) = word_emb.value.col(id);
      } else {
        x.block(0, t, d, 1) = word_emb.value.col(id);
      }
    }
    Eigen::Index row = cfg_.word_block();
    if (uses_context(cfg_.variant)) {
      if (in.context.rows() != cfg_.d_ctx || in.context.cols() != n) throw DataError("contextual vectors do not match the sequence");
      x.block(row, 0, cfg_.d_ctx, n) = in.context.cast<S>();
      row += cfg_.d_ctx;
    }
    if (uses_ipa_pos(cfg_.variant)) {
      if (in.pos_ids.size() != in.size() || in.phonemes.size() != in.size()) throw DataError("POS/phoneme input missing");
      if (cache) cache->tokens.assign(in.size(), {});
      for (Eigen::Index t = 0; t < n; ++t) {
        x.block(row, t, cfg_.d_pos, 1) = pos_emb.value.col(in.pos_ids[t]);
        Mat<S> cols = im2col<S>(phoneme_input<S>(in.phonemes[t], ipa_emb.value, phon_features_, cfg_.kernel), cfg_.kernel);
        std::vector<int> am;
        x.block(row + cfg_.d_pos, t, cfg_.n_filters, 1) = cnn_max_pool<S>(cols, cnn_w.value, cnn_b.value, &am);
        if (cache) cache->tokens[t] = {std::move(cols), std::move(am)};
      }
      row += cfg_.d_pos + cfg_.n_filters;
    }
    if (row != input_dim() || x.rows() != input_dim()) throw std::logic_error("feature dimension formula violated");
    return x;
  }

  /// Accumulates gradients of the trainable tables given dL/dx.
  void backward(const SequenceInput& in, const Cache& cache, const Mat<S>& dx) {
    const auto n = static_cast<Eigen::Index>(in.size());
    const int d = cfg_.d_word;
    for (Eigen::Index t = 0; t < n; ++t) {
      const int id = in.word_ids[t];
      if (cfg_.window()) {
        word_emb.grad.col(id) += dx.block(d, t, d, 1);
        if (t > 0) word_emb.grad.col(id) += dx.block(2 * d, t - 1, d, 1);
        if (t + 1 < n) word_emb.grad.col(id) += dx.block(0, t + 1, d, 1);
      } else {
        word_emb.grad.col(id) += dx.block(0, t, d, 1);
      }
    }
    if (!uses_ipa_pos(cfg_.variant)) return;
    Eigen::Index row = cfg_.word_block() + (uses_context(cfg_.variant) ? cfg_.d_ctx : 0);
    const auto c = cfg_.cnn_channels();
    const int half = cfg_.kernel / 2;
    for (Eigen::Index t = 0; t < n; ++t) {
      pos_emb.grad.col(in.pos_ids[t]) += dx.block(row, t, cfg_.d_pos, 1);
      const auto& tc = cache.tokens[t];
      const auto len = tc.cols.cols();
      Mat<S> dz = Mat<S>::Zero(cfg_.n_filters, len);
      for (int f = 0; f < cfg_.n_filters; ++f) {
        if (tc.argmax[f] >= 0) dz(f, tc.argmax[f]) = dx(row + cfg_.d_pos + f, t);
      }
      cnn_w.grad.noalias() += dz * tc.cols.transpose();
      cnn_b.grad.col(0) += dz.rowwise().sum();
      const Mat<S> dcols = cnn_w.value.transpose() * dz;
      const auto& ids = in.phonemes[t];
      for (Eigen::Index p = 0; p < len; ++p) {
        for (int k = 0; k < cfg_.kernel; ++k) {
          const auto src = p + k - half;
          if (src < 0 || src >= static_cast<Eigen::Index>(ids.size())) continue;
          ipa_emb.grad.col(ids[src]) += dcols.block(k * c, p, cfg_.d_ipa, 1);
        }
      }
    }
  }

  Parameter<S> word_emb;
  Parameter<S> pos_emb;
  Parameter<S> ipa_emb;
  Parameter<S> cnn_w;
  Parameter<S> cnn_b;

 private:
  FeatureConfig cfg_;
  Mat<S> phon_features_;
};

template <typename S>
FeatureBundle<S> encode_sequence(const SequenceInput& in, const FeatureEncoder<S>& encoder) {
  return {encoder.config().variant, encoder.forward(in)};
}

}  // namespace dtag
