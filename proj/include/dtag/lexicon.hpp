#pragma once

#include <algorithm>
#include <ostream>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtag/corpus.hpp"
#include "dtag/phrase_automaton.hpp"
#include "dtag/tags.hpp"
#include "dtag/textnorm.hpp"

namespace dtag {

struct LexiconMatch {
  TokenRange range;
  std::string phrase;
};

/// Lemmatized unigram and bigram phrases with an Aho-Corasick index over
/// lemma sequences.
class Lexicon {
 public:
  Lexicon() { automaton_.build(); }

  /// `phrases` must already be lemmatized; duplicates collapse.
  explicit Lexicon(const std::vector<std::string>& phrases) {
    for (const auto& p : phrases) {
      const auto words = split_ws(p);
      if (words.empty()) continue;
      if (words.size() > 2) throw DataError("lexicon phrase has more than two words: '" + p + "'");
      phrases_.insert(join(words, " "));
    }
    for (const auto& p : phrases_) {
      std::vector<int> seq;
      for (const auto& w : split_ws(p)) seq.push_back(intern(w));
      automaton_.add(seq);
      pattern_phrase_.push_back(p);
    }
    automaton_.build();
  }

  const std::set<std::string>& phrases() const { return phrases_; }
  std::size_t size() const { return phrases_.size(); }

  /// Every unigram/bigram occurrence over token lemmas, overlaps included,
  /// sorted by start then length.
  std::vector<LexiconMatch> match(const std::vector<Token>& tokens) const {
    std::vector<int> seq;
    seq.reserve(tokens.size());
    for (const auto& t : tokens) {
      auto it = symbols_.find(t.lemma);
      seq.push_back(it == symbols_.end() ? -1 : it->second);
    }
    std::vector<LexiconMatch> out;
    for (const auto& m : automaton_.scan(seq)) out.push_back({{m.begin, m.end}, pattern_phrase_[m.pattern]});
    std::sort(out.begin(), out.end(), [](const LexiconMatch& a, const LexiconMatch& b) { return a.range < b.range; });
    return out;
  }

  /// True when the automaton indexes exactly the phrase set.
  bool verify_index() const {
    std::vector<std::string> names(symbols_.size());
    for (const auto& [w, id] : symbols_) names[id] = w;
    std::set<std::string> indexed;
    for (const auto& pat : automaton_.patterns()) {
      std::vector<std::string> words;
      for (int s : pat) words.push_back(names[s]);
      indexed.insert(join(words, " "));
    }
    return indexed == phrases_ && automaton_.size() == phrases_.size();
  }

 private:
  int intern(const std::string& w) {
    auto [it, inserted] = symbols_.emplace(w, static_cast<int>(symbols_.size()));
    return it->second;
  }

  std::set<std::string> phrases_;
  std::unordered_map<std::string, int> symbols_;
  PhraseAutomaton<int> automaton_;
  std::vector<std::string> pattern_phrase_;
};

struct LexiconLoad {
  Lexicon lexicon;
  std::size_t lines_read = 0;  // non-comment, non-empty lines
  std::size_t duplicates = 0;  // lines that collapsed onto an earlier phrase
};

/// One phrase per line; lines starting with '#' are comments. Phrases are
/// lemmatized word by word on load.
inline LexiconLoad load_lexicon(const std::string& path, const Lemmatizer& lemmatizer) {
  const auto lines = read_lines(path);
  std::vector<std::string> phrases;
  std::set<std::string> seen;
  LexiconLoad out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = trim(lines[i]);
    if (line.empty() || line[0] == '#') continue;
    const auto words = split_ws(line);
    if (words.size() > 2) {
      throw DataError(path + ":" + std::to_string(i + 1) + ": phrase '" + std::string(line) + "' has " +
                      std::to_string(words.size()) + " words (max 2)");
    }
    std::vector<std::string> lemmas;
    for (const auto& w : words) lemmas.push_back(lemmatizer.lemmatize(w));
    auto phrase = join(lemmas, " ");
    ++out.lines_read;
    if (!seen.insert(phrase).second) ++out.duplicates;
    phrases.push_back(std::move(phrase));
  }
  out.lexicon = Lexicon(phrases);
  return out;
}

inline std::vector<LexiconMatch> match_lexicon(const std::vector<Token>& tokens, const Lexicon& lex) {
  return lex.match(tokens);
}

/// Unions matches whose token ranges overlap into maximal spans. Spans
/// longer than two tokens (only reachable by chaining) are marked chained.
inline std::vector<GoldSpan> chain_matches(std::vector<LexiconMatch> matches) {
  std::sort(matches.begin(), matches.end(), [](const auto& a, const auto& b) { return a.range < b.range; });
  std::vector<GoldSpan> out;
  for (const auto& m : matches) {
    if (!out.empty() && m.range.begin < out.back().range.end) {
      out.back().range.end = std::max(out.back().range.end, m.range.end);
    } else {
      out.push_back({m.range, SpanSource::lexicon, {}});
    }
  }
  for (auto& s : out) {
    if (s.range.size() >= 3) s.source = SpanSource::chained;
  }
  return out;
}

/// Text a span covers: the original text slice when `text` is given, else
/// the token surfaces joined by spaces.
inline std::string span_surface(const std::vector<Token>& tokens, TokenRange r, std::string_view text) {
  if (r.begin >= r.end || r.end > tokens.size()) return {};
  if (!text.empty()) {
    const auto b = tokens[r.begin].span.begin, e = tokens[r.end - 1].span.end;
    if (b < e && e <= text.size()) return std::string(text.substr(b, e - b));
  }
  std::vector<std::string> parts;
  for (auto i = r.begin; i < r.end; ++i) parts.push_back(tokens[i].surface);
  return join(parts, " ");
}

/// Adds one span per occurrence of each user hashtag (over its
/// hashtag-derived tokens). Where a new span overlaps existing ones the union
/// replaces them. Hashtags not present in the tokens are skipped and noted in
/// `warnings`.
inline std::vector<GoldSpan> merge_user_hashtags(const std::vector<Token>& tokens, std::vector<GoldSpan> spans,
                                                 const std::vector<std::string>& user_hashtags,
                                                 const SegmentationDict& dict,
                                                 std::vector<std::string>* warnings = nullptr) {
  // Groups of consecutive tokens derived from the same hashtag.
  struct Group {
    TokenRange range;
    std::string body;  // lowercased concatenation
  };
  std::vector<Group> groups;
  for (std::size_t i = 0; i < tokens.size();) {
    if (tokens[i].kind != TokenKind::hashtag_derived) {
      ++i;
      continue;
    }
    std::size_t j = i;
    std::string body;
    while (j < tokens.size() && tokens[j].kind == TokenKind::hashtag_derived && tokens[j].source == tokens[i].source) {
      body += to_lower(tokens[j].surface);
      ++j;
    }
    groups.push_back({{i, j}, std::move(body)});
    i = j;
  }

  for (const auto& tag : user_hashtags) {
    const auto pieces = segment_hashtag(tag, dict);
    std::string body;
    for (const auto& p : pieces) body += p;
    bool found = false;
    for (const auto& g : groups) {
      if (body.empty() || g.body != body) continue;
      found = true;
      GoldSpan merged{g.range, SpanSource::user_hashtag, {}};
      bool changed = true;
      while (changed) {
        changed = false;
        for (auto it = spans.begin(); it != spans.end(); ++it) {
          if (!it->range.overlaps(merged.range)) continue;
          const TokenRange hull{std::min(it->range.begin, merged.range.begin),
                                std::max(it->range.end, merged.range.end)};
          if (hull != merged.range) merged.source = hull == it->range ? it->source : SpanSource::chained;
          merged.range = hull;
          spans.erase(it);
          changed = true;
          break;
        }
      }
      spans.push_back(std::move(merged));
    }
    if (!found && warnings) warnings->push_back("user hashtag '" + tag + "' not found in tokens");
  }
  std::sort(spans.begin(), spans.end(), [](const auto& a, const auto& b) { return a.range < b.range; });
  return spans;
}

/// Tokens plus both task labelings.
struct LabeledSequence {
  std::string id;
  std::string disaster;
  std::string text;
  std::vector<Token> tokens;
  std::vector<Tag> main_tags;
  std::vector<int> aux_labels;  // 1 = keyword
  std::vector<GoldSpan> spans;
  std::optional<std::vector<std::string>> pos;  // aligned to tokens
};

inline LabeledSequence to_labeled_sequence(const std::vector<Token>& tokens, std::vector<GoldSpan> spans) {
  std::sort(spans.begin(), spans.end(), [](const auto& a, const auto& b) { return a.range < b.range; });
  std::vector<TokenRange> ranges;
  for (const auto& s : spans) ranges.push_back(s.range);
  LabeledSequence out;
  out.tokens = tokens;
  out.main_tags = tags_from_ranges(tokens.size(), ranges);
  out.aux_labels = aux_from_tags(out.main_tags);
  out.spans = std::move(spans);
  return out;
}

/// Hashtags typed in the text, used when a record does not list its own.
inline std::vector<std::string> hashtags_in_text(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& t : tokenize(text)) {
    if (t.kind == TokenKind::hashtag) out.push_back(t.surface);
  }
  return out;
}

/// Full annotation of one tweet: lexicon matches, chaining, user hashtags.
inline LabeledSequence annotate(const TweetRecord& record, const Lexicon& lexicon, const TextResources& res,
                                std::vector<std::string>* warnings = nullptr) {
  const auto tokens = prepare_tokens(record.text, res);
  auto spans = chain_matches(match_lexicon(tokens, lexicon));
  const auto hashtags = record.user_hashtags ? *record.user_hashtags : hashtags_in_text(record.text);
  std::vector<std::string> local;
  spans = merge_user_hashtags(tokens, std::move(spans), hashtags, res.segmentation, &local);
  if (warnings) {
    for (auto& w : local) warnings->push_back(record.id + ": " + w);
  }
  auto seq = to_labeled_sequence(tokens, std::move(spans));
  for (auto& s : seq.spans) s.surface = span_surface(seq.tokens, s.range, record.text);
  seq.id = record.id;
  seq.disaster = record.disaster;
  seq.text = record.text;
  if (record.pos_tags) {
    std::vector<std::string> pos;
    for (const auto& t : seq.tokens) pos.push_back((*record.pos_tags)[t.source]);
    seq.pos = std::move(pos);
  }
  return seq;
}

// ---------------------------------------------------------------------------
// serialization

inline nlohmann::json labeled_to_json(const LabeledSequence& s) {
  nlohmann::json j;
  j["id"] = s.id;
  j["disaster"] = s.disaster;
  j["text"] = s.text;
  auto& toks = j["tokens"] = nlohmann::json::array();
  auto& lemmas = j["lemmas"] = nlohmann::json::array();
  auto& kinds = j["kinds"] = nlohmann::json::array();
  auto& offsets = j["offsets"] = nlohmann::json::array();
  auto& sources = j["sources"] = nlohmann::json::array();
  for (const auto& t : s.tokens) {
    toks.push_back(t.surface);
    lemmas.push_back(t.lemma);
    kinds.push_back(std::string(to_string(t.kind)));
    offsets.push_back({t.span.begin, t.span.end});
    sources.push_back(t.source);
  }
  auto& tags = j["tags"] = nlohmann::json::array();
  for (Tag t : s.main_tags) tags.push_back(std::string(1, tag_char(t)));
  j["aux"] = s.aux_labels;
  auto& spans = j["spans"] = nlohmann::json::array();
  for (const auto& sp : s.spans) {
    spans.push_back({{"start", sp.range.begin},
                     {"end", sp.range.end},
                     {"source", std::string(to_string(sp.source))},
                     {"surface", sp.surface}});
  }
  if (s.pos) j["pos"] = *s.pos;
  return j;
}

inline TokenKind token_kind_from_string(std::string_view s) {
  for (auto k : {TokenKind::word, TokenKind::number, TokenKind::punct, TokenKind::hashtag, TokenKind::mention,
                 TokenKind::url, TokenKind::hashtag_derived}) {
    if (to_string(k) == s) return k;
  }
  throw DataError("unknown token kind '" + std::string(s) + "'");
}

/// Parses and validates an annotated record: tag well-formedness, aux
/// projection and span/tag agreement are all checked.
inline LabeledSequence labeled_from_json(const nlohmann::json& j) {
  try {
    LabeledSequence s;
    s.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
    s.disaster = j.value("disaster", "");
    s.text = j.value("text", "");
    const auto surfaces = json_string_array(j.at("tokens"), "tokens");
    const auto n = surfaces.size();
    std::vector<std::string> lemmas =
        j.contains("lemmas") ? json_string_array(j.at("lemmas"), "lemmas") : std::vector<std::string>{};
    if (lemmas.empty()) {
      for (const auto& w : surfaces) lemmas.push_back(to_lower(w));
    }
    if (lemmas.size() != n) throw DataError("lemmas/tokens length mismatch");
    for (std::size_t i = 0; i < n; ++i) {
      Token t;
      t.surface = surfaces[i];
      t.lemma = lemmas[i];
      t.source = i;
      if (j.contains("kinds")) t.kind = token_kind_from_string(j.at("kinds").at(i).get<std::string>());
      if (j.contains("offsets")) t.span = {j.at("offsets").at(i).at(0).get<std::size_t>(), j.at("offsets").at(i).at(1).get<std::size_t>()};
      if (j.contains("sources")) t.source = j.at("sources").at(i).get<std::size_t>();
      s.tokens.push_back(std::move(t));
    }
    const auto tags = json_string_array(j.at("tags"), "tags");
    if (tags.size() != n) throw DataError("tags/tokens length mismatch");
    for (const auto& t : tags) s.main_tags.push_back(tag_from_string(t));
    if (!is_well_formed(s.main_tags)) throw DataError("tag sequence is not well-formed");
    s.aux_labels = aux_from_tags(s.main_tags);
    if (j.contains("aux") && j.at("aux").get<std::vector<int>>() != s.aux_labels) {
      throw DataError("aux labels disagree with main tags");
    }
    const auto ranges = ranges_from_tags(s.main_tags);
    if (j.contains("spans")) {
      for (const auto& sp : j.at("spans")) {
        GoldSpan g;
        g.range = {sp.at("start").get<std::size_t>(), sp.at("end").get<std::size_t>()};
        g.source = span_source_from_string(sp.value("source", "lexicon"));
        g.surface = sp.value("surface", "");
        s.spans.push_back(std::move(g));
      }
      std::vector<TokenRange> listed;
      for (const auto& g : s.spans) listed.push_back(g.range);
      std::sort(listed.begin(), listed.end());
      if (listed != ranges) throw DataError("spans disagree with tags");
    } else {
      for (const auto& r : ranges) s.spans.push_back({r, SpanSource::lexicon, span_surface(s.tokens, r, s.text)});
    }
    if (j.contains("pos") && !j.at("pos").is_null()) {
      s.pos = json_string_array(j.at("pos"), "pos");
      if (s.pos->size() != n) throw DataError("pos/tokens length mismatch");
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed annotated record: ") + e.what());
  }
}

inline std::vector<LabeledSequence> load_labeled(const std::string& path) {
  std::vector<LabeledSequence> out;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    try {
      out.push_back(labeled_from_json(nlohmann::json::parse(lines[i])));
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(path + ":" + std::to_string(i + 1) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

inline void write_labeled(std::ostream& out, const std::vector<LabeledSequence>& seqs) {
  for (const auto& s : seqs) out << labeled_to_json(s).dump() << "\n";
}

/// Two-column CoNLL export: token<TAB>tag, blank line between tweets.
inline void write_conll(std::ostream& out, const std::vector<LabeledSequence>& seqs) {
  for (const auto& s : seqs) {
    for (std::size_t i = 0; i < s.tokens.size(); ++i) out << s.tokens[i].surface << '\t' << tag_char(s.main_tags[i]) << '\n';
    out << '\n';
  }
}

}  // namespace dtag
