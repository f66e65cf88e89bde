#pragma once

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtag/tags.hpp"
#include "dtag/textnorm.hpp"

namespace dtag {

enum class EvalMode { exact_span, token_level };

inline std::string_view to_string(EvalMode m) { return m == EvalMode::exact_span ? "exact_span" : "token_level"; }

inline EvalMode eval_mode_from_string(std::string_view s) {
  if (s == "exact_span") return EvalMode::exact_span;
  if (s == "token_level") return EvalMode::token_level;
  throw ConfigError("unknown eval mode '" + std::string(s) + "'");
}

/// Spans of one tweet, keyed by tweet id.
struct SpanSet {
  std::string id;
  std::vector<TokenRange> spans;
};

struct Counts {
  std::size_t n_gold = 0;
  std::size_t n_pred = 0;
  std::size_t n_correct = 0;

  Counts& operator+=(const Counts& o) {
    n_gold += o.n_gold;
    n_pred += o.n_pred;
    n_correct += o.n_correct;
    return *this;
  }
};

struct Score {
  Counts counts;
  double precision = 0;
  double recall = 0;
  double f1 = 0;

  /// Zero whenever a denominator is zero.
  static Score from(const Counts& c) {
    Score s;
    s.counts = c;
    s.precision = c.n_pred ? static_cast<double>(c.n_correct) / static_cast<double>(c.n_pred) : 0.0;
    s.recall = c.n_gold ? static_cast<double>(c.n_correct) / static_cast<double>(c.n_gold) : 0.0;
    s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
  }
};

/// Exact-span comparison of one tweet.
struct Agreement {
  std::string id;
  std::vector<TokenRange> matched;
  std::vector<TokenRange> missed;    // gold only
  std::vector<TokenRange> spurious;  // predicted only
};

inline Agreement compare_spans(const std::string& id, std::vector<TokenRange> pred, std::vector<TokenRange> gold) {
  std::sort(pred.begin(), pred.end());
  std::sort(gold.begin(), gold.end());
  pred.erase(std::unique(pred.begin(), pred.end()), pred.end());
  gold.erase(std::unique(gold.begin(), gold.end()), gold.end());
  Agreement a{id, {}, {}, {}};
  std::set_intersection(pred.begin(), pred.end(), gold.begin(), gold.end(), std::back_inserter(a.matched));
  std::set_difference(gold.begin(), gold.end(), pred.begin(), pred.end(), std::back_inserter(a.missed));
  std::set_difference(pred.begin(), pred.end(), gold.begin(), gold.end(), std::back_inserter(a.spurious));
  return a;
}

inline std::set<std::size_t> keyword_tokens(const std::vector<TokenRange>& spans) {
  std::set<std::size_t> out;
  for (const auto& r : spans) {
    for (auto i = r.begin; i < r.end; ++i) out.insert(i);
  }
  return out;
}

inline Counts tweet_counts(const std::vector<TokenRange>& pred, const std::vector<TokenRange>& gold, EvalMode mode) {
  if (mode == EvalMode::exact_span) {
    const auto a = compare_spans("", pred, gold);
    return {a.matched.size() + a.missed.size(), a.matched.size() + a.spurious.size(), a.matched.size()};
  }
  const auto p = keyword_tokens(pred), g = keyword_tokens(gold);
  std::vector<std::size_t> common;
  std::set_intersection(p.begin(), p.end(), g.begin(), g.end(), std::back_inserter(common));
  return {g.size(), p.size(), common.size()};
}

struct EvalReport {
  std::string subset;
  EvalMode mode = EvalMode::exact_span;
  Score score;
  std::vector<Counts> per_tweet;
  std::vector<Agreement> agreements;

  nlohmann::json to_json(bool with_tweets = true) const {
    auto range_list = [](const std::vector<TokenRange>& rs) {
      auto a = nlohmann::json::array();
      for (const auto& r : rs) a.push_back({r.begin, r.end});
      return a;
    };
    nlohmann::json j{{"subset", subset},
                     {"mode", std::string(to_string(mode))},
                     {"n_gold", score.counts.n_gold},
                     {"n_pred", score.counts.n_pred},
                     {"n_correct", score.counts.n_correct},
                     {"precision", score.precision},
                     {"recall", score.recall},
                     {"f1", score.f1}};
    if (with_tweets) {
      auto& tw = j["tweets"] = nlohmann::json::array();
      for (const auto& a : agreements) {
        tw.push_back({{"id", a.id},
                      {"matched", range_list(a.matched)},
                      {"missed", range_list(a.missed)},
                      {"spurious", range_list(a.spurious)}});
      }
    }
    return j;
  }
};

/// Micro-averaged scores over a subset. Both sides must cover the same
/// tweet ids; the report follows the order of `gold`.
inline EvalReport score_spans(const std::vector<SpanSet>& pred, const std::vector<SpanSet>& gold,
                              EvalMode mode = EvalMode::exact_span, std::string subset = "") {
  std::map<std::string, const SpanSet*> by_id;
  for (const auto& p : pred) {
    if (!by_id.emplace(p.id, &p).second) throw DataError("duplicate predicted tweet id '" + p.id + "'");
  }
  std::set<std::string> gold_ids;
  for (const auto& g : gold) {
    if (!gold_ids.insert(g.id).second) throw DataError("duplicate gold tweet id '" + g.id + "'");
    if (!by_id.count(g.id)) throw DataError("tweet id '" + g.id + "' has gold spans but no prediction");
  }
  for (const auto& p : pred) {
    if (!gold_ids.count(p.id)) throw DataError("tweet id '" + p.id + "' has a prediction but no gold spans");
  }
  EvalReport r;
  r.subset = std::move(subset);
  r.mode = mode;
  Counts total;
  for (const auto& g : gold) {
    const auto& p = *by_id.at(g.id);
    const auto c = tweet_counts(p.spans, g.spans, mode);
    total += c;
    r.per_tweet.push_back(c);
    r.agreements.push_back(compare_spans(g.id, p.spans, g.spans));
  }
  r.score = Score::from(total);
  return r;
}

/// Aligned text table, one row per subset.
inline std::string format_report_table(const std::vector<EvalReport>& reports) {
  std::size_t w = 6;
  for (const auto& r : reports) w = std::max(w, r.subset.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(w)) << "subset" << std::right << std::setw(8) << "gold"
      << std::setw(8) << "pred" << std::setw(9) << "correct" << std::setw(11) << "precision" << std::setw(9)
      << "recall" << std::setw(9) << "f1" << "\n";
  out << std::string(w + 54, '-') << "\n";
  out << std::fixed << std::setprecision(4);
  for (const auto& r : reports) {
    out << std::left << std::setw(static_cast<int>(w)) << r.subset << std::right << std::setw(8)
        << r.score.counts.n_gold << std::setw(8) << r.score.counts.n_pred << std::setw(9) << r.score.counts.n_correct
        << std::setw(11) << r.score.precision << std::setw(9) << r.score.recall << std::setw(9) << r.score.f1
        << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// agreement rendering

enum class SpanClass { match, gold_only, pred_only };

struct AgreementRender {
  std::string text;  // [[match]] {gold only} <predicted only>
  std::string html;
};

namespace detail {

inline std::string html_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace detail

/// Marks the tweet's tokens with the three agreement classes. Brackets for
/// spans starting at the same token open longest first.
inline AgreementRender render_agreement(const std::vector<Token>& tokens, const std::vector<TokenRange>& pred,
                                        const std::vector<TokenRange>& gold) {
  for (const auto& r : pred) {
    if (r.begin >= r.end || r.end > tokens.size()) throw std::invalid_argument("predicted span out of range");
  }
  for (const auto& r : gold) {
    if (r.begin >= r.end || r.end > tokens.size()) throw std::invalid_argument("gold span out of range");
  }
  const auto a = compare_spans("", pred, gold);
  struct Marked {
    TokenRange r;
    SpanClass c;
  };
  std::vector<Marked> marks;
  for (const auto& r : a.matched) marks.push_back({r, SpanClass::match});
  for (const auto& r : a.missed) marks.push_back({r, SpanClass::gold_only});
  for (const auto& r : a.spurious) marks.push_back({r, SpanClass::pred_only});
  std::stable_sort(marks.begin(), marks.end(), [](const Marked& x, const Marked& y) {
    return x.r.begin != y.r.begin ? x.r.begin < y.r.begin : x.r.end > y.r.end;
  });
  auto open_of = [](SpanClass c) { return c == SpanClass::match ? "[[" : c == SpanClass::gold_only ? "{" : "<"; };
  auto close_of = [](SpanClass c) { return c == SpanClass::match ? "]]" : c == SpanClass::gold_only ? "}" : ">"; };

  AgreementRender out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.text += ' ';
    for (const auto& m : marks) {
      if (m.r.begin == i) out.text += open_of(m.c);
    }
    out.text += tokens[i].surface;
    for (auto it = marks.rbegin(); it != marks.rend(); ++it) {
      if (it->r.end == i + 1) out.text += close_of(it->c);
    }
  }

  // HTML: runs of tokens with the same class set share one element.
  auto classes_at = [&](std::size_t i) {
    std::string cls;
    for (auto c : {SpanClass::match, SpanClass::gold_only, SpanClass::pred_only}) {
      for (const auto& m : marks) {
        if (m.c == c && m.r.begin <= i && i < m.r.end) {
          if (!cls.empty()) cls += ' ';
          cls += c == SpanClass::match ? "match" : c == SpanClass::gold_only ? "gold" : "pred";
          break;
        }
      }
    }
    return cls;
  };
  out.html =
      "<div class=\"tweet\"><style>.match{background:#a6c5fb}.gold{background:#f5da81}"
      ".pred{background:#f79d9b}.gold.pred{background:linear-gradient(#f5da81,#f79d9b)}</style>";
  std::string current;
  bool open = false;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto cls = classes_at(i);
    const bool joins = open && cls == current && i > 0;
    if (open && !joins) {
      out.html += "</span>";
      open = false;
    }
    if (i) out.html += ' ';
    if (!cls.empty() && !open) {
      out.html += "<span class=\"" + cls + "\">";
      open = true;
      current = cls;
    }
    out.html += detail::html_escape(tokens[i].surface);
  }
  if (open) out.html += "</span>";
  out.html += "</div>";
  return out;
}

}  // namespace dtag
