#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dtag/util.hpp"

namespace dtag {

/// Span encoding for the main task. The numeric values are the class
/// indices used by the tagger's main head.
enum class Tag : int { S = 0, B = 1, M = 2, E = 3, O = 4 };
inline constexpr int kNumTags = 5;
inline constexpr int kNumAuxLabels = 2;  // 0 = not_keyword, 1 = keyword

inline char tag_char(Tag t) { return "SBMEO"[static_cast<int>(t)]; }

inline Tag tag_from_string(std::string_view s) {
  if (s.size() == 1) {
    switch (s[0]) {
      case 'S': return Tag::S;
      case 'B': return Tag::B;
      case 'M': return Tag::M;
      case 'E': return Tag::E;
      case 'O': return Tag::O;
    }
  }
  throw DataError("unknown tag '" + std::string(s) + "'");
}

enum class SpanSource { lexicon, user_hashtag, chained, predicted };

inline std::string_view to_string(SpanSource s) {
  switch (s) {
    case SpanSource::lexicon: return "lexicon";
    case SpanSource::user_hashtag: return "user_hashtag";
    case SpanSource::chained: return "chained";
    case SpanSource::predicted: return "predicted";
  }
  return "lexicon";
}

inline SpanSource span_source_from_string(std::string_view s) {
  if (s == "lexicon") return SpanSource::lexicon;
  if (s == "user_hashtag") return SpanSource::user_hashtag;
  if (s == "chained") return SpanSource::chained;
  if (s == "predicted") return SpanSource::predicted;
  throw DataError("unknown span source '" + std::string(s) + "'");
}

/// Half-open token range [begin, end).
struct TokenRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool overlaps(const TokenRange& o) const { return begin < o.end && o.begin < end; }
  auto operator<=>(const TokenRange&) const = default;
};

struct GoldSpan {
  TokenRange range;
  SpanSource source = SpanSource::lexicon;
  std::string surface;
};

/// Encodes disjoint spans over `n` tokens: single-token spans become S,
/// longer ones B M* E, the rest O. Overlapping or out-of-range spans are a
/// caller error.
inline std::vector<Tag> tags_from_ranges(std::size_t n, const std::vector<TokenRange>& ranges) {
  std::vector<Tag> tags(n, Tag::O);
  std::vector<bool> used(n, false);
  for (const auto& r : ranges) {
    if (r.begin >= r.end || r.end > n) {
      throw std::invalid_argument("span [" + std::to_string(r.begin) + "," + std::to_string(r.end) +
                                  ") out of range for " + std::to_string(n) + " tokens");
    }
    for (std::size_t i = r.begin; i < r.end; ++i) {
      if (used[i]) throw std::invalid_argument("overlapping spans at token " + std::to_string(i));
      used[i] = true;
    }
    if (r.size() == 1) {
      tags[r.begin] = Tag::S;
    } else {
      tags[r.begin] = Tag::B;
      for (std::size_t i = r.begin + 1; i + 1 < r.end; ++i) tags[i] = Tag::M;
      tags[r.end - 1] = Tag::E;
    }
  }
  return tags;
}

inline bool is_well_formed(const std::vector<Tag>& tags) {
  bool open = false;
  for (Tag t : tags) {
    switch (t) {
      case Tag::S:
      case Tag::O:
      case Tag::B:
        if (open) return false;
        open = t == Tag::B;
        break;
      case Tag::M:
        if (!open) return false;
        break;
      case Tag::E:
        if (!open) return false;
        open = false;
        break;
    }
  }
  return !open;
}

/// Spans of a well-formed tag sequence, in order.
inline std::vector<TokenRange> ranges_from_tags(const std::vector<Tag>& tags) {
  if (!is_well_formed(tags)) throw std::invalid_argument("tag sequence is not well-formed");
  std::vector<TokenRange> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    switch (tags[i]) {
      case Tag::S: out.push_back({i, i + 1}); break;
      case Tag::B: start = i; break;
      case Tag::E: out.push_back({start, i + 1}); break;
      default: break;
    }
  }
  return out;
}

/// Makes any tag sequence well-formed:
///  - M or E with no open span becomes O;
///  - a span interrupted (or ended) before its E is closed at its last
///    token: B alone becomes S, otherwise the last M becomes E.
inline std::vector<Tag> repair_tags(std::vector<Tag> tags) {
  bool open = false;
  std::size_t start = 0;
  auto close_open = [&](std::size_t last) {
    if (last == start) {
      tags[start] = Tag::S;
    } else {
      tags[last] = Tag::E;
    }
    open = false;
  };
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const Tag t = tags[i];
    if (open) {
      if (t == Tag::M) continue;
      if (t == Tag::E) {
        open = false;
        continue;
      }
      close_open(i - 1);
    }
    switch (t) {
      case Tag::B:
        open = true;
        start = i;
        break;
      case Tag::M:
      case Tag::E:
        tags[i] = Tag::O;
        break;
      default:
        break;
    }
  }
  if (open) close_open(tags.size() - 1);
  return tags;
}

inline std::vector<TokenRange> decode_tags(const std::vector<Tag>& tags) {
  return ranges_from_tags(repair_tags(tags));
}

/// Auxiliary labels are the projection of the main tags: keyword iff not O.
inline std::vector<int> aux_from_tags(const std::vector<Tag>& tags) {
  std::vector<int> aux(tags.size());
  std::transform(tags.begin(), tags.end(), aux.begin(), [](Tag t) { return t == Tag::O ? 0 : 1; });
  return aux;
}

}  // namespace dtag
