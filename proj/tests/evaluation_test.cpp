#include <gtest/gtest.h>

#include "dtag/evaluation.hpp"
#include "test_support.hpp"

using namespace dtag;

namespace {

std::vector<SpanSet> random_sets(Rng& rng, std::size_t n_tweets) {
  std::vector<SpanSet> out;
  for (std::size_t i = 0; i < n_tweets; ++i) {
    SpanSet s{std::to_string(i), {}};
    for (std::uint64_t k = uniform_index(rng, 4); k > 0; --k) {
      const auto b = uniform_index(rng, 8);
      s.spans.push_back({b, b + 1 + uniform_index(rng, 2)});
    }
    out.push_back(s);
  }
  return out;
}

std::size_t index_of(const std::vector<Token>& ts, const std::string& surface) {
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (ts[i].surface == surface) return i;
  }
  throw std::runtime_error("no token " + surface);
}

}  // namespace

TEST(Score, WorkedExamples) {
  const std::vector<SpanSet> gold{{"a", {{0, 1}, {2, 4}}}, {"b", {{1, 2}}}};
  const auto same = score_spans(gold, gold);
  EXPECT_EQ(same.score.precision, 1.0);
  EXPECT_EQ(same.score.recall, 1.0);
  EXPECT_EQ(same.score.f1, 1.0);

  const auto empty = score_spans({{"a", {}}, {"b", {}}}, gold);
  EXPECT_EQ(empty.score.precision, 0.0);
  EXPECT_EQ(empty.score.recall, 0.0);
  EXPECT_EQ(empty.score.f1, 0.0);

  const auto half = score_spans({{"a", {{2, 4}}}}, {{"a", {{0, 1}, {2, 4}}}});
  EXPECT_DOUBLE_EQ(half.score.precision, 1.0);
  EXPECT_DOUBLE_EQ(half.score.recall, 0.5);
  EXPECT_NEAR(half.score.f1, 2.0 / 3.0, 1e-15);

  // A partial overlap earns nothing in exact-span mode but counts tokens
  // in token-level mode.
  const auto exact = score_spans({{"a", {{0, 2}}}}, {{"a", {{1, 3}}}});
  EXPECT_EQ(exact.score.counts.n_correct, 0u);
  const auto tok = score_spans({{"a", {{0, 2}}}}, {{"a", {{1, 3}}}}, EvalMode::token_level);
  EXPECT_EQ(tok.score.counts.n_correct, 1u);
  EXPECT_DOUBLE_EQ(tok.score.f1, 0.5);

  EXPECT_EQ(Score::from({}).f1, 0.0);
}

TEST(Score, SymmetryAdditivityAndBounds) {
  Rng rng(19);
  for (int trial = 0; trial < 300; ++trial) {
    const auto pred = random_sets(rng, 6), gold = random_sets(rng, 6);
    for (auto mode : {EvalMode::exact_span, EvalMode::token_level}) {
      const auto r = score_spans(pred, gold, mode), swapped = score_spans(gold, pred, mode);
      ASSERT_EQ(r.score.precision, swapped.score.recall);
      ASSERT_EQ(r.score.recall, swapped.score.precision);
      Counts sum;
      for (const auto& c : r.per_tweet) sum += c;
      ASSERT_EQ(sum.n_gold, r.score.counts.n_gold);
      ASSERT_EQ(sum.n_pred, r.score.counts.n_pred);
      ASSERT_EQ(sum.n_correct, r.score.counts.n_correct);
      ASSERT_GE(r.score.f1, 0.0);
      ASSERT_LE(r.score.f1, 1.0);
      ASSERT_LE(r.score.f1, 2 * std::min(r.score.precision, r.score.recall) + 1e-12);
    }
    const auto e = score_spans(pred, gold);
    bool equal = true;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const auto a = compare_spans("", pred[i].spans, gold[i].spans);
      equal = equal && a.missed.empty() && a.spurious.empty();
    }
    ASSERT_EQ(e.score.f1 == 1.0, equal && e.score.counts.n_gold > 0);
  }
}

TEST(Score, IdMismatchErrors) {
  EXPECT_THROW(score_spans({{"a", {}}}, {{"b", {}}}), DataError);
  EXPECT_THROW(score_spans({{"a", {}}, {"b", {}}}, {{"a", {}}}), DataError);
  EXPECT_THROW(score_spans({{"a", {}}, {"a", {}}}, {{"a", {}}}), DataError);
  EXPECT_THROW(score_spans({{"a", {}}}, {{"a", {}}, {"a", {}}}), DataError);
  EXPECT_THROW(eval_mode_from_string("fuzzy"), ConfigError);
}

TEST(Report, JsonAndTable) {
  const auto r = score_spans({{"a", {{0, 1}, {3, 4}}}}, {{"a", {{0, 1}, {1, 2}}}}, EvalMode::exact_span, "test_multiple_disasters");
  const auto j = r.to_json();
  EXPECT_EQ(j["subset"], "test_multiple_disasters");
  EXPECT_EQ(j["n_correct"], 1);
  EXPECT_EQ(j["tweets"][0]["missed"], nlohmann::json::parse("[[1, 2]]"));
  EXPECT_EQ(j["tweets"][0]["spurious"], nlohmann::json::parse("[[3, 4]]"));
  EXPECT_FALSE(r.to_json(false).contains("tweets"));
  const auto table = format_report_table({r});
  EXPECT_NE(table.find("test_multiple_disasters       2       2        1     0.5000   0.5000   0.5000"), std::string::npos)
      << table;
}

TEST(Render, ClassesAndBrackets) {
  const auto ts = tokenize("we need help in Houston now");
  const auto full = render_agreement(ts, {{1, 3}, {4, 5}}, {{1, 3}, {4, 5}});
  EXPECT_EQ(full.text, "we [[need help]] in [[Houston]] now");
  const auto mixed = render_agreement(ts, {{4, 6}}, {{1, 3}});
  EXPECT_EQ(mixed.text, "we {need help} in <Houston now>");
  EXPECT_NE(mixed.html.find("<span class=\"gold\">need help</span>"), std::string::npos) << mixed.html;
  EXPECT_NE(mixed.html.find("<span class=\"pred\">Houston now</span>"), std::string::npos);
  EXPECT_THROW(render_agreement(ts, {{5, 7}}, {}), std::invalid_argument);
  const auto esc = render_agreement(tokenize("a&b <x>"), {}, {});
  EXPECT_NE(esc.html.find("a &amp; b &lt; x &gt;"), std::string::npos) << esc.html;
}

// The rescue tweet from the qualitative examples: "Bataan" predicted but
// not gold; the gold span joining "rescuers helping" shows only in the gap
// between the two matched single-word spans.
TEST(Render, RescueTweetExample) {
  const auto ts = tokenize("pls help: People in Hermosa, Bataan r in roofs now,there's no rescuers helping as of now #rescuePH");
  const auto people = index_of(ts, "People"), bataan = index_of(ts, "Bataan"), rescuers = index_of(ts, "rescuers");
  const auto tag = index_of(ts, "#rescuePH");
  const std::vector<TokenRange> shared{{0, people + 1}, {rescuers, rescuers + 1}, {rescuers + 1, rescuers + 2}, {tag, tag + 1}};
  auto pred = shared, gold = shared;
  pred.push_back({bataan, bataan + 1});
  gold.push_back({rescuers, rescuers + 2});
  const auto a = compare_spans("r", pred, gold);
  EXPECT_EQ(a.spurious, (std::vector<TokenRange>{{bataan, bataan + 1}}));
  EXPECT_EQ(a.missed, (std::vector<TokenRange>{{rescuers, rescuers + 2}}));
  EXPECT_EQ(a.matched.size(), 4u);
  const auto r = render_agreement(ts, pred, gold);
  EXPECT_NE(r.text.find("[[pls help : People]]"), std::string::npos) << r.text;
  EXPECT_NE(r.text.find("<Bataan>"), std::string::npos) << r.text;
  EXPECT_NE(r.text.find("{[[rescuers]] [[helping]]}"), std::string::npos) << r.text;
  EXPECT_NE(r.text.find("[[#rescuePH]]"), std::string::npos) << r.text;
  EXPECT_NE(r.html.find("<span class=\"pred\">Bataan</span>"), std::string::npos) << r.html;
  EXPECT_NE(r.html.find("<span class=\"match gold\">rescuers helping</span>"), std::string::npos) << r.html;
}
