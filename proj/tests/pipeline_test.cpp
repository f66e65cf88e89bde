#include <gtest/gtest.h>

#include <fstream>

#include "synthetic.hpp"
#include "test_support.hpp"

using namespace dtag;

namespace {

std::string q(const std::string& s) { return "'" + s + "'"; }

/// Annotated synthetic corpus written under `dir`; returns the JSONL path.
std::string annotated_corpus(const test::TempDir& dir, std::size_t n, std::uint64_t seed) {
  const auto corpus = test::make_synthetic_corpus(n, 0.3, seed);
  test::write_text(dir.file("corpus.jsonl"), test::corpus_jsonl(corpus.tweets));
  test::write_text(dir.file("lexicon.txt"), test::lexicon_text(corpus.lexicon));
  auto cfg = test::quiet_config();
  cfg.corpus = dir.file("corpus.jsonl");
  cfg.lexicon = dir.file("lexicon.txt");
  cfg.out = dir.file("ann");
  cmd_annotate(cfg);
  return dir.file("ann/annotated.jsonl");
}

}  // namespace

TEST(Annotate, WritesOutputsAndStats) {
  test::TempDir tmp;
  auto cfg = test::quiet_config();
  cfg.corpus = test::fixture("table1_corpus.jsonl");
  cfg.lexicon = test::fixture("table1_lexicon.txt");
  cfg.out = tmp.file("out");
  const auto st = cmd_annotate(cfg);
  EXPECT_EQ(st.tweets, 5u);
  EXPECT_EQ(st.tweets_with_spans, 5u);
  for (const auto* f : {"annotated.jsonl", "annotated.conll", "annotate_stats.json"}) {
    EXPECT_TRUE(std::filesystem::exists(tmp.file(std::string("out/") + f))) << f;
  }
  EXPECT_FALSE(std::filesystem::exists(tmp.file("out/.dtag.lock")));
  EXPECT_EQ(load_labeled(tmp.file("out/annotated.jsonl")).size(), 5u);
}

TEST(Annotate, EmptyCorpusAndDuplicates) {
  test::TempDir tmp;
  test::write_text(tmp.file("empty.jsonl"), "");
  test::write_text(tmp.file("lex.txt"), "help\n");
  auto cfg = test::quiet_config();
  cfg.corpus = tmp.file("empty.jsonl");
  cfg.lexicon = tmp.file("lex.txt");
  cfg.out = tmp.file("out");
  EXPECT_EQ(cmd_annotate(cfg).tweets, 0u);
  EXPECT_EQ(read_file(tmp.file("out/annotated.jsonl")), "");

  test::write_text(tmp.file("dup.jsonl"),
                   "{\"id\": \"1\", \"text\": \"need help\"}\n{\"id\": \"2\", \"text\": \"Need HELP @x\"}\n");
  cfg.corpus = tmp.file("dup.jsonl");
  auto st = cmd_annotate(cfg);
  EXPECT_EQ(st.duplicates, 1u);
  EXPECT_EQ(st.tweets, 1u);
  cfg.dedup = false;
  EXPECT_EQ(cmd_annotate(cfg).tweets, 2u);
}

TEST(Annotate, OutputLockRejectsConcurrentRun) {
  test::TempDir tmp;
  auto cfg = test::quiet_config();
  cfg.corpus = test::fixture("table1_corpus.jsonl");
  cfg.lexicon = test::fixture("table1_lexicon.txt");
  cfg.out = tmp.file("out");
  OutputLock held(cfg.out);
  EXPECT_THROW(cmd_annotate(cfg), ConfigError);
}

TEST(Annotate, MissingResourcesNamePath) {
  test::TempDir tmp;
  auto cfg = test::quiet_config();
  cfg.corpus = test::fixture("table1_corpus.jsonl");
  cfg.lexicon = tmp.file("nope.txt");
  cfg.out = tmp.file("out");
  try {
    cmd_annotate(cfg);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("nope.txt"), std::string::npos);
  }
}

TEST(Hashtags, RenderedFromSpans) {
  const auto tokens = prepare_tokens("Stay safe #HurricaneMaria, power lines down", test::text_resources());
  EXPECT_EQ(render_hashtag(tokens, {2, 4}), "#hurricanemaria");
  EXPECT_EQ(render_hashtag(tokens, {5, 7}), "#powerlines");
}

TEST(Split, WritesSubsetFiles) {
  test::TempDir tmp;
  const auto annotated = annotated_corpus(tmp, 120, 4);
  auto cfg = test::quiet_config();
  cfg.corpus = annotated;
  cfg.out = tmp.file("split");
  cfg.split.heldout_test_disasters = {"synthetic_fire"};
  const auto sizes = cmd_split(cfg);
  std::size_t total = 0;
  for (const auto& [name, n] : sizes) {
    total += n;
    EXPECT_EQ(load_labeled(tmp.file("split/" + name)).size(), n) << name;
  }
  EXPECT_EQ(total, load_labeled(annotated).size());
  EXPECT_TRUE(sizes.count("test_synthetic_fire.jsonl"));
  for (const auto& s : load_labeled(tmp.file("split/train.jsonl"))) EXPECT_NE(s.disaster, "synthetic_fire");
}

TEST(TrainEvalExtract, EndToEnd) {
  test::TempDir tmp;
  const auto annotated = annotated_corpus(tmp, 150, 6);
  auto cfg = test::quiet_config();
  cfg.corpus = annotated;
  cfg.split_corpus = true;
  cfg.out = tmp.file("model");
  cfg.features.d_word = 8;
  cfg.model.d_hidden = 8;
  cfg.model.epochs = 2;
  cfg.model.lr = 0.01;
  const auto s = cmd_train(cfg);
  EXPECT_EQ(s.epochs_run, 2);
  EXPECT_EQ(read_lines(s.log).size(), 2u);

  // Gold as predictions scores 1; empty predictions score 0.
  const auto gold = load_labeled(annotated);
  std::string perfect, none;
  std::size_t with_spans = 0;
  for (const auto& g : gold) {
    nlohmann::json spans = nlohmann::json::array();
    for (const auto& sp : g.spans) spans.push_back({sp.range.begin, sp.range.end});
    with_spans += !g.spans.empty();
    perfect += nlohmann::json{{"id", g.id}, {"spans", spans}}.dump() + "\n";
    none += nlohmann::json{{"id", g.id}, {"spans", nlohmann::json::array()}}.dump() + "\n";
  }
  ASSERT_GT(with_spans, 0u);
  test::write_text(tmp.file("perfect.jsonl"), perfect);
  test::write_text(tmp.file("none.jsonl"), none);
  auto ecfg = test::quiet_config();
  ecfg.test_files = {annotated};
  ecfg.out = tmp.file("eval");
  ecfg.predictions = tmp.file("perfect.jsonl");
  EXPECT_EQ(cmd_eval(ecfg)[0].score.f1, 1.0);
  ecfg.predictions = tmp.file("none.jsonl");
  EXPECT_EQ(cmd_eval(ecfg)[0].score.f1, 0.0);
  EXPECT_TRUE(std::filesystem::exists(tmp.file("eval/agreement_annotated.html")));
  test::write_text(tmp.file("extra.jsonl"), none + "{\"id\": \"ghost\", \"spans\": []}\n");
  ecfg.predictions = tmp.file("extra.jsonl");
  EXPECT_THROW(cmd_eval(ecfg), DataError);

  ecfg.predictions.clear();
  ecfg.checkpoint = s.checkpoint;
  const auto reports = cmd_eval(ecfg);
  EXPECT_GE(reports[0].score.f1, 0.0);

  auto xcfg = test::quiet_config();
  xcfg.checkpoint = s.checkpoint;
  std::istringstream in("Flooding near the river now\n{\"id\": \"k\", \"text\": \"power lines down\"}\n\n");
  std::ostringstream out;
  EXPECT_EQ(cmd_extract(xcfg, in, out), 2u);
  const auto lines = split_char(out.str(), '\n');
  EXPECT_EQ(nlohmann::json::parse(lines[0])["id"], "1");
  EXPECT_EQ(nlohmann::json::parse(lines[1])["id"], "k");
  xcfg.variant_given = true;
  xcfg.features.variant = Variant::mtl_ctx;
  std::istringstream again("x\n");
  EXPECT_THROW(cmd_extract(xcfg, again, out), ConfigError);
}

TEST(Train, MissingPosResourceNamesPath) {
  test::TempDir tmp;
  const auto annotated = annotated_corpus(tmp, 40, 2);
  auto cfg = test::quiet_config();
  cfg.corpus = annotated;
  cfg.split_corpus = true;
  cfg.out = tmp.file("model");
  cfg.features.variant = Variant::mtl_ipa_pos;
  cfg.pos_lexicon = tmp.file("missing_pos.tsv");
  try {
    cmd_train(cfg);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("missing_pos.tsv"), std::string::npos) << e.what();
  }
  EXPECT_FALSE(std::filesystem::exists(tmp.file("model/model.ckpt")));
}

#ifdef DTAG_TAGGER_BIN
TEST(Cli, ExitCodes) {
  test::TempDir tmp;
  std::string out;
  EXPECT_EQ(test::run_cli("--help", &out), 0);
  EXPECT_NE(out.find("annotate"), std::string::npos);
  EXPECT_EQ(test::run_cli("", &out), 1);
  EXPECT_EQ(test::run_cli("bogus", &out), 1);
  EXPECT_EQ(test::run_cli("annotate --lexicon x", &out), 1);
  EXPECT_EQ(test::run_cli("annotate --corpus /nonexistent.jsonl --lexicon /nonexistent.txt --out " + q(tmp.file("o")), &out), 1);
  EXPECT_NE(out.find("error:"), std::string::npos);
  EXPECT_EQ(test::run_cli("train --variant nope --out " + q(tmp.file("o")), &out), 1);

  test::write_text(tmp.file("bad.jsonl"), "garbage\n");
  EXPECT_EQ(test::run_cli("annotate --max-errors 0 --corpus " + q(tmp.file("bad.jsonl")) + " --lexicon " +
                              q(test::fixture("table1_lexicon.txt")) + " --out " + q(tmp.file("o")),
                          &out),
            2)
      << out;
  test::write_text(tmp.file("bad.ckpt"), "not a checkpoint");
  EXPECT_EQ(test::run_cli("extract --checkpoint " + q(tmp.file("bad.ckpt")) + " --input /dev/null", &out), 2) << out;
}

TEST(Cli, AnnotateAndDeterministicTraining) {
  test::TempDir tmp;
  std::string out;
  ASSERT_EQ(test::run_cli("annotate -v 0 --corpus " + q(test::fixture("table1_corpus.jsonl")) + " --lexicon " +
                              q(test::fixture("table1_lexicon.txt")) + " --out " + q(tmp.file("ann")),
                          &out),
            0)
      << out;
  EXPECT_NE(out.find("tweets: 5"), std::string::npos) << out;

  const auto annotated = annotated_corpus(tmp, 80, 9);
  const auto args = " -v 0 --split --corpus " + q(annotated) + " --d-word 6 --d-hidden 6 --epochs 2 --seed 5 --out ";
  ASSERT_EQ(test::run_cli("train" + args + q(tmp.file("m1")), &out), 0) << out;
  ASSERT_EQ(test::run_cli("train" + args + q(tmp.file("m2")), &out), 0) << out;
  EXPECT_EQ(read_file(tmp.file("m1/model.ckpt")), read_file(tmp.file("m2/model.ckpt")));

  test::write_text(tmp.file("in.txt"), "Stay safe #HurricaneMaria\n");
  ASSERT_EQ(test::run_cli("extract --checkpoint " + q(tmp.file("m1/model.ckpt")) + " --input " + q(tmp.file("in.txt")), &out), 0)
      << out;
  const auto j = nlohmann::json::parse(out);
  EXPECT_EQ(j["id"], "1");
  EXPECT_TRUE(j["hashtags"].is_array());
}
#endif
