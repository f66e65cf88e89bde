#include <gtest/gtest.h>

#include "dtag/features.hpp"
#include "test_support.hpp"

using namespace dtag;

namespace {

const PhonemeInventory& inventory() {
  static const auto inv = PhonemeInventory::load(data_path("phonemes.tsv"));
  return inv;
}

const G2PRules& g2p() {
  static const auto rules = G2PRules::load(data_path("g2p_rules.tsv"), data_path("g2p_exceptions.tsv"), &inventory());
  return rules;
}

LabeledSequence seq_of(const std::string& id, const std::string& text) {
  TweetRecord r;
  r.id = id;
  r.text = text;
  return annotate(r, Lexicon{}, test::text_resources());
}

}  // namespace

TEST(Embeddings, LoadRejectsBadRowsAndAveragesUnk) {
  test::TempDir tmp;
  test::write_text(tmp.file("e.txt"), "flood 1 2\nhelp 3 4\nbad 1\nwater 5 x\nflood 9 9\nrain 2 0\n");
  const auto load = load_word_embeddings(tmp.file("e.txt"), 2);
  EXPECT_EQ(load.rejected_lines, (std::vector<std::size_t>{3, 4}));
  const auto& t = load.table;
  ASSERT_EQ(t.words.size(), 3u);
  EXPECT_EQ(t.lookup("flood"), Eigen::Vector2f(1, 2));
  EXPECT_EQ(t.unk_vector(), Eigen::Vector2f(2, 2));
  EXPECT_EQ(t.lookup("zebra"), t.unk_vector());
  test::write_text(tmp.file("bad.txt"), "a 1\n");
  EXPECT_THROW(load_word_embeddings(tmp.file("bad.txt"), 2), DataError);
}

TEST(Embeddings, WindowConcatPadsWithZeros) {
  std::vector<Eigen::Vector2d> e{{1, 2}, {3, 4}, {5, 6}};
  std::vector<Eigen::VectorXd> ev(e.begin(), e.end());
  const auto w = window_concat(ev);
  ASSERT_EQ(w.size(), 3u);
  EXPECT_EQ(w[0], (Eigen::VectorXd(6) << 0, 0, 1, 2, 3, 4).finished());
  EXPECT_EQ(w[1], (Eigen::VectorXd(6) << 1, 2, 3, 4, 5, 6).finished());
  EXPECT_EQ(w[2], (Eigen::VectorXd(6) << 3, 4, 5, 6, 0, 0).finished());
  EXPECT_TRUE(window_concat(std::vector<Eigen::VectorXd>{}).empty());
}

TEST(Vocab, FirstOccurrenceOrderAndMinCount) {
  const auto v = build_vocab({seq_of("a", "Flood flood rain"), seq_of("b", "rain sun")});
  EXPECT_EQ(v.words, (std::vector<std::string>{"flood", "rain", "sun"}));
  EXPECT_EQ(v.id("zebra"), 3);
  EXPECT_EQ(v.size(), 4);
  EXPECT_EQ(build_vocab({seq_of("a", "Flood flood rain"), seq_of("b", "rain sun")}, 2).words,
            (std::vector<std::string>{"flood", "rain"}));
}

TEST(Phonemes, InventoryShape) {
  const auto& inv = inventory();
  EXPECT_EQ(inv.n_features(), 22);
  EXPECT_GE(inv.size(), 40);
  EXPECT_TRUE((inv.features.array().abs() <= 1).all());
  EXPECT_THROW(inv.id("??"), DataError);
  EXPECT_THROW(PhonemeInventory::from_rows({{"a", {1, 0}}, {"b", {1}}}), DataError);
  EXPECT_THROW(PhonemeInventory::from_rows({{"a", {2}}}), DataError);
}

TEST(G2P, ExceptionsRulesAndContexts) {
  EXPECT_EQ(grapheme_to_phoneme("help", g2p()), (std::vector<std::string>{"h", "ɛ", "l", "p"}));
  EXPECT_EQ(grapheme_to_phoneme("HELP!", g2p()), grapheme_to_phoneme("help", g2p()));
  EXPECT_TRUE(grapheme_to_phoneme("123", g2p()).empty());

  const G2PRules rules({G2PRules::parse_rule("c", "k"), G2PRules::parse_rule("(c)V", "s"),
                        G2PRules::parse_rule("a", "æ"), G2PRules::parse_rule("e", "ɛ"),
                        G2PRules::parse_rule("(e)#", "-"), G2PRules::parse_rule("#(k)n", "-"),
                        G2PRules::parse_rule("k", "k"), G2PRules::parse_rule("n", "n"),
                        G2PRules::parse_rule("sh", "ʃ")},
                       {});
  EXPECT_EQ(rules.convert("cace"), (std::vector<std::string>{"s", "æ", "s"}));
  EXPECT_EQ(rules.convert("ac"), (std::vector<std::string>{"æ", "k"}));
  EXPECT_EQ(rules.convert("knack"), (std::vector<std::string>{"n", "æ", "k", "k"}));
  EXPECT_EQ(rules.convert("shack"), (std::vector<std::string>{"ʃ", "æ", "k", "k"}));
  EXPECT_EQ(rules.convert("e"), (std::vector<std::string>{"ɛ"}));
}

TEST(G2P, EveryWordListEntryUsesInventoryPhonemes) {
  std::size_t n = 0;
  for (const auto& line : read_lines(data_path("wordlist.txt"))) {
    const auto f = split_ws(line);
    if (f.empty() || f[0][0] == '#') continue;
    for (const auto& p : g2p().convert(f[0])) ASSERT_TRUE(inventory().contains(p)) << f[0] << " -> " << p;
    if (is_alpha_word(f[0])) {
      ASSERT_FALSE(g2p().convert(f[0]).empty()) << f[0];
    }
    ++n;
  }
  EXPECT_GT(n, 1000u);
}

TEST(G2P, PatternSyntaxErrors) {
  EXPECT_THROW(G2PRules::parse_rule("a(b", "x"), DataError);
  EXPECT_THROW(G2PRules::parse_rule("()", "x"), DataError);
  EXPECT_THROW(G2PRules::parse_rule("(1)", "x"), DataError);
  const auto r = G2PRules::parse_rule("#C(Ea)r", "i");
  EXPECT_EQ(r.left, "#C");
  EXPECT_EQ(r.focus, "ea");
  EXPECT_EQ(r.right, "r");
  EXPECT_TRUE(G2PRules::parse_rule("gh", "-").phonemes.empty());
}

TEST(CharCnn, ZeroWeightsGiveZeroVector) {
  CharCnnParams<double> p;
  p.kernel = 3;
  p.ipa_embedding = Mat<double>::Random(4, inventory().size());
  p.weights = Mat<double>::Zero(6, 3 * (4 + inventory().n_features()));
  p.bias = Mat<double>::Zero(6, 1);
  EXPECT_TRUE(encode_phonetics<double>("hurricane", inventory(), g2p(), p).isZero());
}

TEST(CharCnn, ShortWordsArePaddedToKernel) {
  const Mat<double> emb = Mat<double>::Ones(2, 3), feats = Mat<double>::Constant(1, 3, -1);
  const auto x = phoneme_input<double>({1}, emb, feats, 5);
  EXPECT_EQ(x.cols(), 5);
  EXPECT_EQ(x.col(0), Eigen::Vector3d(1, 1, -1));
  EXPECT_TRUE(x.rightCols(4).isZero());
  EXPECT_EQ(phoneme_input<double>({}, emb, feats, 3).cols(), 3);
}

// A direct triple loop over filters, positions and offsets.
TEST(CharCnn, MatchesNaiveConvolution) {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const int c = 1 + static_cast<int>(uniform_index(rng, 4)), kernel = 1 + 2 * static_cast<int>(uniform_index(rng, 3));
    const int len = kernel + static_cast<int>(uniform_index(rng, 6)), nf = 1 + static_cast<int>(uniform_index(rng, 5));
    Mat<double> x(c, len), w(nf, kernel * c), b(nf, 1);
    for (auto* m : {&x, &w, &b}) {
      for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = 2 * uniform01(rng) - 1;
    }
    const auto got = cnn_max_pool<double>(im2col<double>(x, kernel), w, b);
    for (int f = 0; f < nf; ++f) {
      double best = 0;
      for (int t = 0; t < len; ++t) {
        double z = b(f, 0);
        for (int k = 0; k < kernel; ++k) {
          const int src = t + k - kernel / 2;
          if (src < 0 || src >= len) continue;
          for (int ch = 0; ch < c; ++ch) z += w(f, k * c + ch) * x(ch, src);
        }
        best = std::max(best, z);
      }
      ASSERT_NEAR(got(f), best, 1e-10);
    }
  }
}

TEST(FeatureConfig, InputDimFormula) {
  FeatureConfig c;
  c.d_word = 7;
  c.d_ctx = 11;
  c.d_pos = 3;
  c.n_filters = 5;
  const std::pair<Variant, int> expected[] = {{Variant::mtl, 21}, {Variant::mtl_ctx, 18},
                                              {Variant::mtl_ipa_pos, 29}, {Variant::mtl_ctx_ipa_pos, 26}};
  for (const auto& [v, d] : expected) {
    c.variant = v;
    EXPECT_EQ(c.input_dim(), d) << to_string(v);
    EXPECT_EQ(FeatureConfig::from_json(c.to_json()).input_dim(), d);
  }
  c.kernel = 4;
  c.variant = Variant::mtl_ipa_pos;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(variant_from_string("bogus"), ConfigError);
}

TEST(FeatureEncoder, ForwardMatchesLayout) {
  FeatureConfig cfg;
  cfg.variant = Variant::mtl_ctx_ipa_pos;
  cfg.d_word = 3;
  cfg.d_ctx = 2;
  cfg.d_pos = 2;
  cfg.d_ipa = 2;
  cfg.n_filters = 4;
  const auto& inv = inventory();
  FeatureEncoder<double> enc(cfg, 5, inv.features);
  Rng rng(1);
  enc.init(rng);
  const auto s = seq_of("x", "Flooding in #Houston");
  const auto vocab = build_vocab({s});
  ContextVectors ctx(2);
  ctx.add("x", Eigen::MatrixXf::Random(2, static_cast<Eigen::Index>(s.tokens.size())));
  const FallbackPosTagger pos;
  FeatureResources res{&vocab, &pos, &inv, &g2p(), &ctx};
  const auto in = index_sequence(s, cfg, res);
  const auto x = enc.forward(in);
  ASSERT_EQ(x.rows(), cfg.input_dim());
  ASSERT_EQ(x.cols(), 3);
  for (Eigen::Index t = 0; t < 3; ++t) {
    EXPECT_EQ(x.block(0, t, 3, 1), enc.word_emb.value.col(in.word_ids[t]));
    EXPECT_TRUE(x.block(3, t, 2, 1).isApprox(ctx.at("x").col(t).cast<double>()));
    EXPECT_EQ(x.block(5, t, 2, 1), enc.pos_emb.value.col(in.pos_ids[t]));
    CharCnnParams<double> p{enc.ipa_emb.value, enc.cnn_w.value, enc.cnn_b.value, cfg.kernel};
    EXPECT_TRUE(x.block(7, t, 4, 1).isApprox(encode_phonetics<double>(s.tokens[t].surface, inv, g2p(), p), 1e-12));
  }
  // Window variant: the middle block is the token, neighbours around it.
  cfg.variant = Variant::mtl;
  FeatureEncoder<double> win(cfg, 5, inv.features);
  win.init(rng);
  const auto xw = win.forward(index_sequence(s, cfg, res));
  EXPECT_TRUE(xw.block(0, 0, 3, 1).isZero());
  EXPECT_EQ(xw.block(0, 1, 3, 1), xw.block(3, 0, 3, 1));
  EXPECT_EQ(xw.block(6, 1, 3, 1), xw.block(3, 2, 3, 1));
  EXPECT_TRUE(xw.block(6, 2, 3, 1).isZero());
}

TEST(FeatureEncoder, PretrainedRowsAndUnk) {
  EmbeddingTable t;
  t.dim = 2;
  test::TempDir tmp;
  test::write_text(tmp.file("e.txt"), "flood 1 1\nrain 3 5\n");
  const auto table = load_word_embeddings(tmp.file("e.txt"), 2).table;
  FeatureConfig cfg;
  cfg.d_word = 2;
  const WordVocab vocab({"rain", "sun"});
  FeatureEncoder<float> enc(cfg, vocab.size(), inventory().features);
  enc.load_pretrained(table, vocab);
  EXPECT_EQ(enc.word_emb.value.col(0), Eigen::Vector2f(3, 5));
  EXPECT_EQ(enc.word_emb.value.col(1), Eigen::Vector2f(2, 3));
  EXPECT_EQ(enc.word_emb.value.col(2), Eigen::Vector2f(2, 3));
  cfg.d_word = 3;
  FeatureEncoder<float> wrong(cfg, vocab.size(), inventory().features);
  EXPECT_THROW(wrong.load_pretrained(table, vocab), ConfigError);
}

TEST(ContextVectors, BinaryAndJsonlRoundTrip) {
  ContextVectors cv(3);
  cv.add("a", Eigen::MatrixXf::Random(3, 4));
  cv.add("b", Eigen::MatrixXf::Random(3, 1));
  const auto bin = cv.to_binary();
  EXPECT_EQ(ContextVectors::from_binary(bin).to_binary(), bin);
  EXPECT_EQ(ContextVectors::from_jsonl(cv.to_jsonl()).to_binary(), bin);
  test::TempDir tmp;
  cv.save(tmp.file("c.bin"));
  cv.save(tmp.file("c.jsonl"), false);
  EXPECT_EQ(ContextVectors::load(tmp.file("c.bin")).to_binary(), bin);
  EXPECT_EQ(ContextVectors::load(tmp.file("c.jsonl")).to_binary(), bin);
  EXPECT_THROW(cv.add("a", Eigen::MatrixXf::Zero(3, 1)), DataError);
  EXPECT_THROW(cv.add("c", Eigen::MatrixXf::Zero(2, 1)), DataError);
  EXPECT_THROW(ContextVectors::from_binary(bin.substr(0, bin.size() - 1)), DataError);
  EXPECT_THROW(ContextVectors::from_jsonl("{\"dim\": 2}\n{\"id\": \"a\", \"vectors\": [[1]]}\n"), DataError);
}

TEST(IndexSequence, ErrorsAndFallbackPos) {
  const auto s = seq_of("x", "@fema need flooding in Houston #help http://t.co/a 42");
  const auto vocab = build_vocab({s});
  FeatureConfig cfg;
  cfg.variant = Variant::mtl_ipa_pos;
  FeatureResources res{&vocab, nullptr, &inventory(), &g2p(), nullptr};
  EXPECT_THROW(index_sequence(s, cfg, res), DataError);
  const auto pos = FallbackPosTagger::load(data_path("pos_lexicon.tsv"));
  res.pos_tagger = &pos;
  const auto in = index_sequence(s, cfg, res);
  ASSERT_EQ(in.pos_ids.size(), s.tokens.size());
  EXPECT_EQ(kPosTags[in.pos_ids[0]], "V");
  EXPECT_EQ(kPosTags[in.pos_ids[1]], "N");
  EXPECT_EQ(kPosTags[in.pos_ids[2]], "P");
  EXPECT_EQ(kPosTags[in.pos_ids[3]], "^");
  EXPECT_EQ(kPosTags[in.pos_ids[4]], "^");
  EXPECT_EQ(kPosTags[in.pos_ids.back()], "$");
  cfg.variant = Variant::mtl_ctx;
  cfg.d_ctx = 4;
  EXPECT_THROW(index_sequence(s, cfg, res), ConfigError);
  ContextVectors ctx(4);
  res.context = &ctx;
  EXPECT_THROW(index_sequence(s, cfg, res), DataError);
  ctx.add("x", Eigen::MatrixXf::Zero(4, 2));
  EXPECT_THROW(index_sequence(s, cfg, res), DataError);
  EXPECT_THROW(FallbackPosTagger(std::unordered_map<std::string, std::string>{{"x", "QQ"}}), DataError);
}
