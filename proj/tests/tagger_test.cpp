#include <gtest/gtest.h>

#include <cmath>

#include "dtag/trainer.hpp"
#include "gradcheck_support.hpp"
#include "synthetic.hpp"
#include "test_support.hpp"

using namespace dtag;

namespace {

constexpr Variant kVariants[] = {Variant::mtl, Variant::mtl_ctx, Variant::mtl_ipa_pos, Variant::mtl_ctx_ipa_pos};

TrainData synthetic_data(std::size_t n, std::uint64_t seed, const WordVocab* vocab_in, WordVocab* vocab_out,
                         const FeatureConfig& fcfg) {
  const auto corpus = test::make_synthetic_corpus(n, 0.3, seed);
  const Lexicon lex(corpus.lexicon);
  std::vector<LabeledSequence> seqs;
  for (const auto& r : corpus.tweets) seqs.push_back(annotate(r, lex, test::text_resources()));
  if (vocab_out) *vocab_out = build_vocab(seqs);
  FeatureResources res;
  res.vocab = vocab_in ? vocab_in : vocab_out;
  return make_train_data(seqs, fcfg, res);
}

}  // namespace

TEST(JointTagger, ZeroParametersGiveUniformPredictions) {
  for (double lambda : {0.0, 0.5, 1.0}) {
    auto p = test::make_tiny_problem(Variant::mtl_ipa_pos, 0.0, lambda);
    for (auto* param : p.model.parameters()) param->value.setZero();
    const auto out = p.model.forward(p.input);
    EXPECT_TRUE(out.main_logits.isZero());
    EXPECT_TRUE(out.aux_logits.isZero());
    const double loss = sequence_loss(out.aux_logits, out.main_logits, p.tags, p.aux, lambda);
    EXPECT_NEAR(loss, std::log(5.0) + lambda * std::log(2.0), 1e-12);
  }
}

TEST(JointTagger, OutputShapesPerVariant) {
  for (auto v : kVariants) {
    auto p = test::make_tiny_problem(v, 0.0, 0.5);
    const auto out = p.model.forward(p.input);
    EXPECT_EQ(out.main_logits.rows(), kNumTags);
    EXPECT_EQ(out.aux_logits.rows(), kNumAuxLabels);
    EXPECT_EQ(out.main_logits.cols(), 4);
    EXPECT_EQ(p.model.encoder.input_dim(), p.fcfg.input_dim());
  }
}

TEST(JointTagger, GradientsMatchFiniteDifferences) {
  for (auto v : kVariants) {
    for (double dropout : {0.0, 0.5}) {
      auto p = test::make_tiny_problem(v, dropout, 0.5);
      for (const auto& r : test::tiny_gradcheck(p)) {
        EXPECT_LT(r.rel_error, 1e-5) << to_string(v) << " dropout " << dropout << " " << r.name;
      }
    }
  }
}

TEST(JointTagger, ZeroAuxWeightGivesNoAuxHeadGradient) {
  auto p = test::make_tiny_problem(Variant::mtl, 0.0, 0.0);
  p.model.zero_grad();
  JointTagger<double>::Cache cache;
  const auto out = p.model.forward(p.input, nullptr, &cache);
  p.model.backward(p.input, cache, out, p.tags, p.aux);
  EXPECT_TRUE(p.model.aux_w.grad.isZero());
  EXPECT_TRUE(p.model.aux_b.grad.isZero());
  EXPECT_FALSE(p.model.main_w.grad.isZero());
  EXPECT_FALSE(p.model.layer1.fwd.w.grad.isZero());
}

TEST(JointTagger, EvalModeIsDeterministicAndTrainModeDrops) {
  auto p = test::make_tiny_problem(Variant::mtl, 0.5, 0.5);
  const auto a = p.model.forward(p.input), b = p.model.forward(p.input);
  EXPECT_EQ(a.main_logits, b.main_logits);
  Rng rng(3);
  JointTagger<double>::Cache cache;
  const auto t = p.model.forward(p.input, &rng, &cache);
  EXPECT_NE(t.main_logits, a.main_logits);
  EXPECT_EQ(cache.mask1.cols(), 4);
  EXPECT_EQ(cache.mask2.rows(), 2 * p.mcfg.d_hidden);
}

TEST(Decode, ArgmaxThenRepair) {
  Mat<double> logits = Mat<double>::Zero(kNumTags, 6);
  const Tag argmax[] = {Tag::M, Tag::B, Tag::M, Tag::O, Tag::B, Tag::S};
  for (int t = 0; t < 6; ++t) logits(static_cast<int>(argmax[t]), t) = 1;
  // M -> O; B M then O closes at the M; lone B becomes S.
  EXPECT_EQ(decode(logits), (std::vector<TokenRange>{{1, 3}, {4, 5}, {5, 6}}));
  EXPECT_TRUE(decode(Mat<double>(kNumTags, 0)).empty());
}

TEST(ModelConfig, Validation) {
  ModelConfig c;
  c.d_input = 4;
  EXPECT_NO_THROW(c.validate());
  auto bad = [&](auto mutate) {
    ModelConfig m = c;
    mutate(m);
    EXPECT_THROW(m.validate(), ConfigError);
  };
  bad([](ModelConfig& m) { m.aux_weight = 1.5; });
  bad([](ModelConfig& m) { m.dropout = 1.0; });
  bad([](ModelConfig& m) { m.lr = 0; });
  bad([](ModelConfig& m) { m.d_hidden = 0; });
  bad([](ModelConfig& m) { m.batch_size = 0; });
  bad([](ModelConfig& m) { m.beta1 = 1.0; });
  EXPECT_EQ(ModelConfig::from_json(c.to_json()).to_json(), c.to_json());
  FeatureConfig f;
  f.d_word = 4;
  c.d_input = 5;
  EXPECT_THROW(JointTagger<float>(c, f, 3, Eigen::MatrixXd()), ConfigError);
}

TEST(Trainer, SeededRunsAreIdenticalAndKeepBestEpoch) {
  FeatureConfig fcfg;
  fcfg.d_word = 8;
  ModelConfig mcfg;
  mcfg.d_hidden = 8;
  mcfg.epochs = 4;
  mcfg.batch_size = 8;
  mcfg.lr = 0.01;
  mcfg.seed = 21;
  WordVocab vocab;
  const auto train_set = synthetic_data(60, 1, nullptr, &vocab, fcfg);
  const auto dev_set = synthetic_data(20, 2, &vocab, nullptr, fcfg);
  auto run = [&] { return train(make_train_state<float>(mcfg, fcfg, vocab), train_set, dev_set); };
  const auto a = run(), b = run();
  EXPECT_EQ(format_log(a.log, false), format_log(b.log, false));
  ASSERT_FALSE(a.log.empty());
  double best = -1;
  int best_epoch = 0;
  for (const auto& r : a.log) {
    if (r.dev_f1 > best) {
      best = r.dev_f1;
      best_epoch = r.epoch;
    }
  }
  EXPECT_EQ(a.best.best_epoch, best_epoch);
  EXPECT_EQ(a.best.epoch, best_epoch);
  EXPECT_DOUBLE_EQ(evaluate_model(a.best.model, dev_set).f1, best);
  EXPECT_LT(a.log.back().train_loss, a.log.front().train_loss);
}

TEST(Trainer, EarlyStoppingAndEmptySets) {
  FeatureConfig fcfg;
  fcfg.d_word = 4;
  ModelConfig mcfg;
  mcfg.d_hidden = 4;
  mcfg.epochs = 50;
  mcfg.patience = 1;
  mcfg.lr = 1e-9;
  WordVocab vocab;
  const auto data = synthetic_data(10, 5, nullptr, &vocab, fcfg);
  const auto r = train(make_train_state<float>(mcfg, fcfg, vocab), data, data);
  EXPECT_TRUE(r.early_stopped);
  EXPECT_EQ(r.log.size(), 2u);
  EXPECT_THROW(train(make_train_state<float>(mcfg, fcfg, vocab), TrainData{}, data), DataError);
  EXPECT_THROW(train(make_train_state<float>(mcfg, fcfg, vocab), data, TrainData{}), DataError);
}
