#pragma once

#include <vector>

#include "dtag/nn/gradcheck.hpp"
#include "dtag/tagger.hpp"

namespace dtag::test {

/// A tiny double-precision tagger with one fixed T=4 sequence.
struct TinyProblem {
  FeatureConfig fcfg;
  ModelConfig mcfg;
  Eigen::MatrixXd phon_features;
  SequenceInput input;
  std::vector<Tag> tags{Tag::S, Tag::O, Tag::B, Tag::E};
  std::vector<int> aux{1, 0, 1, 1};
  JointTagger<double> model;
};

inline TinyProblem make_tiny_problem(Variant variant, double dropout, double aux_weight, std::uint64_t seed = 11) {
  TinyProblem p;
  p.fcfg.variant = variant;
  p.fcfg.d_word = 3;
  p.fcfg.d_pos = 2;
  p.fcfg.d_ipa = 3;
  p.fcfg.n_phon_features = 3;
  p.fcfg.n_filters = 4;
  p.fcfg.kernel = 3;
  p.fcfg.d_ctx = 4;
  p.mcfg.d_hidden = 3;
  p.mcfg.dropout = dropout;
  p.mcfg.aux_weight = aux_weight;
  p.mcfg.d_input = p.fcfg.input_dim();

  Rng rng(seed);
  const int n_phonemes = 5, vocab_size = 5;
  p.phon_features.resize(p.fcfg.n_phon_features, n_phonemes);
  for (Eigen::Index j = 0; j < n_phonemes; ++j) {
    for (Eigen::Index i = 0; i < p.fcfg.n_phon_features; ++i) p.phon_features(i, j) = static_cast<double>(uniform_index(rng, 3)) - 1.0;
  }
  p.input.word_ids = {0, 3, 4, 1};
  if (uses_ipa_pos(variant)) {
    p.input.pos_ids = {0, 2, 24, 5};
    p.input.phonemes = {{1}, {0, 2}, {4, 3, 1, 2}, {2, 2, 0}};
  }
  if (uses_context(variant)) {
    p.input.context.resize(p.fcfg.d_ctx, 4);
    for (Eigen::Index i = 0; i < p.input.context.size(); ++i) p.input.context.data()[i] = static_cast<float>(uniform(rng, -1, 1));
  }
  p.model = JointTagger<double>(p.mcfg, p.fcfg, vocab_size, p.phon_features);
  p.model.init(rng);
  // Nonzero biases so every term of the backward pass is exercised.
  for (auto* param : p.model.parameters()) {
    if (param->value.cols() == 1) nn::fill_uniform(param->value, rng, 0.5);
  }
  return p;
}

/// Analytic versus central-difference gradients for every parameter group.
/// With dropout the same masks are replayed for every evaluation.
inline std::vector<nn::GradCheckResult> tiny_gradcheck(TinyProblem& p, std::uint64_t mask_seed = 5) {
  auto& m = p.model;
  const bool drop = p.mcfg.dropout > 0;
  m.zero_grad();
  {
    Rng r(mask_seed);
    JointTagger<double>::Cache cache;
    const auto out = m.forward(p.input, drop ? &r : nullptr, &cache);
    m.backward(p.input, cache, out, p.tags, p.aux);
  }
  const auto params = m.parameters();
  std::vector<Mat<double>> analytic;
  for (auto* param : params) analytic.push_back(param->grad);
  auto loss = [&]() {
    Rng r(mask_seed);
    const auto out = m.forward(p.input, drop ? &r : nullptr);
    return sequence_loss(out.aux_logits, out.main_logits, p.tags, p.aux, p.mcfg.aux_weight);
  };
  return nn::check_gradients<double>(params, analytic, loss, 1e-6);
}

}  // namespace dtag::test
