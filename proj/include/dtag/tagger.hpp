#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtag/features.hpp"
#include "dtag/nn/lstm.hpp"
#include "dtag/nn/nadam.hpp"
#include "dtag/tags.hpp"

namespace dtag {

struct ModelConfig {
  int d_input = 0;  // filled from the feature config
  int d_hidden = 300;
  int n_main_tags = kNumTags;
  double aux_weight = 0.5;
  double dropout = 0.5;
  double lr = 0.0015;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 1;
  int epochs = 30;
  int batch_size = 16;
  int patience = 5;

  void validate() const {
    if (d_input <= 0 || d_hidden <= 0) throw ConfigError("d_input and d_hidden must be positive");
    if (n_main_tags != kNumTags) throw ConfigError("n_main_tags must be " + std::to_string(kNumTags));
    if (!(aux_weight >= 0 && aux_weight <= 1)) throw ConfigError("aux_weight must be in [0, 1]");
    if (!(dropout >= 0 && dropout < 1)) throw ConfigError("dropout must be in [0, 1)");
    if (!(lr > 0)) throw ConfigError("lr must be positive");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw ConfigError("betas must be in [0, 1)");
    if (!(eps > 0)) throw ConfigError("eps must be positive");
    if (epochs <= 0 || batch_size <= 0 || patience <= 0) throw ConfigError("epochs, batch_size and patience must be positive");
  }

  nn::NadamConfig optimizer() const { return {lr, beta1, beta2, eps}; }

  nlohmann::json to_json() const {
    return {{"d_input", d_input}, {"d_hidden", d_hidden}, {"n_main_tags", n_main_tags},
            {"aux_weight", aux_weight}, {"dropout", dropout}, {"lr", lr},
            {"beta1", beta1}, {"beta2", beta2}, {"eps", eps},
            {"seed", seed}, {"epochs", epochs}, {"batch_size", batch_size},
            {"patience", patience}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.d_input = j.at("d_input");
    c.d_hidden = j.at("d_hidden");
    c.n_main_tags = j.at("n_main_tags");
    c.aux_weight = j.at("aux_weight");
    c.dropout = j.at("dropout");
    c.lr = j.at("lr");
    c.beta1 = j.at("beta1");
    c.beta2 = j.at("beta2");
    c.eps = j.at("eps");
    c.seed = j.at("seed");
    c.epochs = j.at("epochs");
    c.batch_size = j.at("batch_size");
    c.patience = j.at("patience");
    return c;
  }
};

/// Inverted dropout mask: each entry is 0 with probability p, else 1/(1-p).
template <typename S>
Mat<S> dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  Mat<S> m(rows, cols);
  const S keep = static_cast<S>(1.0 / (1.0 - p));
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = uniform01(rng) < p ? S(0) : keep;
  }
  return m;
}

/// Mean main-task cross-entropy plus `aux_weight` times mean auxiliary
/// cross-entropy. Logits are classes x T.
template <typename S>
S sequence_loss(const Mat<S>& aux_logits, const Mat<S>& main_logits, const std::vector<Tag>& tags,
                const std::vector<int>& aux, double aux_weight) {
  const auto n = main_logits.cols();
  if (n == 0) return S(0);
  if (static_cast<std::size_t>(n) != tags.size() || aux_logits.cols() != n || aux.size() != tags.size()) {
    throw std::invalid_argument("logit/label length mismatch");
  }
  const Mat<S> lm = nn::log_softmax_cols(main_logits), la = nn::log_softmax_cols(aux_logits);
  S main = 0, side = 0;
  for (Eigen::Index t = 0; t < n; ++t) {
    main -= lm(static_cast<int>(tags[t]), t);
    side -= la(aux[t], t);
  }
  return main / static_cast<S>(n) + static_cast<S>(aux_weight) * side / static_cast<S>(n);
}

/// Argmax tags, repaired to a well-formed sequence, then spans.
template <typename S>
std::vector<TokenRange> decode(const Mat<S>& main_logits) {
  std::vector<Tag> tags;
  for (Eigen::Index t = 0; t < main_logits.cols(); ++t) {
    Eigen::Index best = 0;
    main_logits.col(t).maxCoeff(&best);
    tags.push_back(static_cast<Tag>(best));
  }
  return decode_tags(tags);
}

/// Joint-layer stacked Bi-LSTM: the auxiliary keyword head reads layer 1,
/// the main S/B/M/E/O head reads layer 2, which runs over layer 1's states.
/// Dropout applies to the inputs of both Bi-LSTM layers.
template <typename S>
class JointTagger {
 public:
  struct Cache {
    typename FeatureEncoder<S>::Cache features;
    Mat<S> mask1, mask2;  // empty outside training
    typename nn::BiLstm<S>::Cache layer1, layer2;
    Mat<S> h1, h2;
  };

  struct Output {
    Mat<S> aux_logits;   // 2 x T
    Mat<S> main_logits;  // 5 x T
  };

  JointTagger() = default;
  JointTagger(const ModelConfig& cfg, const FeatureConfig& fcfg, int vocab_size, const Eigen::MatrixXd& phon_features)
      : encoder(fcfg, vocab_size, phon_features),
        layer1("layer1", fcfg.input_dim(), cfg.d_hidden),
        layer2("layer2", 2 * cfg.d_hidden, cfg.d_hidden),
        aux_w("aux_head.W", kNumAuxLabels, 2 * cfg.d_hidden),
        aux_b("aux_head.b", kNumAuxLabels, 1),
        main_w("main_head.W", kNumTags, 2 * cfg.d_hidden),
        main_b("main_head.b", kNumTags, 1),
        cfg_(cfg) {
    if (cfg_.d_input == 0) cfg_.d_input = fcfg.input_dim();
    if (cfg_.d_input != fcfg.input_dim()) {
      throw ConfigError("d_input " + std::to_string(cfg_.d_input) + " does not match feature dimension " + std::to_string(fcfg.input_dim()));
    }
    cfg_.validate();
  }

  const ModelConfig& config() const { return cfg_; }
  ModelConfig& config() { return cfg_; }
  const FeatureConfig& feature_config() const { return encoder.config(); }

  /// Encoder tables, then layer 1, layer 2, auxiliary head, main head.
  void init(Rng& rng) {
    encoder.init(rng);
    layer1.init(rng);
    layer2.init(rng);
    const double bound = 1.0 / std::sqrt(static_cast<double>(2 * cfg_.d_hidden));
    nn::fill_uniform(aux_w.value, rng, bound);
    nn::fill_uniform(main_w.value, rng, bound);
    aux_b.value.setZero();
    main_b.value.setZero();
  }

  ParamList<S> parameters() {
    auto out = encoder.parameters();
    for (auto* p : layer1.parameters()) out.push_back(p);
    for (auto* p : layer2.parameters()) out.push_back(p);
    for (auto* p : {&aux_w, &aux_b, &main_w, &main_b}) out.push_back(p);
    return out;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  /// With `rng` null the pass is in evaluation mode (no dropout) and
  /// deterministic.
  Output forward(const SequenceInput& in, Rng* rng = nullptr, Cache* cache = nullptr) const {
    Cache local;
    Cache& c = cache ? *cache : local;
    const bool train = rng != nullptr && cfg_.dropout > 0;
    Mat<S> x = encoder.forward(in, cache ? &c.features : nullptr);
    if (x.rows() != cfg_.d_input) throw DataError("feature dimension mismatch");
    if (train) {
      c.mask1 = dropout_mask<S>(x.rows(), x.cols(), cfg_.dropout, *rng);
      x.array() *= c.mask1.array();
    } else {
      c.mask1.resize(0, 0);
    }
    c.h1 = layer1.forward(x, cache ? &c.layer1 : nullptr);
    Output out;
    out.aux_logits = aux_w.value * c.h1;
    out.aux_logits.colwise() += aux_b.value.col(0);
    Mat<S> x2 = c.h1;
    if (train) {
      c.mask2 = dropout_mask<S>(x2.rows(), x2.cols(), cfg_.dropout, *rng);
      x2.array() *= c.mask2.array();
    } else {
      c.mask2.resize(0, 0);
    }
    c.h2 = layer2.forward(x2, cache ? &c.layer2 : nullptr);
    out.main_logits = main_w.value * c.h2;
    out.main_logits.colwise() += main_b.value.col(0);
    return out;
  }

  /// Accumulates `scale` times the gradient of sequence_loss.
  void backward(const SequenceInput& in, const Cache& c, const Output& out, const std::vector<Tag>& tags,
                const std::vector<int>& aux, S scale = S(1)) {
    const auto n = out.main_logits.cols();
    if (n == 0) return;
    Mat<S> dmain = nn::softmax_cols(out.main_logits);
    Mat<S> daux = nn::softmax_cols(out.aux_logits);
    for (Eigen::Index t = 0; t < n; ++t) {
      dmain(static_cast<int>(tags[t]), t) -= S(1);
      daux(aux[t], t) -= S(1);
    }
    dmain *= scale / static_cast<S>(n);
    daux *= scale * static_cast<S>(cfg_.aux_weight) / static_cast<S>(n);

    main_w.grad.noalias() += dmain * c.h2.transpose();
    main_b.grad.col(0) += dmain.rowwise().sum();
    Mat<S> dx2 = layer2.backward(c.layer2, main_w.value.transpose() * dmain);
    if (c.mask2.size()) dx2.array() *= c.mask2.array();

    aux_w.grad.noalias() += daux * c.h1.transpose();
    aux_b.grad.col(0) += daux.rowwise().sum();
    Mat<S> dh1 = dx2 + aux_w.value.transpose() * daux;
    Mat<S> dx = layer1.backward(c.layer1, dh1);
    if (c.mask1.size()) dx.array() *= c.mask1.array();
    encoder.backward(in, c.features, dx);
  }

  FeatureEncoder<S> encoder;
  nn::BiLstm<S> layer1;
  nn::BiLstm<S> layer2;
  Parameter<S> aux_w;
  Parameter<S> aux_b;
  Parameter<S> main_w;
  Parameter<S> main_b;

 private:
  ModelConfig cfg_;
};

}  // namespace dtag
