#pragma once

#include <chrono>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtag/evaluation.hpp"
#include "dtag/features.hpp"
#include "dtag/lexicon.hpp"
#include "dtag/tagger.hpp"

namespace dtag {

/// Everything needed to resume training or run inference, apart from the
/// external lookup resources (G2P rules, POS lexicon, contextual vectors).
template <typename S>
struct TrainState {
  JointTagger<S> model;
  WordVocab vocab;
  std::vector<std::string> phonemes;
  Eigen::MatrixXd phon_features;
  nn::NadamState<S> optimizer;
  Rng rng;
  double best_f1 = -1;
  int best_epoch = 0;
  int bad_epochs = 0;
  int epoch = 0;
};

/// Fresh state: model initialized from `cfg.seed`, zero moments.
template <typename S>
TrainState<S> make_train_state(const ModelConfig& cfg, const FeatureConfig& fcfg, WordVocab vocab,
                               const PhonemeInventory* inventory = nullptr, const EmbeddingTable* pretrained = nullptr) {
  TrainState<S> st;
  st.vocab = std::move(vocab);
  if (inventory) {
    st.phonemes = inventory->phonemes;
    st.phon_features = inventory->features;
  } else if (uses_ipa_pos(fcfg.variant)) {
    throw ConfigError("phoneme inventory required for variant " + std::string(to_string(fcfg.variant)));
  }
  st.model = JointTagger<S>(cfg, fcfg, st.vocab.size(), st.phon_features);
  st.rng.seed(cfg.seed);
  st.model.init(st.rng);
  if (pretrained) st.model.encoder.load_pretrained(*pretrained, st.vocab);
  st.optimizer.init(st.model.parameters());
  return st;
}

/// Indexed sequences with their labels.
struct TrainData {
  std::vector<std::string> ids;
  std::vector<SequenceInput> inputs;
  std::vector<std::vector<Tag>> tags;
  std::vector<std::vector<int>> aux;
  std::vector<std::vector<TokenRange>> gold;

  std::size_t size() const { return inputs.size(); }
};

inline TrainData make_train_data(const std::vector<LabeledSequence>& seqs, const FeatureConfig& fcfg,
                                 const FeatureResources& res) {
  TrainData d;
  for (const auto& s : seqs) {
    d.ids.push_back(s.id);
    d.inputs.push_back(index_sequence(s, fcfg, res));
    d.tags.push_back(s.main_tags);
    d.aux.push_back(s.aux_labels);
    std::vector<TokenRange> g;
    for (const auto& sp : s.spans) g.push_back(sp.range);
    d.gold.push_back(std::move(g));
  }
  return d;
}

template <typename S>
std::vector<TokenRange> predict_spans(const JointTagger<S>& model, const SequenceInput& in) {
  if (in.size() == 0) return {};
  return decode(model.forward(in).main_logits);
}

/// Exact-span score of the model over a labeled set (evaluation mode).
template <typename S>
Score evaluate_model(const JointTagger<S>& model, const TrainData& data) {
  std::vector<SpanSet> pred, gold;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto id = std::to_string(i);
    pred.push_back({id, predict_spans(model, data.inputs[i])});
    gold.push_back({id, data.gold[i]});
  }
  return score_spans(pred, gold).score;
}

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double dev_precision = 0;
  double dev_recall = 0;
  double dev_f1 = 0;
  double seconds = 0;

  nlohmann::json to_json() const {
    return {{"epoch", epoch}, {"train_loss", train_loss}, {"dev_precision", dev_precision},
            {"dev_recall", dev_recall}, {"dev_f1", dev_f1}, {"seconds", seconds}};
  }
};

template <typename S>
struct TrainResult {
  TrainState<S> best;  // state at the end of the best dev epoch
  std::vector<EpochRecord> log;
  bool early_stopped = false;
};

/// Mean loss over one batch; accumulates the matching gradients (the
/// gradient of the batch mean). Sequences are reduced in index order.
template <typename S>
double train_batch(TrainState<S>& st, const TrainData& data, const std::vector<std::size_t>& batch) {
  auto& model = st.model;
  model.zero_grad();
  const S scale = S(1) / static_cast<S>(batch.size());
  double total = 0;
  for (auto idx : batch) {
    typename JointTagger<S>::Cache cache;
    const auto out = model.forward(data.inputs[idx], &st.rng, &cache);
    const S l = sequence_loss(out.aux_logits, out.main_logits, data.tags[idx], data.aux[idx], model.config().aux_weight);
    if (!std::isfinite(static_cast<double>(l))) throw DivergenceError("loss is not finite (sequence " + data.ids[idx] + ")");
    total += static_cast<double>(l);
    model.backward(data.inputs[idx], cache, out, data.tags[idx], data.aux[idx], scale);
  }
  nn::nadam_step(model.parameters(), st.optimizer, model.config().optimizer());
  return total / static_cast<double>(batch.size());
}

/// Epoch loop with seeded shuffling, per-epoch dev exact-span F1, best-on-dev
/// retention and early stopping after `patience` epochs without improvement.
template <typename S>
TrainResult<S> train(TrainState<S> st, const TrainData& train_set, const TrainData& dev_set,
                     const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  if (train_set.size() == 0) throw DataError("empty training corpus");
  if (dev_set.size() == 0) throw DataError("empty validation corpus");
  const auto& cfg = st.model.config();
  TrainResult<S> result;
  result.best = st;
  const int last_epoch = st.epoch + cfg.epochs;
  while (st.epoch < last_epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order, st.rng);
    double loss_sum = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      const auto e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
      std::vector<std::size_t> batch(order.begin() + static_cast<long>(b), order.begin() + static_cast<long>(e));
      loss_sum += train_batch(st, train_set, batch) * static_cast<double>(batch.size());
    }
    ++st.epoch;
    const auto dev = evaluate_model(st.model, dev_set);
    EpochRecord rec;
    rec.epoch = st.epoch;
    rec.train_loss = loss_sum / static_cast<double>(train_set.size());
    rec.dev_precision = dev.precision;
    rec.dev_recall = dev.recall;
    rec.dev_f1 = dev.f1;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (dev.f1 > st.best_f1) {
      st.best_f1 = dev.f1;
      st.best_epoch = st.epoch;
      st.bad_epochs = 0;
      result.best = st;
    } else if (++st.bad_epochs >= cfg.patience) {
      result.early_stopped = true;
      break;
    }
  }
  return result;
}

/// JSONL epoch log; `with_time` false drops the wall-clock field.
inline std::string format_log(const std::vector<EpochRecord>& log, bool with_time = true) {
  std::string out;
  for (const auto& r : log) {
    auto j = r.to_json();
    if (!with_time) j.erase("seconds");
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace dtag
