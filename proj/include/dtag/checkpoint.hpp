#pragma once

#include <array>
#include <cstdint>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtag/binary_io.hpp"
#include "dtag/trainer.hpp"

namespace dtag {

// Layout (all integers little-endian):
//   "DTAGCKPT" | u32 version | str config-json
//   | u64 step | str rng | f64 best_f1 | i32 best_epoch | i32 bad_epochs | i32 epoch
//   | u32 n_params | n x (str name | u64 rows | u64 cols | values | m | v)
//   | u64 fnv1a of everything before it
// where str is a u64 length followed by the bytes and values are raw
// scalars of the checkpoint dtype.
inline constexpr std::string_view kCheckpointMagic = "DTAGCKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename S>
constexpr std::string_view dtype_name() {
  static_assert(std::is_same_v<S, float> || std::is_same_v<S, double>);
  return std::is_same_v<S, float> ? "float32" : "float64";
}

/// The configuration block: model and feature configs, vocabulary,
/// phoneme inventory and scalar type.
template <typename S>
nlohmann::json checkpoint_config(const TrainState<S>& st) {
  nlohmann::json feats = nlohmann::json::array();
  for (Eigen::Index j = 0; j < st.phon_features.cols(); ++j) {
    std::vector<int> col;
    for (Eigen::Index i = 0; i < st.phon_features.rows(); ++i) col.push_back(static_cast<int>(st.phon_features(i, j)));
    feats.push_back(col);
  }
  return {{"model", st.model.config().to_json()},
          {"features", st.model.feature_config().to_json()},
          {"vocab", st.vocab.words},
          {"phonemes", st.phonemes},
          {"phon_features", feats},
          {"dtype", std::string(dtype_name<S>())}};
}

/// Human-readable list of fields that differ between two config blocks.
inline std::vector<std::string> config_differences(const nlohmann::json& saved, const nlohmann::json& expected,
                                                   const std::string& prefix = "") {
  std::vector<std::string> out;
  if (saved.is_object() && expected.is_object()) {
    for (const auto& [k, v] : expected.items()) {
      const auto key = prefix.empty() ? k : prefix + "." + k;
      if (!saved.contains(k)) {
        out.push_back(key + ": missing in checkpoint");
        continue;
      }
      auto sub = config_differences(saved.at(k), v, key);
      out.insert(out.end(), sub.begin(), sub.end());
    }
    return out;
  }
  if (saved != expected) {
    auto brief = [](const nlohmann::json& j) {
      auto s = j.dump();
      return s.size() > 60 ? s.substr(0, 57) + "..." : s;
    };
    out.push_back(prefix + ": checkpoint " + brief(saved) + ", expected " + brief(expected));
  }
  return out;
}

template <typename S>
std::string serialize_checkpoint(TrainState<S>& st) {
  ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.str(checkpoint_config(st).dump());
  w.put<std::uint64_t>(st.optimizer.step);
  std::ostringstream rng;
  rng << st.rng;
  w.str(rng.str());
  w.put<double>(st.best_f1);
  w.put<std::int32_t>(st.best_epoch);
  w.put<std::int32_t>(st.bad_epochs);
  w.put<std::int32_t>(st.epoch);
  const auto params = st.model.parameters();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& p = *params[k];
    w.str(p.name);
    w.put<std::uint64_t>(static_cast<std::uint64_t>(p.value.rows()));
    w.put<std::uint64_t>(static_cast<std::uint64_t>(p.value.cols()));
    for (const Mat<S>* m : std::array<const Mat<S>*, 3>{&p.value, &st.optimizer.m[k], &st.optimizer.v[k]}) {
      for (Eigen::Index i = 0; i < m->size(); ++i) w.put<S>(m->data()[i]);
    }
  }
  const auto sum = fnv1a(w.data());
  w.put<std::uint64_t>(sum);
  return w.take();
}

template <typename S>
void save_checkpoint(TrainState<S>& st, const std::string& path) {
  write_file(path, serialize_checkpoint(st));
}

/// Reads the config block only (after validating the container).
inline nlohmann::json read_checkpoint_config(std::string_view bytes, const std::string& what = "checkpoint") {
  if (bytes.size() < kCheckpointMagic.size() || bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
    throw DataError(what + ": not a checkpoint (bad magic)");
  }
  if (bytes.size() < kCheckpointMagic.size() + 12) throw DataError(what + ": checksum mismatch (file truncated)");
  const auto body = bytes.substr(0, bytes.size() - 8);
  ByteReader tail(bytes.substr(bytes.size() - 8), what);
  if (tail.get<std::uint64_t>() != fnv1a(body)) throw DataError(what + ": checksum mismatch (corrupt or truncated file)");
  ByteReader r(body, what);
  r.bytes(kCheckpointMagic.size());
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw DataError(what + ": unsupported checkpoint version " + std::to_string(version) + " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  try {
    return nlohmann::json::parse(r.str());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(what + ": bad config block: " + e.what());
  }
}

/// Restores a state. When `expected` is given (a partial config block), any
/// differing field is reported in one error.
template <typename S>
TrainState<S> deserialize_checkpoint(std::string_view bytes, const std::string& what = "checkpoint",
                                     const nlohmann::json* expected = nullptr) {
  const auto cfg = read_checkpoint_config(bytes, what);
  if (expected) {
    const auto diffs = config_differences(cfg, *expected);
    if (!diffs.empty()) {
      std::string msg = what + ": checkpoint does not match the requested configuration:";
      for (const auto& d : diffs) msg += "\n  " + d;
      throw ConfigError(msg);
    }
  }
  if (cfg.at("dtype").get<std::string>() != dtype_name<S>()) {
    throw DataError(what + ": checkpoint dtype " + cfg.at("dtype").get<std::string>() + ", expected " + std::string(dtype_name<S>()));
  }
  ByteReader r(bytes.substr(0, bytes.size() - 8), what);
  r.bytes(kCheckpointMagic.size());
  r.get<std::uint32_t>();
  r.str();

  TrainState<S> st;
  try {
    st.vocab = WordVocab(cfg.at("vocab").get<std::vector<std::string>>());
    st.phonemes = cfg.at("phonemes").get<std::vector<std::string>>();
    const auto feats = cfg.at("phon_features").get<std::vector<std::vector<int>>>();
    const auto nf = feats.empty() ? 0 : feats[0].size();
    st.phon_features.resize(static_cast<Eigen::Index>(nf), static_cast<Eigen::Index>(feats.size()));
    for (std::size_t j = 0; j < feats.size(); ++j) {
      for (std::size_t i = 0; i < nf; ++i) st.phon_features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = feats[j].at(i);
    }
    st.model = JointTagger<S>(ModelConfig::from_json(cfg.at("model")), FeatureConfig::from_json(cfg.at("features")),
                              st.vocab.size(), st.phon_features);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(what + ": bad config block: " + e.what());
  }
  const auto params = st.model.parameters();
  st.optimizer.init(params);
  st.optimizer.step = r.get<std::uint64_t>();
  std::istringstream rng(r.str());
  rng >> st.rng;
  if (!rng) throw DataError(what + ": bad RNG state");
  st.best_f1 = r.get<double>();
  st.best_epoch = r.get<std::int32_t>();
  st.bad_epochs = r.get<std::int32_t>();
  st.epoch = r.get<std::int32_t>();
  const auto n = r.get<std::uint32_t>();
  if (n != params.size()) throw DataError(what + ": " + std::to_string(n) + " parameter arrays, model has " + std::to_string(params.size()));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    const auto name = r.str();
    const auto rows = r.get<std::uint64_t>(), cols = r.get<std::uint64_t>();
    if (name != p.name || rows != static_cast<std::uint64_t>(p.value.rows()) || cols != static_cast<std::uint64_t>(p.value.cols())) {
      throw DataError(what + ": parameter '" + name + "' does not match model parameter '" + p.name + "'");
    }
    for (auto* m : {&p.value, &st.optimizer.m[k], &st.optimizer.v[k]}) {
      for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = r.get<S>();
    }
  }
  if (r.remaining() != 0) throw DataError(what + ": trailing bytes");
  return st;
}

template <typename S>
TrainState<S> load_checkpoint(const std::string& path, const nlohmann::json* expected = nullptr) {
  return deserialize_checkpoint<S>(read_file(path), path, expected);
}

}  // namespace dtag
