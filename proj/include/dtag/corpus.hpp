#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtag/textnorm.hpp"
#include "dtag/util.hpp"

namespace dtag {

enum class Relevance { on_topic = 0, off_topic = 1 };

inline std::string_view to_string(Relevance r) { return r == Relevance::on_topic ? "on_topic" : "off_topic"; }

inline Relevance relevance_from_string(std::string_view s) {
  if (s == "on_topic") return Relevance::on_topic;
  if (s == "off_topic") return Relevance::off_topic;
  throw DataError("unknown relevance label '" + std::string(s) + "'");
}

struct TweetRecord {
  std::string id;
  std::string text;
  std::string disaster;
  // Absent means "not supplied"; the annotator then takes the hashtags that
  // occur in the text.
  std::optional<std::vector<std::string>> user_hashtags;
  // Aligned to tokenize(text).
  std::optional<std::vector<std::string>> pos_tags;
  std::optional<Relevance> relevance_label;
  std::optional<std::string> lang;
};

enum class CorpusFormat { jsonl, tsv };

inline CorpusFormat corpus_format_from_string(std::string_view s) {
  if (s == "jsonl") return CorpusFormat::jsonl;
  if (s == "tsv") return CorpusFormat::tsv;
  throw ConfigError("unknown corpus format '" + std::string(s) + "' (expected jsonl or tsv)");
}

inline std::vector<std::string> json_string_array(const nlohmann::json& j, const char* key) {
  if (!j.is_array()) throw DataError(std::string("'") + key + "' must be an array of strings");
  std::vector<std::string> out;
  for (const auto& v : j) {
    if (!v.is_string()) throw DataError(std::string("'") + key + "' must be an array of strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

/// Parses one corpus object. Throws DataError on missing or mistyped fields.
inline TweetRecord tweet_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("record is not a JSON object");
  auto str = [&](const char* key, bool required) -> std::optional<std::string> {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
      if (required) throw DataError(std::string("missing '") + key + "'");
      return std::nullopt;
    }
    if (it->is_number_integer() && std::string_view(key) == "id") return std::to_string(it->get<long long>());
    if (!it->is_string()) throw DataError(std::string("'") + key + "' must be a string");
    return it->get<std::string>();
  };
  TweetRecord r;
  r.id = *str("id", true);
  r.text = *str("text", true);
  r.disaster = str("disaster", false).value_or("");
  r.lang = str("lang", false);
  if (auto it = j.find("user_hashtags"); it != j.end() && !it->is_null()) {
    r.user_hashtags = json_string_array(*it, "user_hashtags");
  }
  if (auto it = j.find("pos_tags"); it != j.end() && !it->is_null()) {
    r.pos_tags = json_string_array(*it, "pos_tags");
    const auto n = tokenize(r.text).size();
    if (r.pos_tags->size() != n) {
      throw DataError("pos_tags has " + std::to_string(r.pos_tags->size()) + " entries but text has " +
                      std::to_string(n) + " tokens");
    }
  }
  if (auto rel = str("relevance_label", false)) r.relevance_label = relevance_from_string(*rel);
  return r;
}

inline nlohmann::json tweet_to_json(const TweetRecord& r) {
  nlohmann::json j;
  j["id"] = r.id;
  j["text"] = r.text;
  j["disaster"] = r.disaster;
  if (r.user_hashtags) j["user_hashtags"] = *r.user_hashtags;
  if (r.pos_tags) j["pos_tags"] = *r.pos_tags;
  if (r.relevance_label) j["relevance_label"] = to_string(*r.relevance_label);
  if (r.lang) j["lang"] = *r.lang;
  return j;
}

struct CorpusLoad {
  std::vector<TweetRecord> records;
  std::vector<LineError> errors;
};

/// Reads a corpus file. Bad lines are skipped and reported; if more than
/// `max_errors` lines fail, loading aborts with DataError.
inline CorpusLoad load_corpus(const std::string& path, CorpusFormat format,
                              std::size_t max_errors = std::numeric_limits<std::size_t>::max()) {
  CorpusLoad out;
  std::unordered_set<std::string> ids;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& line = lines[i];
    if (trim(line).empty()) continue;
    try {
      TweetRecord r;
      if (format == CorpusFormat::jsonl) {
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
          throw DataError(std::string("invalid JSON: ") + e.what());
        }
        r = tweet_from_json(j);
      } else {
        const auto t1 = line.find('\t');
        const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
        if (t2 == std::string::npos) throw DataError("expected 'id<TAB>disaster<TAB>text'");
        r.id = line.substr(0, t1);
        r.disaster = line.substr(t1 + 1, t2 - t1 - 1);
        r.text = line.substr(t2 + 1);
        if (r.id.empty()) throw DataError("empty id");
      }
      if (!ids.insert(r.id).second) throw DataError("duplicate id '" + r.id + "'");
      out.records.push_back(std::move(r));
    } catch (const DataError& e) {
      out.errors.push_back({i + 1, e.what()});
      if (out.errors.size() > max_errors) {
        throw DataError(path + ": too many malformed records (" + std::to_string(out.errors.size()) +
                        "), last at line " + std::to_string(i + 1) + ": " + e.what());
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// relevance filter

/// Lowercased bag-of-words features: word, number and hashtag tokens.
inline std::vector<std::string> relevance_features(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& t : tokenize(text)) {
    if (t.kind == TokenKind::word || t.kind == TokenKind::number || t.kind == TokenKind::hashtag) {
      out.push_back(to_lower(t.surface));
    }
  }
  return out;
}

/// Multinomial Naive Bayes with Laplace smoothing. Class 0 is on_topic,
/// class 1 off_topic.
struct NaiveBayesModel {
  std::map<std::string, std::size_t> vocabulary;
  std::array<double, 2> class_log_priors{};
  std::array<std::vector<double>, 2> word_log_likelihoods;
  // log(alpha / (N_c + alpha |V|)): mass given to a word never seen in training.
  std::array<double, 2> unseen_log_likelihood{};
  double smoothing_alpha = 1.0;

  /// Class log prior plus the summed word log likelihoods.
  std::array<double, 2> joint_log_prob(const std::vector<std::string>& words) const {
    std::array<double, 2> s = class_log_priors;
    for (const auto& w : words) {
      auto it = vocabulary.find(w);
      for (int c = 0; c < 2; ++c) {
        s[c] += it == vocabulary.end() ? unseen_log_likelihood[c] : word_log_likelihoods[c][it->second];
      }
    }
    return s;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["format"] = "dtag-naive-bayes";
    j["version"] = 1;
    j["alpha"] = smoothing_alpha;
    j["class_log_priors"] = {{"on_topic", class_log_priors[0]}, {"off_topic", class_log_priors[1]}};
    j["unseen_log_likelihood"] = {{"on_topic", unseen_log_likelihood[0]}, {"off_topic", unseen_log_likelihood[1]}};
    nlohmann::json on = nlohmann::json::object(), off = nlohmann::json::object();
    for (const auto& [w, idx] : vocabulary) {
      on[w] = word_log_likelihoods[0][idx];
      off[w] = word_log_likelihoods[1][idx];
    }
    j["word_log_likelihoods"] = {{"on_topic", on}, {"off_topic", off}};
    return j;
  }

  static NaiveBayesModel from_json(const nlohmann::json& j) {
    try {
      if (j.at("format") != "dtag-naive-bayes" || j.at("version") != 1) {
        throw DataError("not a version-1 naive Bayes model");
      }
      NaiveBayesModel m;
      m.smoothing_alpha = j.at("alpha").get<double>();
      m.class_log_priors = {j.at("class_log_priors").at("on_topic").get<double>(),
                            j.at("class_log_priors").at("off_topic").get<double>()};
      m.unseen_log_likelihood = {j.at("unseen_log_likelihood").at("on_topic").get<double>(),
                                 j.at("unseen_log_likelihood").at("off_topic").get<double>()};
      const auto& on = j.at("word_log_likelihoods").at("on_topic");
      const auto& off = j.at("word_log_likelihoods").at("off_topic");
      for (auto it = on.begin(); it != on.end(); ++it) {
        m.vocabulary.emplace(it.key(), m.vocabulary.size());
        m.word_log_likelihoods[0].push_back(it.value().get<double>());
        m.word_log_likelihoods[1].push_back(off.at(it.key()).get<double>());
      }
      return m;
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("malformed naive Bayes model: ") + e.what());
    }
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << to_json().dump(1) << "\n";
  }

  static NaiveBayesModel load(const std::string& path) {
    try {
      return from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(path + ": " + e.what());
    }
  }
};

/// Trains on the records that carry a relevance label.
inline NaiveBayesModel train_naive_bayes(const std::vector<TweetRecord>& labeled, double alpha = 1.0) {
  if (!(alpha > 0)) throw ConfigError("smoothing alpha must be > 0");
  std::array<std::map<std::string, double>, 2> counts;
  std::array<double, 2> docs{0, 0}, totals{0, 0};
  std::set<std::string> vocab;
  for (const auto& r : labeled) {
    if (!r.relevance_label) continue;
    const int c = static_cast<int>(*r.relevance_label);
    docs[c] += 1;
    for (auto& w : relevance_features(r.text)) {
      counts[c][w] += 1;
      totals[c] += 1;
      vocab.insert(std::move(w));
    }
  }
  if (docs[0] + docs[1] == 0) throw DataError("no labeled records to train on");
  if (docs[0] == 0 || docs[1] == 0) throw DataError("naive Bayes needs both on_topic and off_topic records");

  NaiveBayesModel m;
  m.smoothing_alpha = alpha;
  for (const auto& w : vocab) m.vocabulary.emplace(w, m.vocabulary.size());
  const double v = static_cast<double>(vocab.size());
  for (int c = 0; c < 2; ++c) {
    m.class_log_priors[c] = std::log(docs[c] / (docs[0] + docs[1]));
    const double denom = totals[c] + alpha * v;
    m.unseen_log_likelihood[c] = std::log(alpha / denom);
    m.word_log_likelihoods[c].resize(vocab.size());
    for (const auto& [w, idx] : m.vocabulary) {
      auto it = counts[c].find(w);
      const double n = it == counts[c].end() ? 0.0 : it->second;
      m.word_log_likelihoods[c][idx] = std::log((n + alpha) / denom);
    }
  }
  return m;
}

struct RelevanceDecision {
  Relevance label = Relevance::on_topic;
  double posterior = 0.5;  // of the chosen label
};

/// Argmax of the joint log probability; exact ties go to on_topic.
inline RelevanceDecision classify_relevance(const NaiveBayesModel& model, const TweetRecord& tweet) {
  const auto s = model.joint_log_prob(relevance_features(tweet.text));
  const double mx = std::max(s[0], s[1]);
  const double z = std::exp(s[0] - mx) + std::exp(s[1] - mx);
  const double p_on = std::exp(s[0] - mx) / z;
  if (s[0] >= s[1]) return {Relevance::on_topic, p_on};
  return {Relevance::off_topic, 1.0 - p_on};
}

inline std::vector<TweetRecord> filter_relevant(const NaiveBayesModel& model, std::vector<TweetRecord> records) {
  std::erase_if(records, [&](const TweetRecord& r) {
    return classify_relevance(model, r).label != Relevance::on_topic;
  });
  return records;
}

/// Language hook: keeps records whose `lang` is unset or in `allowed`. No
/// language identification is attempted.
inline std::vector<TweetRecord> filter_language(std::vector<TweetRecord> records,
                                                const std::set<std::string>& allowed) {
  if (allowed.empty()) return records;
  std::erase_if(records, [&](const TweetRecord& r) { return r.lang && !allowed.count(*r.lang); });
  return records;
}

// ---------------------------------------------------------------------------
// deduplication

/// Lowercased text with URLs and mentions removed and whitespace collapsed.
inline std::string dedup_key(std::string_view text) {
  std::vector<std::string> parts;
  for (const auto& t : strip_noise(tokenize(text))) parts.push_back(to_lower(t.surface));
  return join(parts, " ");
}

/// Keeps the first record for each normalized text, in input order.
inline std::vector<TweetRecord> deduplicate(const std::vector<TweetRecord>& records) {
  std::unordered_set<std::string> seen;
  std::vector<TweetRecord> out;
  for (const auto& r : records) {
    if (seen.insert(dedup_key(r.text)).second) out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// benchmark split

inline constexpr const char* kMultipleDisasters = "multiple_disasters";

struct SplitSpec {
  std::set<std::string> heldout_test_disasters;
  std::set<std::string> heldout_validation_disasters;
  double test_fraction = 0.07;
  double validation_fraction = 0.15;
  std::uint64_t seed = 0;

  void validate() const {
    if (test_fraction < 0 || test_fraction > 1 || validation_fraction < 0 || validation_fraction > 1) {
      throw ConfigError("split fractions must lie in [0, 1]");
    }
    if (test_fraction + validation_fraction >= 1) {
      throw ConfigError("test_fraction + validation_fraction must be < 1");
    }
    for (const auto& d : heldout_test_disasters) {
      if (heldout_validation_disasters.count(d)) {
        throw ConfigError("disaster '" + d + "' is held out for both test and validation");
      }
    }
  }
};

template <typename Record>
struct BenchmarkSplit {
  std::vector<Record> train;
  std::map<std::string, std::vector<Record>> validation;
  std::map<std::string, std::vector<Record>> test;
  std::vector<std::string> warnings;
};

/// Routes held-out disasters wholesale to their own test/validation subsets,
/// then takes a per-disaster random test_fraction / validation_fraction of
/// everything else into the "multiple_disasters" subsets. Output order
/// follows input order. `disaster_of(record)` gives the disaster label.
template <typename Record, typename DisasterOf>
BenchmarkSplit<Record> split_benchmark(const std::vector<Record>& records, const SplitSpec& spec,
                                       DisasterOf disaster_of) {
  spec.validate();
  enum class Dest { train, validation, test };
  std::vector<Dest> dest(records.size(), Dest::train);
  std::map<std::string, std::vector<std::size_t>> by_disaster;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::string& d = disaster_of(records[i]);
    if (d.empty()) throw DataError("record " + std::to_string(i) + " has no disaster label");
    by_disaster[d].push_back(i);
  }

  BenchmarkSplit<Record> out;
  for (const auto& d : spec.heldout_test_disasters) {
    out.test[d];
    if (!by_disaster.count(d)) out.warnings.push_back("held-out test disaster '" + d + "' not in corpus");
  }
  for (const auto& d : spec.heldout_validation_disasters) {
    out.validation[d];
    if (!by_disaster.count(d)) out.warnings.push_back("held-out validation disaster '" + d + "' not in corpus");
  }

  for (auto& [name, idx] : by_disaster) {
    if (spec.heldout_test_disasters.count(name)) {
      for (auto i : idx) dest[i] = Dest::test;
      continue;
    }
    if (spec.heldout_validation_disasters.count(name)) {
      for (auto i : idx) dest[i] = Dest::validation;
      continue;
    }
    Rng rng(spec.seed ^ fnv1a(name));
    auto order = idx;
    shuffle(order, rng);
    const auto n = order.size();
    const auto n_test = std::min<std::size_t>(n, std::llround(spec.test_fraction * static_cast<double>(n)));
    const auto n_val =
        std::min<std::size_t>(n - n_test, std::llround(spec.validation_fraction * static_cast<double>(n)));
    for (std::size_t k = 0; k < n_test; ++k) dest[order[k]] = Dest::test;
    for (std::size_t k = n_test; k < n_test + n_val; ++k) dest[order[k]] = Dest::validation;
  }

  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::string& d = disaster_of(records[i]);
    switch (dest[i]) {
      case Dest::train:
        out.train.push_back(records[i]);
        break;
      case Dest::validation:
        out.validation[spec.heldout_validation_disasters.count(d) ? d : kMultipleDisasters].push_back(records[i]);
        break;
      case Dest::test:
        out.test[spec.heldout_test_disasters.count(d) ? d : kMultipleDisasters].push_back(records[i]);
        break;
    }
  }
  return out;
}

inline BenchmarkSplit<TweetRecord> split_benchmark(const std::vector<TweetRecord>& records, const SplitSpec& spec) {
  return split_benchmark(records, spec, [](const TweetRecord& r) -> const std::string& { return r.disaster; });
}

}  // namespace dtag
