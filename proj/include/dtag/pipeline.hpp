#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtag/checkpoint.hpp"
#include "dtag/corpus.hpp"
#include "dtag/evaluation.hpp"
#include "dtag/features.hpp"
#include "dtag/lexicon.hpp"
#include "dtag/trainer.hpp"

#ifndef DTAG_DATA_DIR
#define DTAG_DATA_DIR "data"
#endif

namespace dtag {

inline std::string data_path(const std::string& name) { return std::string(DTAG_DATA_DIR) + "/" + name; }

/// Everything a subcommand may need. Empty paths mean "not given".
struct RunConfig {
  std::string corpus;
  std::string corpus_format = "auto";  // auto | jsonl | tsv
  std::string lexicon;
  std::string out;
  std::string checkpoint;
  std::string train_file;
  std::string dev_file;
  std::vector<std::string> test_files;
  std::string predictions;
  std::string input = "-";
  std::string nb_model;

  std::string wordlist = data_path("wordlist.txt");
  std::string lemma_base = data_path("lemma_base.txt");
  std::string lemma_exceptions = data_path("lemma_exceptions.tsv");
  std::string embeddings;
  std::string phonemes = data_path("phonemes.tsv");
  std::string g2p_rules = data_path("g2p_rules.tsv");
  std::string g2p_exceptions = data_path("g2p_exceptions.tsv");
  std::string pos_lexicon = data_path("pos_lexicon.tsv");
  std::string context;

  FeatureConfig features;
  ModelConfig model;
  SplitSpec split;
  bool variant_given = false;  // extract checks the checkpoint's variant only when set
  bool split_corpus = false;
  bool dedup = true;
  std::set<std::string> languages;
  std::size_t max_errors = std::numeric_limits<std::size_t>::max();
  EvalMode eval_mode = EvalMode::exact_span;
  int verbosity = 1;
  std::ostream* log = &std::cerr;
};

namespace detail {

inline void note(const RunConfig& cfg, int level, const std::string& msg) {
  if (cfg.log && cfg.verbosity >= level) *cfg.log << msg << "\n";
}

inline void require_path(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError("missing required " + what + " path");
  if (!std::filesystem::exists(path)) throw ConfigError(what + " not found: " + path);
}

inline void require_out(const RunConfig& cfg) {
  if (cfg.out.empty()) throw ConfigError("missing required --out directory");
}

inline std::string stem(const std::string& path) { return std::filesystem::path(path).stem().string(); }

}  // namespace detail

/// Exclusive claim on an output directory, held for the object's lifetime.
class OutputLock {
 public:
  explicit OutputLock(const std::string& dir) {
    std::filesystem::create_directories(dir);
    path_ = (std::filesystem::path(dir) / ".dtag.lock").string();
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
      if (errno == EEXIST) throw ConfigError("output directory " + dir + " is in use by another run (lock file " + path_ + ")");
      throw DataError("cannot create lock file " + path_ + ": " + std::strerror(errno));
    }
    const auto pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
    ::close(fd);
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;
  ~OutputLock() { std::filesystem::remove(path_); }

 private:
  std::string path_;
};

inline TextResources load_text_resources(const RunConfig& cfg) {
  detail::require_path(cfg.wordlist, "segmentation word list");
  detail::require_path(cfg.lemma_base, "lemma base-form list");
  detail::require_path(cfg.lemma_exceptions, "lemma exception list");
  return {SegmentationDict::load(cfg.wordlist), Lemmatizer::load(cfg.lemma_base, cfg.lemma_exceptions)};
}

inline CorpusLoad read_corpus(const RunConfig& cfg) {
  detail::require_path(cfg.corpus, "corpus");
  CorpusFormat fmt;
  if (cfg.corpus_format == "auto") {
    fmt = std::filesystem::path(cfg.corpus).extension() == ".tsv" ? CorpusFormat::tsv : CorpusFormat::jsonl;
  } else {
    fmt = corpus_format_from_string(cfg.corpus_format);
  }
  auto load = load_corpus(cfg.corpus, fmt, cfg.max_errors);
  for (const auto& e : load.errors) detail::note(cfg, 1, "warning: " + cfg.corpus + ":" + std::to_string(e.line) + ": " + e.message);
  return load;
}

/// Renders a span as a hashtag: '#' plus its word tokens, lowercased and
/// joined without separators. Spans made only of punctuation render empty.
inline std::string render_hashtag(const std::vector<Token>& tokens, TokenRange r) {
  std::string body;
  for (auto i = r.begin; i < r.end && i < tokens.size(); ++i) {
    if (tokens[i].kind == TokenKind::punct) continue;
    body += to_lower(tokens[i].surface);
  }
  return body.empty() ? std::string() : "#" + body;
}

// ---------------------------------------------------------------------------
// annotate

struct AnnotateStats {
  std::size_t records_read = 0;
  std::size_t malformed = 0;
  std::size_t off_topic = 0;
  std::size_t duplicates = 0;
  std::size_t tweets = 0;
  std::size_t tweets_with_spans = 0;
  std::size_t spans = 0;
  std::size_t lexicon_phrases = 0;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const {
    return {{"records_read", records_read}, {"malformed", malformed}, {"off_topic", off_topic},
            {"duplicates", duplicates}, {"tweets", tweets}, {"tweets_with_spans", tweets_with_spans},
            {"spans", spans}, {"lexicon_phrases", lexicon_phrases}, {"warnings", warnings.size()}};
  }
};

inline std::vector<LabeledSequence> annotate_corpus(const std::vector<TweetRecord>& records, const Lexicon& lexicon,
                                                    const TextResources& res, std::vector<std::string>* warnings) {
  std::vector<LabeledSequence> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(annotate(r, lexicon, res, warnings));
  return out;
}

/// corpus -> (relevance filter) -> dedup -> annotation. Writes
/// annotated.jsonl, annotated.conll and annotate_stats.json under `out`.
inline AnnotateStats cmd_annotate(const RunConfig& cfg) {
  detail::require_out(cfg);
  detail::require_path(cfg.lexicon, "lexicon");
  if (!cfg.nb_model.empty()) detail::require_path(cfg.nb_model, "relevance model");
  const auto res = load_text_resources(cfg);
  auto corpus = read_corpus(cfg);
  OutputLock lock(cfg.out);

  AnnotateStats st;
  st.records_read = corpus.records.size();
  st.malformed = corpus.errors.size();
  auto records = filter_language(std::move(corpus.records), cfg.languages);
  if (!cfg.nb_model.empty()) {
    const auto nb = NaiveBayesModel::load(cfg.nb_model);
    const auto before = records.size();
    records = filter_relevant(nb, std::move(records));
    st.off_topic = before - records.size();
  }
  if (cfg.dedup) {
    const auto before = records.size();
    records = deduplicate(records);
    st.duplicates = before - records.size();
  }
  const auto lex = load_lexicon(cfg.lexicon, res.lemmatizer);
  st.lexicon_phrases = lex.lexicon.size();
  detail::note(cfg, 2, "lexicon: " + std::to_string(lex.lexicon.size()) + " phrases (" + std::to_string(lex.duplicates) + " duplicates collapsed)");
  const auto seqs = annotate_corpus(records, lex.lexicon, res, &st.warnings);
  for (const auto& w : st.warnings) detail::note(cfg, 1, "warning: " + w);
  st.tweets = seqs.size();
  for (const auto& s : seqs) {
    st.spans += s.spans.size();
    if (!s.spans.empty()) ++st.tweets_with_spans;
  }
  const std::filesystem::path dir(cfg.out);
  {
    std::ofstream jl(dir / "annotated.jsonl", std::ios::binary);
    write_labeled(jl, seqs);
    std::ofstream cn(dir / "annotated.conll", std::ios::binary);
    write_conll(cn, seqs);
    std::ofstream js(dir / "annotate_stats.json", std::ios::binary);
    js << st.to_json().dump(2) << "\n";
    if (!jl || !cn || !js) throw DataError("failed writing annotation output under " + cfg.out);
  }
  return st;
}

// ---------------------------------------------------------------------------
// split

inline BenchmarkSplit<LabeledSequence> split_labeled(const std::vector<LabeledSequence>& seqs, const SplitSpec& spec) {
  return split_benchmark(seqs, spec, [](const LabeledSequence& s) -> const std::string& { return s.disaster; });
}

/// Splits an annotated corpus into train.jsonl, validation_<subset>.jsonl
/// and test_<subset>.jsonl. Returns subset sizes keyed by file name.
inline std::map<std::string, std::size_t> cmd_split(const RunConfig& cfg) {
  detail::require_out(cfg);
  detail::require_path(cfg.corpus, "annotated corpus");
  const auto seqs = load_labeled(cfg.corpus);
  auto split = split_labeled(seqs, cfg.split);
  for (const auto& w : split.warnings) detail::note(cfg, 1, "warning: " + w);
  OutputLock lock(cfg.out);
  std::map<std::string, std::size_t> sizes;
  auto write = [&](const std::string& name, const std::vector<LabeledSequence>& part) {
    std::ofstream f(std::filesystem::path(cfg.out) / name, std::ios::binary);
    write_labeled(f, part);
    if (!f) throw DataError("failed writing " + name);
    sizes[name] = part.size();
  };
  write("train.jsonl", split.train);
  for (const auto& [name, part] : split.validation) write("validation_" + name + ".jsonl", part);
  for (const auto& [name, part] : split.test) write("test_" + name + ".jsonl", part);
  return sizes;
}

// ---------------------------------------------------------------------------
// feature resources

/// Owning storage behind a FeatureResources view.
struct LoadedResources {
  std::optional<FallbackPosTagger> pos_tagger;
  std::optional<PhonemeInventory> inventory;
  std::optional<G2PRules> g2p;
  std::optional<ContextVectors> context;

  FeatureResources view(const WordVocab* vocab) const {
    return {vocab, pos_tagger ? &*pos_tagger : nullptr, inventory ? &*inventory : nullptr, g2p ? &*g2p : nullptr,
            context ? &*context : nullptr};
  }
};

/// Checks every path the variant needs before any work starts, then loads.
/// `inventory` overrides the phoneme file (inference uses the checkpoint's).
inline LoadedResources load_feature_resources(const RunConfig& cfg, Variant variant,
                                              std::optional<PhonemeInventory> inventory = std::nullopt) {
  if (uses_ipa_pos(variant)) {
    if (!inventory) detail::require_path(cfg.phonemes, "phoneme inventory");
    detail::require_path(cfg.g2p_rules, "G2P rules");
    if (!cfg.g2p_exceptions.empty()) detail::require_path(cfg.g2p_exceptions, "G2P exceptions");
    detail::require_path(cfg.pos_lexicon, "POS lexicon");
  }
  if (uses_context(variant)) detail::require_path(cfg.context, "contextual vectors");
  LoadedResources r;
  if (uses_ipa_pos(variant)) {
    r.inventory = inventory ? std::move(*inventory) : PhonemeInventory::load(cfg.phonemes);
    r.g2p = G2PRules::load(cfg.g2p_rules, cfg.g2p_exceptions, &*r.inventory);
    r.pos_tagger = FallbackPosTagger::load(cfg.pos_lexicon);
  }
  if (uses_context(variant)) r.context = ContextVectors::load(cfg.context);
  return r;
}

// ---------------------------------------------------------------------------
// train

struct TrainSummary {
  int epochs_run = 0;
  int best_epoch = 0;
  double best_dev_f1 = 0;
  bool early_stopped = false;
  std::string checkpoint;
  std::string log;
};

/// Trains on --train/--dev, or on a split of --corpus when split_corpus is
/// set. Writes model.ckpt (best dev epoch) and train_log.jsonl.
inline TrainSummary cmd_train(const RunConfig& cfg) {
  detail::require_out(cfg);
  std::vector<LabeledSequence> train_seqs, dev_seqs;
  if (cfg.split_corpus) {
    detail::require_path(cfg.corpus, "annotated corpus");
  } else {
    detail::require_path(cfg.train_file, "training set");
    detail::require_path(cfg.dev_file, "validation set");
  }
  if (!cfg.embeddings.empty()) detail::require_path(cfg.embeddings, "word embeddings");
  FeatureConfig fcfg = cfg.features;
  auto resources = load_feature_resources(cfg, fcfg.variant);
  if (resources.context) fcfg.d_ctx = resources.context->dim();
  if (resources.inventory) fcfg.n_phon_features = resources.inventory->n_features();

  if (cfg.split_corpus) {
    auto split = split_labeled(load_labeled(cfg.corpus), cfg.split);
    for (const auto& w : split.warnings) detail::note(cfg, 1, "warning: " + w);
    train_seqs = std::move(split.train);
    for (auto& [name, part] : split.validation) dev_seqs.insert(dev_seqs.end(), part.begin(), part.end());
  } else {
    train_seqs = load_labeled(cfg.train_file);
    dev_seqs = load_labeled(cfg.dev_file);
  }
  if (train_seqs.empty()) throw DataError("training set is empty");
  if (dev_seqs.empty()) throw DataError("validation set is empty");

  std::optional<EmbeddingTable> pretrained;
  WordVocab vocab;
  if (!cfg.embeddings.empty()) {
    auto load = load_word_embeddings(cfg.embeddings, fcfg.d_word);
    if (!load.rejected_lines.empty()) {
      detail::note(cfg, 1, "warning: " + std::to_string(load.rejected_lines.size()) + " embedding rows rejected");
    }
    pretrained = std::move(load.table);
    vocab = WordVocab(pretrained->words);
  } else {
    vocab = build_vocab(train_seqs);
  }

  ModelConfig mcfg = cfg.model;
  mcfg.d_input = fcfg.input_dim();
  OutputLock lock(cfg.out);
  auto state = make_train_state<float>(mcfg, fcfg, std::move(vocab), resources.inventory ? &*resources.inventory : nullptr,
                                       pretrained ? &*pretrained : nullptr);
  const auto view = resources.view(&state.vocab);
  const auto train_data = make_train_data(train_seqs, fcfg, view);
  const auto dev_data = make_train_data(dev_seqs, fcfg, view);

  const std::filesystem::path dir(cfg.out);
  const auto log_path = (dir / "train_log.jsonl").string();
  std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
  if (!log) throw DataError("cannot write " + log_path);
  auto result = train(std::move(state), train_data, dev_data, [&](const EpochRecord& r) {
    log << r.to_json().dump() << "\n" << std::flush;
    detail::note(cfg, 1, "epoch " + std::to_string(r.epoch) + " loss " + std::to_string(r.train_loss) + " dev_f1 " + std::to_string(r.dev_f1));
  });
  TrainSummary s;
  s.epochs_run = static_cast<int>(result.log.size());
  s.best_epoch = result.best.best_epoch;
  s.best_dev_f1 = result.best.best_f1;
  s.early_stopped = result.early_stopped;
  s.checkpoint = (dir / "model.ckpt").string();
  s.log = log_path;
  save_checkpoint(result.best, s.checkpoint);
  return s;
}

// ---------------------------------------------------------------------------
// inference

/// A loaded checkpoint with the lookup resources its variant needs.
struct Predictor {
  TrainState<float> state;
  LoadedResources resources;

  static Predictor load(const RunConfig& cfg, std::optional<Variant> expected_variant = std::nullopt) {
    detail::require_path(cfg.checkpoint, "checkpoint");
    std::optional<nlohmann::json> expected;
    if (expected_variant) expected = nlohmann::json{{"features", {{"variant", std::string(to_string(*expected_variant))}}}};
    Predictor p;
    p.state = load_checkpoint<float>(cfg.checkpoint, expected ? &*expected : nullptr);
    const auto& fcfg = p.state.model.feature_config();
    std::optional<PhonemeInventory> inv;
    if (uses_ipa_pos(fcfg.variant)) {
      std::vector<std::pair<std::string, std::vector<int>>> rows;
      for (std::size_t j = 0; j < p.state.phonemes.size(); ++j) {
        std::vector<int> f;
        for (Eigen::Index i = 0; i < p.state.phon_features.rows(); ++i) f.push_back(static_cast<int>(p.state.phon_features(i, static_cast<Eigen::Index>(j))));
        rows.emplace_back(p.state.phonemes[j], std::move(f));
      }
      inv = PhonemeInventory::from_rows(rows);
    }
    p.resources = load_feature_resources(cfg, fcfg.variant, std::move(inv));
    if (p.resources.context && p.resources.context->dim() != fcfg.d_ctx) {
      throw DataError("contextual vectors have dim " + std::to_string(p.resources.context->dim()) + ", checkpoint expects " + std::to_string(fcfg.d_ctx));
    }
    return p;
  }

  std::vector<TokenRange> predict(const LabeledSequence& seq) const {
    return predict_spans(state.model, index_sequence(seq, state.model.feature_config(), resources.view(&state.vocab)));
  }
};

// ---------------------------------------------------------------------------
// eval

inline std::vector<SpanSet> load_predictions(const std::string& path) {
  std::vector<SpanSet> out;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(lines[i]);
      SpanSet s;
      s.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
      for (const auto& sp : j.at("spans")) {
        if (sp.is_array()) {
          s.spans.push_back({sp.at(0).get<std::size_t>(), sp.at(1).get<std::size_t>()});
        } else {
          s.spans.push_back({sp.at("start").get<std::size_t>(), sp.at("end").get<std::size_t>()});
        }
      }
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

/// Scores each --test subset against the checkpoint's predictions or a
/// --predictions file. Writes report.json, report.txt and per-subset
/// agreement renderings (agreement_<subset>.txt / .html).
inline std::vector<EvalReport> cmd_eval(const RunConfig& cfg) {
  detail::require_out(cfg);
  if (cfg.test_files.empty()) throw ConfigError("missing required --test file(s)");
  for (const auto& t : cfg.test_files) detail::require_path(t, "test set");
  if (cfg.checkpoint.empty() && cfg.predictions.empty()) throw ConfigError("eval needs --checkpoint or --predictions");
  std::optional<Predictor> predictor;
  std::map<std::string, std::vector<TokenRange>> given;
  if (!cfg.predictions.empty()) {
    detail::require_path(cfg.predictions, "predictions");
    for (auto& s : load_predictions(cfg.predictions)) {
      if (!given.emplace(s.id, std::move(s.spans)).second) throw DataError("duplicate prediction id '" + s.id + "'");
    }
  } else {
    predictor = Predictor::load(cfg);
  }
  OutputLock lock(cfg.out);
  const std::filesystem::path dir(cfg.out);
  std::vector<EvalReport> reports;
  nlohmann::json all = nlohmann::json::array();
  std::set<std::string> ids;
  for (const auto& test : cfg.test_files) {
    const auto seqs = load_labeled(test);
    std::vector<SpanSet> pred, gold;
    std::string text, html = "<!DOCTYPE html>\n<html><body>\n";
    for (const auto& s : seqs) {
      std::vector<TokenRange> g;
      for (const auto& sp : s.spans) g.push_back(sp.range);
      std::vector<TokenRange> p;
      if (predictor) {
        p = predictor->predict(s);
      } else if (auto it = given.find(s.id); it != given.end()) {
        p = it->second;
      } else {
        throw DataError("no prediction for tweet id '" + s.id + "' in " + cfg.predictions);
      }
      for (const auto& r : p) {
        if (r.begin >= r.end || r.end > s.tokens.size()) throw DataError("predicted span out of range for tweet '" + s.id + "'");
      }
      ids.insert(s.id);
      const auto rendered = render_agreement(s.tokens, p, g);
      text += s.id + "\t" + rendered.text + "\n";
      html += "<p>" + detail::html_escape(s.id) + ": " + rendered.html + "</p>\n";
      pred.push_back({s.id, std::move(p)});
      gold.push_back({s.id, std::move(g)});
    }
    html += "</body></html>\n";
    auto report = score_spans(pred, gold, cfg.eval_mode, detail::stem(test));
    all.push_back(report.to_json());
    write_file((dir / ("agreement_" + report.subset + ".txt")).string(), text);
    write_file((dir / ("agreement_" + report.subset + ".html")).string(), html);
    reports.push_back(std::move(report));
  }
  for (const auto& [id, spans] : given) {
    if (!ids.count(id)) throw DataError("prediction for unknown tweet id '" + id + "'");
  }
  write_file((dir / "report.json").string(), all.dump(2) + "\n");
  write_file((dir / "report.txt").string(), format_report_table(reports));
  return reports;
}

// ---------------------------------------------------------------------------
// extract

inline nlohmann::json extraction_record(const LabeledSequence& seq, const std::vector<TokenRange>& spans) {
  nlohmann::json tags = nlohmann::json::array(), out_spans = nlohmann::json::array();
  std::set<std::string> seen;
  for (const auto& r : spans) {
    const auto h = render_hashtag(seq.tokens, r);
    if (!h.empty() && seen.insert(h).second) tags.push_back(h);
    out_spans.push_back({{"start", r.begin}, {"end", r.end}, {"surface", span_surface(seq.tokens, r, seq.text)}});
  }
  return {{"id", seq.id}, {"hashtags", tags}, {"spans", out_spans}};
}

/// Line in, line out: each input line is a tweet record (JSON object) or
/// raw text (id = line number). Emits one JSON object per tweet.
inline std::size_t cmd_extract(const RunConfig& cfg, std::istream& in, std::ostream& out) {
  const auto predictor = Predictor::load(cfg, cfg.variant_given ? std::optional<Variant>(cfg.features.variant) : std::nullopt);
  const auto res = load_text_resources(cfg);
  std::string line;
  std::size_t line_no = 0, n = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    TweetRecord rec;
    const auto t = trim(line);
    if (t.front() == '{') {
      try {
        rec = tweet_from_json(nlohmann::json::parse(t));
      } catch (const nlohmann::json::exception& e) {
        throw DataError("input line " + std::to_string(line_no) + ": " + e.what());
      }
    } else {
      rec.id = std::to_string(line_no);
      rec.text = std::string(t);
    }
    LabeledSequence seq;
    seq.id = rec.id;
    seq.text = rec.text;
    seq.tokens = prepare_tokens(rec.text, res);
    if (rec.pos_tags) {
      std::vector<std::string> pos;
      for (const auto& tok : seq.tokens) pos.push_back((*rec.pos_tags)[tok.source]);
      seq.pos = std::move(pos);
    }
    out << extraction_record(seq, predictor.predict(seq)).dump() << "\n" << std::flush;
    ++n;
  }
  return n;
}

// ---------------------------------------------------------------------------
// relevance model

/// Trains the Naive Bayes relevance filter on records carrying a
/// relevance_label and writes it to `out` (a file path).
inline NaiveBayesModel cmd_train_nb(const RunConfig& cfg) {
  if (cfg.out.empty()) throw ConfigError("missing required --out file");
  auto corpus = read_corpus(cfg);
  std::vector<TweetRecord> labeled;
  for (auto& r : corpus.records) {
    if (r.relevance_label) labeled.push_back(std::move(r));
  }
  if (labeled.empty()) throw DataError("no records with relevance_label in " + cfg.corpus);
  auto model = train_naive_bayes(labeled);
  model.save(cfg.out);
  return model;
}

}  // namespace dtag
