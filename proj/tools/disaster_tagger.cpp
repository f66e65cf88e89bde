// disaster-tagger: annotate, split, train, eval and extract from the command line.

#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dtag/pipeline.hpp"

namespace {

std::string join_csv(const std::set<std::string>& s) {
  std::string out;
  for (const auto& x : s) out += (out.empty() ? "" : ",") + x;
  return out;
}

std::set<std::string> split_csv(const std::string& s) {
  std::set<std::string> out;
  for (const auto& part : dtag::split_char(s, ',')) {
    const auto t = dtag::trim(part);
    if (!t.empty()) out.emplace(t);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  dtag::RunConfig cfg;
  CLI::App app{"Disaster tweet hashtag extraction: lexicon annotation and a multi-task Bi-LSTM tagger"};
  app.set_config("--config", "", "TOML/INI file of option values; command-line flags take precedence");
  app.require_subcommand(1);
  app.fallthrough();

  std::string variant = "mtl", eval_mode = "exact_span", heldout_test, heldout_val, languages;
  bool no_dedup = false;
  int seed = -1;

  app.add_option("--corpus", cfg.corpus, "Tweet corpus (JSONL or TSV) or annotated JSONL, per subcommand");
  app.add_option("--corpus-format", cfg.corpus_format, "auto, jsonl or tsv")->check(CLI::IsMember({"auto", "jsonl", "tsv"}));
  app.add_option("--lexicon", cfg.lexicon, "Lexicon file, one phrase per line");
  app.add_option("--out", cfg.out, "Output directory (file for train-nb; extract writes to stdout if unset)");
  app.add_option("--variant", variant, "mtl, mtl_ctx, mtl_ipa_pos or mtl_ctx_ipa_pos");
  app.add_option("--seed", seed, "Random seed for training and splitting");
  app.add_option("--checkpoint", cfg.checkpoint, "Model checkpoint");
  app.add_option("--train", cfg.train_file, "Annotated training set");
  app.add_option("--dev", cfg.dev_file, "Annotated validation set");
  app.add_option("--test", cfg.test_files, "Annotated test subset(s)");
  app.add_option("--predictions", cfg.predictions, "Predicted spans JSONL to score instead of a checkpoint");
  app.add_option("--input", cfg.input, "Tweets for extract ('-' for stdin)");
  app.add_option("--nb-model", cfg.nb_model, "Naive Bayes relevance model to filter the corpus");
  app.add_option("--max-errors", cfg.max_errors, "Abort when more corpus lines than this are malformed");
  app.add_flag("--no-dedup", no_dedup, "Keep duplicate tweets");
  app.add_option("--languages", languages, "Comma-separated language codes to keep");

  app.add_option("--wordlist", cfg.wordlist, "Word frequency list for hashtag segmentation");
  app.add_option("--lemma-base", cfg.lemma_base, "Lemmatizer base forms");
  app.add_option("--lemma-exceptions", cfg.lemma_exceptions, "Lemmatizer exceptions");
  app.add_option("--embeddings", cfg.embeddings, "Pretrained word embeddings (text format)");
  app.add_option("--phonemes", cfg.phonemes, "Phoneme inventory TSV");
  app.add_option("--g2p-rules", cfg.g2p_rules, "Grapheme-to-phoneme rules");
  app.add_option("--g2p-exceptions", cfg.g2p_exceptions, "Grapheme-to-phoneme exceptions");
  app.add_option("--pos-lexicon", cfg.pos_lexicon, "Word list for the fallback POS tagger");
  app.add_option("--context", cfg.context, "Contextual vectors (binary or JSONL)");

  app.add_option("--d-word", cfg.features.d_word, "Word embedding size");
  app.add_option("--d-pos", cfg.features.d_pos, "POS embedding size");
  app.add_option("--d-ipa", cfg.features.d_ipa, "IPA embedding size");
  app.add_option("--n-filters", cfg.features.n_filters, "Character CNN filters");
  app.add_option("--d-hidden", cfg.model.d_hidden, "Hidden units per LSTM direction");
  app.add_option("--aux-weight", cfg.model.aux_weight, "Weight of the auxiliary loss");
  app.add_option("--dropout", cfg.model.dropout, "Dropout on the Bi-LSTM inputs");
  app.add_option("--lr", cfg.model.lr, "Learning rate");
  app.add_option("--epochs", cfg.model.epochs, "Maximum epochs");
  app.add_option("--batch-size", cfg.model.batch_size, "Sequences per update");
  app.add_option("--patience", cfg.model.patience, "Epochs without dev improvement before stopping");

  app.add_flag("--split", cfg.split_corpus, "train: split --corpus instead of reading --train/--dev");
  app.add_option("--test-fraction", cfg.split.test_fraction, "Per-disaster test fraction");
  app.add_option("--validation-fraction", cfg.split.validation_fraction, "Per-disaster validation fraction");
  app.add_option("--heldout-test", heldout_test, "Comma-separated disasters held out for test");
  app.add_option("--heldout-validation", heldout_val, "Comma-separated disasters held out for validation");
  app.add_option("--eval-mode", eval_mode, "exact_span or token_level")->check(CLI::IsMember({"exact_span", "token_level"}));
  app.add_option("-v,--verbosity", cfg.verbosity, "0 quiet, 1 normal, 2 verbose");

  auto* annotate = app.add_subcommand("annotate", "Annotate a tweet corpus with the lexicon");
  auto* split = app.add_subcommand("split", "Split an annotated corpus into benchmark subsets");
  auto* train = app.add_subcommand("train", "Train a tagger");
  auto* eval = app.add_subcommand("eval", "Score predictions on test subsets");
  auto* extract = app.add_subcommand("extract", "Extract hashtags from tweets");
  auto* train_nb = app.add_subcommand("train-nb", "Train the Naive Bayes relevance filter");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    cfg.features.variant = dtag::variant_from_string(variant);
    cfg.variant_given = app.count("--variant") > 0;
    cfg.eval_mode = dtag::eval_mode_from_string(eval_mode);
    cfg.dedup = !no_dedup;
    cfg.languages = split_csv(languages);
    cfg.split.heldout_test_disasters = split_csv(heldout_test);
    cfg.split.heldout_validation_disasters = split_csv(heldout_val);
    if (seed >= 0) {
      cfg.model.seed = static_cast<std::uint64_t>(seed);
      cfg.split.seed = static_cast<std::uint64_t>(seed);
    }

    if (annotate->parsed()) {
      const auto st = dtag::cmd_annotate(cfg);
      std::cout << "tweets: " << st.tweets << "\ntweets with spans: " << st.tweets_with_spans
                << "\nspans: " << st.spans << "\nduplicates removed: " << st.duplicates
                << "\noff-topic removed: " << st.off_topic << "\n";
    } else if (split->parsed()) {
      for (const auto& [name, n] : dtag::cmd_split(cfg)) std::cout << name << "\t" << n << "\n";
      if (!cfg.split.heldout_test_disasters.empty()) {
        std::cout << "held out for test: " << join_csv(cfg.split.heldout_test_disasters) << "\n";
      }
    } else if (train->parsed()) {
      const auto s = dtag::cmd_train(cfg);
      std::cout << "epochs: " << s.epochs_run << "\nbest epoch: " << s.best_epoch << "\nbest dev f1: " << s.best_dev_f1
                << "\ncheckpoint: " << s.checkpoint << "\nlog: " << s.log << "\n";
    } else if (eval->parsed()) {
      std::cout << dtag::format_report_table(dtag::cmd_eval(cfg));
    } else if (extract->parsed()) {
      std::ifstream file;
      std::istream* in = &std::cin;
      if (cfg.input != "-") {
        file.open(cfg.input);
        if (!file) throw dtag::ConfigError("input not found: " + cfg.input);
        in = &file;
      }
      std::ofstream outfile;
      std::ostream* out = &std::cout;
      if (!cfg.out.empty()) {
        outfile.open(cfg.out);
        if (!outfile) throw dtag::DataError("cannot write " + cfg.out);
        out = &outfile;
      }
      dtag::cmd_extract(cfg, *in, *out);
    } else if (train_nb->parsed()) {
      const auto m = dtag::cmd_train_nb(cfg);
      std::cout << "vocabulary: " << m.vocabulary.size() << "\nmodel: " << cfg.out << "\n";
    }
  } catch (const dtag::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const dtag::DivergenceError& e) {
    std::cerr << "error: training diverged: " << e.what() << "\n";
    return 3;
  } catch (const dtag::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
