#pragma once

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "dtag/pipeline.hpp"

#ifndef DTAG_FIXTURE_DIR
#define DTAG_FIXTURE_DIR "tests/fixtures"
#endif

namespace dtag::test {

inline std::string fixture(const std::string& name) { return std::string(DTAG_FIXTURE_DIR) + "/" + name; }

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "dtag-XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }

  const std::string& path() const { return path_; }
  std::string file(const std::string& name) const { return path_ + "/" + name; }

 private:
  std::string path_;
};

inline void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

/// Word list and lemmatizer from the bundled data files, loaded once.
inline const TextResources& text_resources() {
  static const TextResources res{SegmentationDict::load(data_path("wordlist.txt")),
                                 Lemmatizer::load(data_path("lemma_base.txt"), data_path("lemma_exceptions.tsv"))};
  return res;
}

/// A run config with quiet logging.
inline RunConfig quiet_config() {
  RunConfig cfg;
  cfg.verbosity = 0;
  cfg.log = nullptr;
  return cfg;
}

#ifdef DTAG_TAGGER_BIN
/// Runs the CLI with `args` (shell syntax); returns its exit status and
/// captures stdout+stderr.
inline int run_cli(const std::string& args, std::string* output = nullptr) {
  TempDir tmp;
  const auto log = tmp.file("out.txt");
  const auto cmd = std::string("'") + DTAG_TAGGER_BIN + "' " + args + " > '" + log + "' 2>&1";
  const int status = std::system(cmd.c_str());
  if (output) *output = read_file(log);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}
#endif

}  // namespace dtag::test
