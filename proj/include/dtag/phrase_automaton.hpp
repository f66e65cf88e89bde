#pragma once

#include <cstddef>
#include <map>
#include <queue>
#include <stdexcept>
#include <vector>

namespace dtag {

/// Aho-Corasick automaton over sequences of arbitrary ordered symbols.
/// Reports every occurrence of every pattern, overlapping ones included.
template <typename Symbol>
class PhraseAutomaton {
 public:
  struct Match {
    std::size_t begin = 0;  // first symbol of the occurrence
    std::size_t end = 0;    // one past the last symbol
    std::size_t pattern = 0;
  };

  PhraseAutomaton() { nodes_.emplace_back(); }

  /// Adds a pattern and returns its id. Must be called before build().
  std::size_t add(const std::vector<Symbol>& pattern) {
    if (built_) throw std::logic_error("PhraseAutomaton::add after build");
    if (pattern.empty()) throw std::invalid_argument("empty pattern");
    std::size_t node = 0;
    for (const auto& s : pattern) {
      auto it = nodes_[node].next.find(s);
      if (it == nodes_[node].next.end()) {
        nodes_.emplace_back();
        it = nodes_[node].next.emplace(s, nodes_.size() - 1).first;
      }
      node = it->second;
    }
    const std::size_t id = patterns_.size();
    patterns_.push_back(pattern);
    nodes_[node].terminal.push_back(id);
    return id;
  }

  /// Computes failure and output links.
  void build() {
    std::queue<std::size_t> q;
    for (auto& [sym, child] : nodes_[0].next) {
      nodes_[child].fail = 0;
      nodes_[child].output = nodes_[child].terminal;
      q.push(child);
    }
    while (!q.empty()) {
      const std::size_t u = q.front();
      q.pop();
      for (auto& [sym, v] : nodes_[u].next) {
        std::size_t f = nodes_[u].fail;
        while (f != 0 && !nodes_[f].next.count(sym)) f = nodes_[f].fail;
        auto it = nodes_[f].next.find(sym);
        nodes_[v].fail = (it != nodes_[f].next.end() && it->second != v) ? it->second : 0;
        const auto& fo = nodes_[nodes_[v].fail].output;
        nodes_[v].output = nodes_[v].terminal;
        nodes_[v].output.insert(nodes_[v].output.end(), fo.begin(), fo.end());
        q.push(v);
      }
    }
    built_ = true;
  }

  /// All occurrences in `text`, in order of end position (ties: longest first).
  std::vector<Match> scan(const std::vector<Symbol>& text) const {
    if (!built_) throw std::logic_error("PhraseAutomaton::scan before build");
    std::vector<Match> out;
    std::size_t state = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
      const auto& s = text[i];
      while (state != 0 && !nodes_[state].next.count(s)) state = nodes_[state].fail;
      auto it = nodes_[state].next.find(s);
      state = it == nodes_[state].next.end() ? 0 : it->second;
      for (std::size_t id : nodes_[state].output) {
        out.push_back({i + 1 - patterns_[id].size(), i + 1, id});
      }
    }
    return out;
  }

  const std::vector<std::vector<Symbol>>& patterns() const { return patterns_; }
  std::size_t size() const { return patterns_.size(); }

 private:
  struct Node {
    std::map<Symbol, std::size_t> next;
    std::size_t fail = 0;
    std::vector<std::size_t> terminal;
    std::vector<std::size_t> output;
  };

  std::vector<Node> nodes_;
  std::vector<std::vector<Symbol>> patterns_;
  bool built_ = false;
};

}  // namespace dtag
