// Copyright 2026 The datg Authors
// SPDX-License-Identifier: Apache-2.0

// Test doubles and independent oracles shared by the unit and acceptance
// suites. Oracles deliberately avoid the library's own helpers.

#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "datg/datg.hpp"

namespace datg::testing {

inline std::filesystem::path source_dir() { return DATG_SOURCE_DIR; }

inline std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("datg_test_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

/// Generator whose next-token logits come from a caller-supplied function of
/// the context text. Token i has surface text "t<i>".
class FunctionGenerator final : public Generator {
 public:
  using LogitFn = std::function<std::vector<double>(std::string_view)>;

  FunctionGenerator(std::size_t vocab, LogitFn fn) : vocab_(vocab), fn_(std::move(fn)) {}

  GeneratorCapabilities capabilities() const override { return {true, true, false}; }

  std::vector<std::string> generate(std::string_view prompt, const GenerationConfig& config, const LogitBias& bias = {},
                                    std::size_t n = 1) const override {
    check_generate_preconditions(*this, prompt, config, bias);
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) {
      GenerationConfig c = config;
      c.seed = config.seed + i;
      auto ids = decode(c, std::nullopt, [&](const std::vector<TokenId>& generated) {
        return next_token_distribution(append_text(prompt, detokenize(*this, generated)), bias).logits;
      });
      out.push_back(detokenize(*this, ids));
    }
    return out;
  }

  NextTokenDistribution next_token_distribution(std::string_view prefix, const LogitBias& bias = {}) const override {
    NextTokenDistribution d{fn_(prefix)};
    apply_bias(d.logits, bias);
    return d;
  }

  std::string token_text(TokenId id) const override { return "t" + std::to_string(id); }

 private:
  std::size_t vocab_;
  LogitFn fn_;
};

/// Returns scripted texts per call; an empty script entry simulates an empty
/// generation and "!throw" a backend failure.
class ScriptedGenerator final : public Generator {
 public:
  explicit ScriptedGenerator(std::function<std::string(std::uint64_t seed)> script) : script_(std::move(script)) {}

  GeneratorCapabilities capabilities() const override { return {false, false, false}; }

  std::vector<std::string> generate(std::string_view prompt, const GenerationConfig& config, const LogitBias& bias = {},
                                    std::size_t n = 1) const override {
    check_generate_preconditions(*this, prompt, config, bias);
    ++calls;
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) {
      std::string text = script_(config.seed + i);
      if (text == "!throw") throw Error(ErrorKind::backend_unreachable, "scripted failure");
      out.push_back(std::move(text));
    }
    return out;
  }

  mutable std::atomic<int> calls{0};

 private:
  std::function<std::string(std::uint64_t)> script_;
};

/// Wraps a classifier and counts calls.
class CountingClassifier final : public Classifier {
 public:
  explicit CountingClassifier(const Classifier& inner) : inner_(inner) {}
  double classify(std::string_view text) const override {
    ++calls;
    return inner_.classify(text);
  }
  mutable std::atomic<int> calls{0};

 private:
  const Classifier& inner_;
};

/// Classifier returning a fixed score per exact text, with a default.
class TableClassifier final : public Classifier {
 public:
  TableClassifier(std::map<std::string, double> table, double fallback) : table_(std::move(table)), fallback_(fallback) {}
  double classify(std::string_view text) const override {
    auto it = table_.find(std::string(text));
    return it == table_.end() ? fallback_ : it->second;
  }

 private:
  std::map<std::string, double> table_;
  double fallback_;
};

inline ScoredCorpus make_corpus(const std::vector<std::pair<std::string, double>>& rows) {
  ScoredCorpus c{"prompt", {}};
  for (const auto& [text, s] : rows) c.items.push_back({Sentence::from_text(text), s});
  return c;
}

/// Nested-loop graph oracle: enumerate every position of every sentence.
struct OracleGraphs {
  std::map<std::pair<std::string, std::string>, double> pos, neg;
  std::map<std::pair<std::string, std::string>, int> count;
  std::set<std::string> nodes;
};

inline OracleGraphs oracle_graphs(const std::vector<std::vector<std::string>>& sentences,
                                  const std::vector<double>& scores) {
  OracleGraphs g;
  for (std::size_t j = 0; j < sentences.size(); ++j) {
    const auto& t = sentences[j];
    for (const auto& tok : t) g.nodes.insert(tok);
    // All ordered position pairs; keep those that are adjacent.
    for (std::size_t a = 0; a < t.size(); ++a) {
      for (std::size_t b = 0; b < t.size(); ++b) {
        if (b != a + 1) continue;
        auto key = std::make_pair(t[a], t[b]);
        g.pos[key] += scores[j];
        g.neg[key] += 1.0 - scores[j];
        g.count[key] += 1;
      }
    }
  }
  return g;
}

/// PageRank by solving (I - d P^T) r = (1 - d)/n * 1 directly, where P is the
/// row-stochastic transition matrix with dangling rows replaced by uniform.
inline std::map<std::string, double> oracle_pagerank(const AttributeGraph& graph, double d) {
  std::vector<std::string> names(graph.nodes.begin(), graph.nodes.end());
  const std::size_t n = names.size();
  std::map<std::string, std::size_t> idx;
  for (std::size_t i = 0; i < n; ++i) idx[names[i]] = i;
  std::vector<std::vector<double>> P(n, std::vector<double>(n, 0.0));
  std::vector<double> out(n, 0.0);
  for (const auto& [k, w] : graph.edges) {
    P[idx[k.first]][idx[k.second]] += w;
    out[idx[k.first]] += w;
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) P[i][j] = out[i] > 0 ? P[i][j] / out[i] : 1.0 / n;
  }
  // A = I - d P^T, b = (1-d)/n
  std::vector<std::vector<double>> A(n, std::vector<double>(n + 1, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) A[i][j] = (i == j ? 1.0 : 0.0) - d * P[j][i];
    A[i][n] = (1.0 - d) / n;
  }
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(A[r][c]) > std::abs(A[piv][c])) piv = r;
    std::swap(A[c], A[piv]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = A[r][c] / A[c][c];
      for (std::size_t k = c; k <= n; ++k) A[r][k] -= f * A[c][k];
    }
  }
  std::map<std::string, double> r;
  for (std::size_t i = 0; i < n; ++i) r[names[i]] = A[i][n] / A[i][i];
  return r;
}

/// Softmax written out longhand for comparisons against library output.
inline std::vector<double> manual_softmax(const std::vector<double>& z) {
  double m = -INFINITY;
  for (double x : z) m = std::max(m, x);
  std::vector<double> e(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += (e[i] = std::exp(z[i] - m));
  for (double& x : e) x /= s;
  return e;
}

/// A toy n-gram model trained on the shipped seed corpus.
inline const NGramGenerator& seed_model() {
  static const NGramGenerator model = NGramGenerator::from_file((source_dir() / "data/seed_corpus.txt").string());
  return model;
}

inline LexiconClassifier toxicity_lexicon() {
  return LexiconClassifier(LexiconClassifier::load_spec((source_dir() / "data/lexicon_toxicity.json").string()));
}

}  // namespace datg::testing
