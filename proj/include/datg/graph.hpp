// Copyright 2026 The datg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "datg/corpus.hpp"
#include "datg/error.hpp"
#include "datg/text.hpp"

namespace datg {

enum class Polarity { positive, negative };

using EdgeKey = std::pair<std::string, std::string>;

/// Directed token graph with cumulative per-edge weights. Node and edge
/// containers are ordered so iteration (and everything derived from it) is
/// deterministic.
struct AttributeGraph {
  Polarity polarity = Polarity::positive;
  std::set<std::string> nodes;
  std::map<EdgeKey, double> edges;

  double weight(const std::string& from, const std::string& to) const {
    auto it = edges.find({from, to});
    return it == edges.end() ? 0.0 : it->second;
  }
};

struct AttributeGraphPair {
  AttributeGraph positive{Polarity::positive, {}, {}};
  AttributeGraph negative{Polarity::negative, {}, {}};
};

/// Builds G+ and G- from a scored corpus. Every adjacent token pair inside a
/// sentence (including self-loops from repeated words) adds the sentence score
/// s to its G+ edge and 1 - s to its G- edge, once per occurrence. Edges never
/// cross sentence boundaries.
inline AttributeGraphPair build_attribute_graphs(const ScoredCorpus& corpus) {
  if (corpus.items.empty()) throw Error(ErrorKind::invalid_argument, "cannot build graphs from an empty corpus");
  AttributeGraphPair graphs;
  for (const auto& item : corpus.items) {
    const auto& tokens = item.sentence.tokens;
    const double s = item.score;
    graphs.positive.nodes.insert(tokens.begin(), tokens.end());
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
      EdgeKey key{tokens[i], tokens[i + 1]};
      graphs.positive.edges[key] += s;
      graphs.negative.edges[key] += 1.0 - s;
    }
  }
  graphs.negative.nodes = graphs.positive.nodes;
  return graphs;
}

enum class SelectionMode { top_k, threshold };

inline const std::set<std::string>& default_stopwords() {
  static const std::set<std::string> words = {
      "a",      "about",  "above",   "after",   "again",  "against", "all",     "am",     "an",
      "and",    "any",    "are",     "as",      "at",     "be",      "because", "been",   "before",
      "being",  "below",  "between", "both",    "but",    "by",      "can",     "could",  "did",
      "do",     "does",   "doing",   "down",    "during", "each",    "few",     "for",    "from",
      "further", "had",   "has",     "have",    "having", "he",      "her",     "here",   "hers",
      "herself", "him",   "himself", "his",     "how",    "i",       "if",      "in",     "into",
      "is",     "it",     "its",     "itself",  "just",   "me",      "more",    "most",   "my",
      "myself", "no",     "nor",     "not",     "now",    "of",      "off",     "on",     "once",
      "only",   "or",     "other",   "our",     "ours",   "ourselves", "out",   "over",   "own",
      "same",   "she",    "should",  "so",      "some",   "such",    "than",    "that",   "the",
      "their",  "theirs", "them",    "themselves", "then", "there",  "these",   "they",   "this",
      "those",  "through", "to",     "too",     "under",  "until",   "up",      "very",   "was",
      "we",     "were",   "what",    "when",    "where",  "which",   "while",   "who",    "whom",
      "why",    "will",   "with",    "would",   "you",    "your",    "yours",   "yourself", "yourselves",
      "it's",   "i'm",     "don't",   "that's", "he's",    "she's",   "they're", "you're",
  };
  return words;
}

/// One word per line; blank lines and lines starting with '#' are ignored.
inline std::set<std::string> load_stopwords(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot read stopword list " + path);
  std::set<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    for (auto& token : tokenize_for_graph(line)) out.insert(std::move(token));
  }
  return out;
}

struct SelectionConfig {
  SelectionMode mode = SelectionMode::top_k;
  std::size_t top_k = 10;
  double theta_p = 0.0;
  double theta_n = 0.0;
  std::set<std::string> stopwords = default_stopwords();
  double damping = 0.85;
  double tolerance = 1e-8;
  std::size_t max_iterations = 100;

  std::vector<std::string> violations() const {
    std::vector<std::string> out;
    if (mode == SelectionMode::top_k && top_k < 1) out.emplace_back("selection.top_k must be >= 1");
    if (!(damping > 0.0 && damping < 1.0)) out.emplace_back("selection.damping must be in (0, 1)");
    if (!(tolerance > 0.0)) out.emplace_back("selection.tolerance must be > 0");
    if (max_iterations < 1) out.emplace_back("selection.max_iterations must be >= 1");
    return out;
  }
};

struct RankVector {
  std::map<std::string, double> scores;
  std::size_t iterations = 0;

  double sum() const {
    double total = 0.0;
    for (const auto& [_, r] : scores) total += r;
    return total;
  }
};

/// Power iteration ran out of iterations; the last iterate is attached.
class NonConvergenceError : public Error {
 public:
  NonConvergenceError(RankVector last, double residual)
      : Error(ErrorKind::non_convergence, "rank iteration did not converge after " +
                                              std::to_string(last.iterations) + " iterations (L1 change " +
                                              std::to_string(residual) + ")"),
        last_(std::move(last)) {}

  const RankVector& last_iterate() const { return last_; }

 private:
  RankVector last_;
};

/// Weighted PageRank by power iteration on the row-normalized adjacency:
///   r' = (1 - d)/|V| + d * (M^T r + dangling/|V|)
/// Nodes with zero total out-weight are dangling and teleport uniformly.
/// Stops when the L1 change drops below the tolerance.
inline RankVector rank_graph(const AttributeGraph& graph, const SelectionConfig& config) {
  if (graph.nodes.empty()) throw Error(ErrorKind::invalid_argument, "cannot rank an empty graph");
  const std::vector<std::string> names(graph.nodes.begin(), graph.nodes.end());
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < names.size(); ++i) index.emplace(names[i], i);
  const std::size_t n = names.size();
  const double nd = static_cast<double>(n);
  const double d = config.damping;

  struct Arc {
    std::size_t from, to;
    double weight;
  };
  std::vector<Arc> arcs;
  std::vector<double> out_weight(n, 0.0);
  for (const auto& [key, w] : graph.edges) {
    auto from = index.find(key.first);
    auto to = index.find(key.second);
    if (from == index.end() || to == index.end())
      throw Error(ErrorKind::invalid_argument, "edge endpoint missing from node set");
    if (w < 0.0 || !std::isfinite(w)) throw Error(ErrorKind::invalid_argument, "edge weights must be finite and >= 0");
    if (w == 0.0) continue;
    arcs.push_back({from->second, to->second, w});
    out_weight[from->second] += w;
  }

  std::vector<double> rank(n, 1.0 / nd), next(n);
  double residual = 0.0;
  std::size_t iteration = 0;
  while (iteration < config.max_iterations) {
    ++iteration;
    double dangling = 0.0;
    for (std::size_t u = 0; u < n; ++u) {
      if (out_weight[u] == 0.0) dangling += rank[u];
    }
    std::fill(next.begin(), next.end(), (1.0 - d) / nd + d * dangling / nd);
    for (const Arc& a : arcs) next[a.to] += d * rank[a.from] * a.weight / out_weight[a.from];

    residual = 0.0;
    for (std::size_t i = 0; i < n; ++i) residual += std::abs(next[i] - rank[i]);
    rank.swap(next);
    if (residual < config.tolerance) break;
  }

  RankVector out;
  out.iterations = iteration;
  for (std::size_t i = 0; i < n; ++i) out.scores.emplace(names[i], rank[i]);
  if (residual >= config.tolerance) throw NonConvergenceError(std::move(out), residual);
  return out;
}

using RankedToken = std::pair<std::string, double>;

struct KeyTokenSet {
  std::vector<RankedToken> positive;
  std::vector<RankedToken> negative;

  bool empty() const { return positive.empty() && negative.empty(); }
};

namespace detail {

inline void sort_by_rank(std::vector<RankedToken>& tokens) {
  std::sort(tokens.begin(), tokens.end(), [](const RankedToken& a, const RankedToken& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
}

inline std::vector<RankedToken> preliminary(const RankVector& ranks, const SelectionConfig& config, double theta) {
  std::vector<RankedToken> eligible;
  for (const auto& [token, r] : ranks.scores) {
    if (config.stopwords.count(token) || is_pure_punctuation(token)) continue;
    if (config.mode == SelectionMode::threshold && !(r > theta)) continue;
    eligible.emplace_back(token, r);
  }
  sort_by_rank(eligible);
  if (config.mode == SelectionMode::top_k && eligible.size() > config.top_k) eligible.resize(config.top_k);
  return eligible;
}

}  // namespace detail

/// Picks key positive and negative tokens. Stopwords and pure punctuation are
/// never selected. A token shortlisted on both sides stays only on the side
/// where it ranks higher; an exact tie drops it from both.
inline KeyTokenSet select_key_tokens(const RankVector& ranks_pos, const RankVector& ranks_neg,
                                     const SelectionConfig& config) {
  auto pos = detail::preliminary(ranks_pos, config, config.theta_p);
  auto neg = detail::preliminary(ranks_neg, config, config.theta_n);

  std::map<std::string, double> pos_rank(pos.begin(), pos.end());
  std::map<std::string, double> neg_rank(neg.begin(), neg.end());

  KeyTokenSet keys;
  for (const auto& [token, r] : pos) {
    auto other = neg_rank.find(token);
    if (other == neg_rank.end() || r > other->second) keys.positive.emplace_back(token, r);
  }
  for (const auto& [token, r] : neg) {
    auto other = pos_rank.find(token);
    if (other == pos_rank.end() || r > other->second) keys.negative.emplace_back(token, r);
  }
  return keys;
}

inline nlohmann::json key_tokens_to_json(const KeyTokenSet& keys) {
  auto side = [](const std::vector<RankedToken>& tokens) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [token, r] : tokens) arr.push_back({token, r});
    return arr;
  };
  return {{"positive", side(keys.positive)}, {"negative", side(keys.negative)}};
}

inline KeyTokenSet key_tokens_from_json(const nlohmann::json& j) {
  KeyTokenSet keys;
  for (const auto& e : j.at("positive")) keys.positive.emplace_back(e.at(0).get<std::string>(), e.at(1).get<double>());
  for (const auto& e : j.at("negative")) keys.negative.emplace_back(e.at(0).get<std::string>(), e.at(1).get<double>());
  return keys;
}

namespace detail {

inline std::string dot_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace detail

/// Graphviz rendering with nodes and edges in sorted order; edge labels carry
/// weights to four decimals.
inline std::string export_dot(const AttributeGraph& graph) {
  std::string out = "digraph g {\n";
  for (const auto& node : graph.nodes) out += "  " + detail::dot_quote(node) + ";\n";
  char label[64];
  for (const auto& [key, w] : graph.edges) {
    std::snprintf(label, sizeof label, "%.4f", w);
    out += "  " + detail::dot_quote(key.first) + " -> " + detail::dot_quote(key.second) + " [label=\"" + label +
           "\"];\n";
  }
  out += "}\n";
  return out;
}

}  // namespace datg
