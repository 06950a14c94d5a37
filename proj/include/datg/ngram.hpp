// Copyright 2026 The datg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "datg/backends.hpp"
#include "datg/sampling.hpp"
#include "datg/text.hpp"

namespace datg {

/// Word-level bigram model with add-one smoothing, trained from plain text
/// (one sentence per line). Immutable after construction, so safe to share
/// across threads.
///
/// Context resolution for a prefix:
///   - the most recent in-vocabulary token of the prefix is the context
///     (out-of-vocabulary tokens are skipped) and the add-one bigram applies;
///   - a context word with no observed continuations backs off to the add-one
///     unigram;
///   - a prefix with no in-vocabulary token at all gets the uniform
///     distribution.
/// Logits are natural-log probabilities, so softmax(logits) is the model
/// distribution.
class NGramGenerator final : public Generator {
 public:
  static constexpr std::string_view kEndOfText = "</s>";

  explicit NGramGenerator(const std::vector<std::string>& lines) {
    std::vector<std::vector<std::string>> sentences;
    std::set<std::string> words{std::string(kEndOfText)};
    for (const auto& line : lines) {
      auto tokens = tokenize_for_graph(line);
      std::erase(tokens, std::string(kEndOfText));
      if (tokens.empty()) continue;
      words.insert(tokens.begin(), tokens.end());
      sentences.push_back(std::move(tokens));
    }
    vocab_.assign(words.begin(), words.end());
    for (TokenId id = 0; id < vocab_.size(); ++id) index_.emplace(vocab_[id], id);
    eos_ = index_.at(std::string(kEndOfText));

    const std::size_t v = vocab_.size();
    std::vector<std::unordered_map<TokenId, std::uint32_t>> pair_counts(v);
    context_totals_.assign(v, 0);
    unigram_counts_.assign(v, 0);
    for (const auto& sentence : sentences) {
      for (std::size_t i = 0; i < sentence.size(); ++i) {
        const TokenId cur = index_.at(sentence[i]);
        const TokenId next = i + 1 < sentence.size() ? index_.at(sentence[i + 1]) : eos_;
        ++pair_counts[cur][next];
        ++context_totals_[cur];
        ++unigram_counts_[cur];
      }
      ++unigram_counts_[eos_];
    }
    unigram_total_ = 0;
    for (auto c : unigram_counts_) unigram_total_ += c;

    successors_.resize(v);
    for (std::size_t ctx = 0; ctx < v; ++ctx) {
      successors_[ctx].assign(pair_counts[ctx].begin(), pair_counts[ctx].end());
      std::sort(successors_[ctx].begin(), successors_[ctx].end());
    }
  }

  static NGramGenerator from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot read seed corpus " + path);
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    return NGramGenerator(lines);
  }

  GeneratorCapabilities capabilities() const override { return {true, true, true}; }

  std::size_t vocab_size() const { return vocab_.size(); }
  const std::vector<std::string>& vocabulary() const { return vocab_; }

  std::optional<TokenId> id_of(std::string_view word) const {
    auto it = index_.find(std::string(word));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::string token_text(TokenId id) const override {
    if (id >= vocab_.size()) throw Error(ErrorKind::invalid_argument, "token id out of range");
    return vocab_[id];
  }

  std::optional<TokenId> end_of_text() const override { return eos_; }

  std::vector<std::string> generate(std::string_view prompt, const GenerationConfig& config,
                                    const LogitBias& bias = {}, std::size_t n = 1) const override {
    check_generate_preconditions(*this, prompt, config, bias);
    const std::optional<TokenId> prompt_context = context_of(tokenize_for_graph(prompt));
    std::vector<std::string> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      GenerationConfig per_sample = config;
      per_sample.seed = config.seed + i;
      auto ids = decode(per_sample, eos_, [&](const std::vector<TokenId>& generated) {
        std::vector<double> logits =
            log_probs(generated.empty() ? prompt_context : std::optional<TokenId>(generated.back()));
        apply_bias(logits, bias);
        return logits;
      });
      out.push_back(detokenize(*this, ids));
    }
    return out;
  }

  NextTokenDistribution next_token_distribution(std::string_view prefix,
                                                const LogitBias& bias = {}) const override {
    NextTokenDistribution d{log_probs(context_of(tokenize_for_graph(prefix)))};
    apply_bias(d.logits, bias);
    return d;
  }

  /// Out-of-vocabulary completion tokens are charged the probability of an
  /// unseen event in their context and leave the context unchanged.
  double score_sequence(std::string_view prompt, std::string_view completion) const override {
    const auto tokens = tokenize_for_graph(completion);
    if (tokens.empty()) throw Error(ErrorKind::invalid_argument, "empty completion");
    std::optional<TokenId> context = context_of(tokenize_for_graph(prompt));
    double nll = 0.0;
    for (const auto& token : tokens) {
      const auto id = id_of(token);
      nll -= id ? log_prob(context, *id) : unseen_log_prob(context);
      if (id) context = *id;
    }
    return nll / static_cast<double>(tokens.size());
  }

 private:
  std::optional<TokenId> context_of(const std::vector<std::string>& tokens) const {
    for (auto it = tokens.rbegin(); it != tokens.rend(); ++it) {
      if (auto id = id_of(*it)) return id;
    }
    return std::nullopt;
  }

  double vocab_d() const { return static_cast<double>(vocab_.size()); }

  std::vector<double> log_probs(std::optional<TokenId> context) const {
    const std::size_t v = vocab_.size();
    if (!context) return std::vector<double>(v, -std::log(vocab_d()));
    if (context_totals_[*context] == 0) {
      std::vector<double> out(v);
      const double denom = static_cast<double>(unigram_total_) + vocab_d();
      for (std::size_t w = 0; w < v; ++w) out[w] = std::log((unigram_counts_[w] + 1.0) / denom);
      return out;
    }
    const double denom = static_cast<double>(context_totals_[*context]) + vocab_d();
    std::vector<double> out(v, std::log(1.0 / denom));
    for (const auto& [next, count] : successors_[*context]) out[next] = std::log((count + 1.0) / denom);
    return out;
  }

  double log_prob(std::optional<TokenId> context, TokenId id) const { return log_probs(context)[id]; }

  double unseen_log_prob(std::optional<TokenId> context) const {
    if (!context) return -std::log(vocab_d());
    if (context_totals_[*context] == 0)
      return std::log(1.0 / (static_cast<double>(unigram_total_) + vocab_d()));
    return std::log(1.0 / (static_cast<double>(context_totals_[*context]) + vocab_d()));
  }

  std::vector<std::string> vocab_;
  std::unordered_map<std::string, TokenId> index_;
  TokenId eos_ = 0;
  std::vector<std::vector<std::pair<TokenId, std::uint32_t>>> successors_;
  std::vector<std::uint32_t> context_totals_;
  std::vector<std::uint32_t> unigram_counts_;
  std::uint64_t unigram_total_ = 0;
};

}  // namespace datg
