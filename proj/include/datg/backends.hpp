// Copyright 2026 The datg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "datg/error.hpp"

namespace datg {

using TokenId = std::uint32_t;

/// Sparse additive adjustment of next-token logits, keyed by vocabulary id.
using LogitBias = std::map<TokenId, double>;

struct GenerationConfig {
  std::size_t max_new_tokens = 32;
  bool do_sample = true;
  std::size_t top_k = 200;
  double top_p = 0.9;
  double temperature = 0.7;
  std::uint64_t seed = 0;

  /// Every violated constraint, in field order. Empty means valid.
  std::vector<std::string> violations() const {
    std::vector<std::string> out;
    if (max_new_tokens < 1) out.emplace_back("max_new_tokens must be >= 1");
    if (top_k < 1) out.emplace_back("top_k must be >= 1");
    if (!(top_p > 0.0 && top_p <= 1.0)) out.emplace_back("top_p must be in (0, 1]");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) out.emplace_back("temperature must be > 0");
    return out;
  }

  void validate() const {
    auto v = violations();
    if (!v.empty()) throw Error(ErrorKind::invalid_argument, v.front());
  }
};

struct NextTokenDistribution {
  std::vector<double> logits;

  std::size_t vocab_size() const { return logits.size(); }
};

struct GeneratorCapabilities {
  bool supports_logit_bias = false;
  bool supports_full_distribution = false;
  bool supports_sequence_scoring = false;
};

/// Text generator contract. Implementations must be safe to call from
/// several threads at once.
class Generator {
 public:
  virtual ~Generator() = default;

  virtual GeneratorCapabilities capabilities() const = 0;

  /// Samples `n` continuations of `prompt`; sequence i uses seed + i.
  virtual std::vector<std::string> generate(std::string_view prompt, const GenerationConfig& config,
                                            const LogitBias& bias = {}, std::size_t n = 1) const = 0;

  virtual NextTokenDistribution next_token_distribution(std::string_view /*prefix*/,
                                                        const LogitBias& /*bias*/ = {}) const {
    throw Error(ErrorKind::capability_missing, "backend does not expose next-token distributions");
  }

  /// Mean negative log-likelihood (nats) per completion token given the prompt.
  virtual double score_sequence(std::string_view /*prompt*/, std::string_view /*completion*/) const {
    throw Error(ErrorKind::capability_missing, "backend does not support sequence scoring");
  }

  /// Surface text of a vocabulary id, used when decoding step by step.
  virtual std::string token_text(TokenId /*id*/) const {
    throw Error(ErrorKind::capability_missing, "backend does not expose its vocabulary");
  }

  virtual std::optional<TokenId> end_of_text() const { return std::nullopt; }
};

/// Scores text for consistency with the target attribute, in [0, 1].
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual double classify(std::string_view text) const = 0;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<double> embed(std::string_view text) const = 0;
};

inline void check_generate_preconditions(const Generator& generator, std::string_view prompt,
                                         const GenerationConfig& config, const LogitBias& bias) {
  if (prompt.empty()) throw Error(ErrorKind::invalid_argument, "empty prompt");
  config.validate();
  if (!bias.empty() && !generator.capabilities().supports_logit_bias)
    throw Error(ErrorKind::capability_missing, "logit bias requested but backend does not support it");
}

inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error(ErrorKind::invalid_argument, "embedding dimensions differ");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  double c = dot / (std::sqrt(na) * std::sqrt(nb));
  if (c > 1.0) c = 1.0;
  if (c < -1.0) c = -1.0;
  return c;
}

}  // namespace datg
