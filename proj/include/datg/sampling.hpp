// Copyright 2026 The datg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "datg/backends.hpp"

namespace datg {

/// Seeded 64-bit Mersenne twister with a portable [0, 1) draw; the standard
/// distributions are implementation-defined and would break cross-platform
/// reproducibility.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(bound));
  }

 private:
  std::mt19937_64 engine_;
};

/// Numerically stable softmax. Entries equal to -inf get probability 0.
inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size(), 0.0);
  if (logits.empty()) return p;
  const double max = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - max);
    total += p[i];
  }
  for (double& x : p) x /= total;
  return p;
}

inline void apply_bias(std::vector<double>& logits, const LogitBias& bias) {
  for (const auto& [id, delta] : bias) {
    if (id >= logits.size())
      throw Error(ErrorKind::invalid_argument, "bias id " + std::to_string(id) + " outside vocabulary");
    logits[id] += delta;
  }
}

/// Ids ordered by logit descending, lower id first on ties.
inline std::vector<TokenId> rank_ids(std::span<const double> logits) {
  std::vector<TokenId> order(logits.size());
  std::iota(order.begin(), order.end(), TokenId{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](TokenId a, TokenId b) { return logits[a] > logits[b]; });
  return order;
}

/// The distribution a sampling step draws from, after temperature, top-k and
/// top-p filtering (in that order). Logits must already carry any bias.
inline std::vector<double> sampling_distribution(std::span<const double> logits,
                                                 const GenerationConfig& config) {
  const std::size_t vocab = logits.size();
  std::vector<double> scaled(logits.begin(), logits.end());
  for (double& z : scaled) z /= config.temperature;

  std::vector<TokenId> order = rank_ids(scaled);
  const std::size_t keep_k = std::min(config.top_k, vocab);
  order.resize(keep_k);

  std::vector<double> kept(keep_k);
  for (std::size_t i = 0; i < keep_k; ++i) kept[i] = scaled[order[i]];
  std::vector<double> p = softmax(kept);

  std::size_t keep_p = keep_k;
  if (config.top_p < 1.0) {
    double cumulative = 0.0;
    for (std::size_t i = 0; i < keep_k; ++i) {
      cumulative += p[i];
      if (cumulative >= config.top_p) {
        keep_p = i + 1;
        break;
      }
    }
  }
  double mass = 0.0;
  for (std::size_t i = 0; i < keep_p; ++i) mass += p[i];

  std::vector<double> out(vocab, 0.0);
  for (std::size_t i = 0; i < keep_p; ++i) out[order[i]] = p[i] / mass;
  return out;
}

inline TokenId argmax(std::span<const double> logits) {
  return static_cast<TokenId>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

/// Draws one token. Greedy decoding (do_sample = false) takes the argmax and
/// consumes no randomness.
inline TokenId sample_next(std::span<const double> logits, const GenerationConfig& config, Rng& rng) {
  if (!config.do_sample) return argmax(logits);
  const std::vector<double> p = sampling_distribution(logits, config);
  const double u = rng.uniform();
  double cumulative = 0.0;
  std::optional<TokenId> last_nonzero;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    last_nonzero = static_cast<TokenId>(i);
    cumulative += p[i];
    if (u < cumulative) return static_cast<TokenId>(i);
  }
  // Rounding left cumulative just below 1.
  return *last_nonzero;
}

/// Autoregressive loop shared by every step-wise decoder. `step` maps the ids
/// generated so far to next-token logits; generation stops at end-of-text or
/// after max_new_tokens. The end-of-text id is never returned.
template <class StepFn>
std::vector<TokenId> decode(const GenerationConfig& config, std::optional<TokenId> end_of_text,
                            StepFn&& step) {
  Rng rng(config.seed);
  std::vector<TokenId> generated;
  generated.reserve(config.max_new_tokens);
  while (generated.size() < config.max_new_tokens) {
    const std::vector<double> logits = step(static_cast<const std::vector<TokenId>&>(generated));
    const TokenId next = sample_next(logits, config, rng);
    if (end_of_text && next == *end_of_text) break;
    generated.push_back(next);
  }
  return generated;
}

/// Joins decoded ids into text with single spaces.
inline std::string detokenize(const Generator& generator, std::span<const TokenId> ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += generator.token_text(ids[i]);
  }
  return out;
}

}  // namespace datg
