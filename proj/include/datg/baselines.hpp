// Copyright 2026 The datg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "datg/backends.hpp"
#include "datg/control.hpp"
#include "datg/parallel.hpp"
#include "datg/sampling.hpp"
#include "datg/text.hpp"

namespace datg {

enum class BaselineKind { continuation, injection, fudge, preadd };

struct BaselineSpec {
  BaselineKind kind = BaselineKind::continuation;
  std::string injection_prompt;
  std::size_t fudge_top_k = 100;
  double fudge_alpha = 0.5;
  double preadd_alpha = 1.0;
  std::string preadd_prefix;
  // Bound on concurrent classifier calls per FUDGE step.
  std::size_t classifier_concurrency = 1;

  void validate() const {
    if (kind == BaselineKind::injection && injection_prompt.empty())
      throw Error(ErrorKind::invalid_argument, "injection baseline needs an injection prompt");
    if (kind == BaselineKind::preadd && preadd_prefix.empty())
      throw Error(ErrorKind::invalid_argument, "preadd baseline needs a prefix");
    if (fudge_top_k < 1) throw Error(ErrorKind::invalid_argument, "fudge_top_k must be >= 1");
  }
};

inline std::string continuation(std::string_view prompt, const GenerationConfig& config, const Generator& generator) {
  auto texts = generator.generate(prompt, config, {}, 1);
  if (texts.empty()) throw Error(ErrorKind::generation_failed, "backend returned no continuation");
  return texts.front();
}

/// Continues injection_prompt + prompt; the injected text never appears in the
/// returned completion.
inline std::string injection(std::string_view prompt, const BaselineSpec& spec, const GenerationConfig& config,
                             const Generator& generator) {
  if (spec.injection_prompt.empty())
    throw Error(ErrorKind::invalid_argument, "injection baseline needs an injection prompt");
  const std::string conditioned = append_text(spec.injection_prompt, prompt);
  return strip_echo(continuation(conditioned, config, generator), conditioned);
}

inline constexpr double kFudgeScoreFloor = 1e-6;

/// The k highest-logit ids (clamped to the vocabulary), lower id first on ties.
inline std::vector<TokenId> fudge_candidates(std::span<const double> logits, std::size_t k) {
  std::vector<TokenId> order = rank_ids(logits);
  order.resize(std::min(k, order.size()));
  return order;
}

/// logit(c) + alpha * ln(max(s_c, eps)) on candidates, -inf elsewhere.
inline std::vector<double> fudge_adjusted_logits(std::span<const double> logits, std::span<const TokenId> candidates,
                                                 std::span<const double> scores, double alpha) {
  if (candidates.size() != scores.size())
    throw Error(ErrorKind::invalid_argument, "one attribute score per candidate required");
  std::vector<double> out(logits.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    out[candidates[i]] = logits[candidates[i]] + alpha * std::log(std::max(scores[i], kFudgeScoreFloor));
  }
  return out;
}

/// Classifier-guided decoding: each step rescores the top-k candidates by the
/// attribute score of the context extended with the candidate, then samples
/// through the usual temperature/top-k/top-p pipeline.
inline std::string fudge_generate(std::string_view prompt, const BaselineSpec& spec, const GenerationConfig& config,
                                  const Generator& generator, const Classifier& classifier) {
  if (!generator.capabilities().supports_full_distribution)
    throw Error(ErrorKind::capability_missing, "FUDGE needs next-token distributions");
  if (prompt.empty()) throw Error(ErrorKind::invalid_argument, "empty prompt");
  config.validate();
  const auto eos = generator.end_of_text();
  auto ids = decode(config, eos, [&](const std::vector<TokenId>& generated) {
    const std::string context = append_text(prompt, detokenize(generator, generated));
    const NextTokenDistribution dist = generator.next_token_distribution(context);
    const std::vector<TokenId> candidates = fudge_candidates(dist.logits, spec.fudge_top_k);
    std::vector<double> scores(candidates.size());
    parallel_for(candidates.size(), spec.classifier_concurrency, [&](std::size_t i) {
      const bool is_eos = eos && candidates[i] == *eos;
      scores[i] = classifier.classify(is_eos ? context : append_text(context, generator.token_text(candidates[i])));
    });
    return fudge_adjusted_logits(dist.logits, candidates, scores, spec.fudge_alpha);
  });
  return detokenize(generator, ids);
}

/// z_base + alpha * (z_base - z_prefixed)
inline std::vector<double> preadd_contrast_logits(std::span<const double> base, std::span<const double> prefixed,
                                                  double alpha) {
  if (base.size() != prefixed.size()) throw Error(ErrorKind::invalid_argument, "logit vectors differ in size");
  std::vector<double> out(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) out[i] = base[i] + alpha * (base[i] - prefixed[i]);
  return out;
}

/// Contrastive prefix decoding: steers away from whatever the prefix
/// describes by contrasting logits with and without it.
inline std::string preadd_generate(std::string_view prompt, const BaselineSpec& spec, const GenerationConfig& config,
                                   const Generator& generator) {
  if (!generator.capabilities().supports_full_distribution)
    throw Error(ErrorKind::capability_missing, "PREADD needs next-token distributions");
  if (prompt.empty()) throw Error(ErrorKind::invalid_argument, "empty prompt");
  if (spec.preadd_prefix.empty()) throw Error(ErrorKind::invalid_argument, "preadd baseline needs a prefix");
  config.validate();
  auto ids = decode(config, generator.end_of_text(), [&](const std::vector<TokenId>& generated) {
    const std::string context = append_text(prompt, detokenize(generator, generated));
    const auto base = generator.next_token_distribution(context);
    const auto prefixed = generator.next_token_distribution(append_text(spec.preadd_prefix, context));
    return preadd_contrast_logits(base.logits, prefixed.logits, spec.preadd_alpha);
  });
  return detokenize(generator, ids);
}

}  // namespace datg
