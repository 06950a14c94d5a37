// Copyright 2026 The datg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "datg/backends.hpp"
#include "datg/graph.hpp"
#include "datg/http_backends.hpp"
#include "datg/ngram.hpp"

namespace datg {

enum class Strategy { logits_boost, prefix_prompt };

inline std::string_view to_string(Strategy s) {
  return s == Strategy::logits_boost ? "logits_boost" : "prefix_prompt";
}

struct ControlConfig {
  double alpha = 4.0;
  double beta = 6.0;
  std::size_t corpus_size = 30;
  SelectionConfig selection;
  Strategy strategy = Strategy::logits_boost;
  std::size_t max_prefix_words = 10;

  std::vector<std::string> violations() const {
    std::vector<std::string> out;
    if (!(alpha >= 0.0)) out.emplace_back("control.alpha must be >= 0");
    if (!(beta >= 0.0)) out.emplace_back("control.beta must be >= 0");
    if (corpus_size < 1) out.emplace_back("control.corpus_size must be >= 1");
    if (max_prefix_words < 1) out.emplace_back("control.max_prefix_words must be >= 1");
    for (auto& v : selection.violations()) out.push_back(std::move(v));
    return out;
  }
};

/// Maps a normalized graph token to the vocabulary ids of one backend.
class VocabularyMapper {
 public:
  virtual ~VocabularyMapper() = default;
  virtual std::vector<TokenId> ids_for(const std::string& word) const = 0;
};

/// Exact word match against the n-gram model's vocabulary.
class ExactWordMapper final : public VocabularyMapper {
 public:
  explicit ExactWordMapper(const NGramGenerator& model) : model_(model) {}

  std::vector<TokenId> ids_for(const std::string& word) const override {
    if (auto id = model_.id_of(word); id && *id != *model_.end_of_text()) return {*id};
    return {};
  }

 private:
  const NGramGenerator& model_;
};

/// Subword vocabulary lookup: a word maps to every id whose decoded string,
/// lowercased and trimmed, equals the word. Leading-space markers used by
/// byte-level BPE ("Ġ") and SentencePiece ("▁") count as whitespace, so
/// " word", "Ġword" and "▁word" all match "word".
class VocabularyFileMapper final : public VocabularyMapper {
 public:
  explicit VocabularyFileMapper(const VocabularyTable& table) {
    table.for_each([&](TokenId id, const std::string& text) {
      std::string key = surface_key(text);
      if (!key.empty()) index_[key].push_back(id);
    });
  }

  std::vector<TokenId> ids_for(const std::string& word) const override {
    auto it = index_.find(word);
    return it == index_.end() ? std::vector<TokenId>{} : it->second;
  }

  static std::string surface_key(const std::string& text) {
    std::string s;
    for (std::size_t i = 0; i < text.size();) {
      if (text.compare(i, 2, "\xC4\xA0") == 0) {  // U+0120
        s += ' ';
        i += 2;
      } else if (text.compare(i, 3, "\xE2\x96\x81") == 0) {  // U+2581
        s += ' ';
        i += 3;
      } else {
        s += text[i++];
      }
    }
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    s = s.substr(first, last - first + 1);
    std::string lowered;
    detail::nfc_lower(s).toUTF8String(lowered);
    return lowered;
  }

 private:
  std::unordered_map<std::string, std::vector<TokenId>> index_;
};

struct LogitBiasMap {
  LogitBias entries;
  std::vector<std::string> skipped;
};

/// Realizes alpha * 1_Pos - beta * 1_Neg as a sparse map. An id reachable from
/// both sides is suppressed. Tokens without any vocabulary id are skipped.
inline LogitBiasMap build_logit_bias(const KeyTokenSet& keys, const ControlConfig& config,
                                     const VocabularyMapper& mapper) {
  LogitBiasMap out;
  for (const auto& [token, _] : keys.positive) {
    auto ids = mapper.ids_for(token);
    if (ids.empty()) out.skipped.push_back(token);
    for (TokenId id : ids) out.entries[id] = config.alpha;
  }
  for (const auto& [token, _] : keys.negative) {
    auto ids = mapper.ids_for(token);
    if (ids.empty()) out.skipped.push_back(token);
    for (TokenId id : ids) out.entries[id] = -config.beta;
  }
  return out;
}

inline std::string regenerate_logits_boost(std::string_view prompt, const KeyTokenSet& keys,
                                           const ControlConfig& control, const GenerationConfig& generation,
                                           const Generator& generator, const VocabularyMapper& mapper) {
  if (!generator.capabilities().supports_logit_bias)
    throw Error(ErrorKind::capability_missing, "logits-boost needs a backend with logit bias support");
  const LogitBiasMap bias = build_logit_bias(keys, control, mapper);
  auto texts = generator.generate(prompt, generation, bias.entries, 1);
  if (texts.empty()) throw Error(ErrorKind::generation_failed, "backend returned no continuation");
  return texts.front();
}

inline constexpr std::string_view kPrefixLead = "The following passage";

/// "The following passage often discusses P but does not mention N." with
/// words comma-joined in rank order and truncated per side. An empty side
/// drops its clause; with both sides empty the prefix is empty.
inline std::string build_prefix(const KeyTokenSet& keys, std::size_t max_words_per_side = 10) {
  auto words = [&](const std::vector<RankedToken>& side) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < side.size() && i < max_words_per_side; ++i) out.push_back(side[i].first);
    return join(out, ", ");
  };
  const std::string pos = words(keys.positive);
  const std::string neg = words(keys.negative);
  const std::string lead(kPrefixLead);
  if (!pos.empty() && !neg.empty()) return lead + " often discusses " + pos + " but does not mention " + neg + ".";
  if (!pos.empty()) return lead + " often discusses " + pos + ".";
  if (!neg.empty()) return lead + " does not mention " + neg + ".";
  return {};
}

inline std::string build_prefix_prompt(const KeyTokenSet& keys, std::string_view prompt,
                                       std::size_t max_words_per_side = 10) {
  return append_text(build_prefix(keys, max_words_per_side), prompt);
}

/// Removes an echoed conditioning text from the front of a completion.
inline std::string strip_echo(std::string completion, std::string_view conditioning) {
  if (!conditioning.empty() && completion.starts_with(conditioning)) {
    completion.erase(0, conditioning.size());
    const auto first = completion.find_first_not_of(' ');
    completion.erase(0, first == std::string::npos ? completion.size() : first);
  }
  return completion;
}

inline std::string regenerate_prefix(std::string_view prompt, const KeyTokenSet& keys, const ControlConfig& control,
                                     const GenerationConfig& generation, const Generator& generator) {
  const std::string augmented = build_prefix_prompt(keys, prompt, control.max_prefix_words);
  auto texts = generator.generate(augmented, generation, {}, 1);
  if (texts.empty()) throw Error(ErrorKind::generation_failed, "backend returned no continuation");
  return strip_echo(std::move(texts.front()), augmented);
}

struct ControlDirective {
  Strategy strategy = Strategy::logits_boost;
  std::optional<LogitBias> bias;
  std::optional<std::string> prefix;
  std::vector<std::string> skipped_tokens;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["strategy"] = std::string(to_string(strategy));
    if (bias) {
      nlohmann::json b = nlohmann::json::object();
      for (const auto& [id, v] : *bias) b[std::to_string(id)] = v;
      j["bias"] = b;
    } else {
      j["bias"] = nullptr;
    }
    j["prefix"] = prefix ? nlohmann::json(*prefix) : nlohmann::json(nullptr);
    j["skipped_tokens"] = skipped_tokens;
    return j;
  }
};

inline ControlDirective make_directive(const KeyTokenSet& keys, const ControlConfig& control,
                                       const VocabularyMapper* mapper) {
  ControlDirective d;
  d.strategy = control.strategy;
  if (control.strategy == Strategy::logits_boost) {
    if (!mapper) throw Error(ErrorKind::invalid_argument, "logits-boost directive needs a vocabulary mapper");
    LogitBiasMap map = build_logit_bias(keys, control, *mapper);
    d.bias = std::move(map.entries);
    d.skipped_tokens = std::move(map.skipped);
  } else {
    d.prefix = build_prefix(keys, control.max_prefix_words);
  }
  return d;
}

}  // namespace datg
