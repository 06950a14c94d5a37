// Copyright 2026 The datg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "datg/backends.hpp"
#include "datg/parallel.hpp"
#include "datg/text.hpp"

namespace datg {

struct Sentence {
  std::string text;
  std::vector<std::string> tokens;

  static Sentence from_text(std::string text) {
    Sentence s{std::move(text), {}};
    s.tokens = tokenize_for_graph(s.text);
    return s;
  }

  std::size_t token_count() const { return tokens.size(); }
};

struct ScoredSentence {
  Sentence sentence;
  double score = 0.0;
};

struct ScoredCorpus {
  std::string prompt;
  std::vector<ScoredSentence> items;
};

struct CorpusOptions {
  std::size_t retry_budget = 3;
  std::size_t concurrency = 1;
};

/// Outcome of corpus construction. `errors` is non-empty when some samples
/// were dropped after exhausting the retry budget.
struct CorpusBuild {
  std::vector<Sentence> sentences;
  std::vector<std::string> warnings;
  std::vector<std::string> errors;

  bool partial() const { return !errors.empty(); }
};

/// Draws m independent continuations of the prompt (sample i is seeded with
/// seed + i). A sample that comes back empty, or throws, is retried with
/// seed + i + attempt * m up to the retry budget and then dropped. Throws if
/// no sample survives.
inline CorpusBuild build_corpus(std::string_view prompt, std::size_t m, const GenerationConfig& config,
                                const Generator& generator, const CorpusOptions& options = {}) {
  if (m < 1) throw Error(ErrorKind::invalid_argument, "corpus size m must be >= 1");
  if (prompt.empty()) throw Error(ErrorKind::invalid_argument, "empty prompt");
  config.validate();

  struct Slot {
    std::optional<Sentence> sentence;
    std::vector<std::string> warnings;
    std::string error;
  };
  std::vector<Slot> slots(m);

  parallel_for(m, options.concurrency, [&](std::size_t i) {
    Slot& slot = slots[i];
    for (std::size_t attempt = 0; attempt <= options.retry_budget; ++attempt) {
      GenerationConfig sample_config = config;
      sample_config.seed = config.seed + i + attempt * m;
      try {
        auto texts = generator.generate(prompt, sample_config, {}, 1);
        if (!texts.empty()) {
          Sentence s = Sentence::from_text(std::move(texts.front()));
          if (s.token_count() > 0) {
            slot.sentence = std::move(s);
            return;
          }
        }
        slot.warnings.push_back("sample " + std::to_string(i) + " attempt " + std::to_string(attempt) +
                                ": empty generation");
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::invalid_argument || e.kind() == ErrorKind::capability_missing) throw;
        slot.warnings.push_back("sample " + std::to_string(i) + " attempt " + std::to_string(attempt) + ": " +
                                e.what());
      }
    }
    slot.error = "sample " + std::to_string(i) + " dropped after " + std::to_string(options.retry_budget) +
                 " retries";
  });

  CorpusBuild out;
  for (auto& slot : slots) {
    out.warnings.insert(out.warnings.end(), slot.warnings.begin(), slot.warnings.end());
    if (slot.sentence) out.sentences.push_back(std::move(*slot.sentence));
    else out.errors.push_back(std::move(slot.error));
  }
  if (out.sentences.empty())
    throw Error(ErrorKind::generation_failed,
                "no usable generation for prompt after " + std::to_string(options.retry_budget) + " retries");
  return out;
}

/// Raised when the classifier fails on one sentence; carries its index.
class CorpusScoringError : public Error {
 public:
  CorpusScoringError(std::size_t index, const std::string& what)
      : Error(ErrorKind::classifier_failed, "sentence " + std::to_string(index) + ": " + what), index_(index) {}

  std::size_t failing_index() const { return index_; }

 private:
  std::size_t index_;
};

/// Scores each sentence's text (continuation only, never the prompt).
inline ScoredCorpus score_corpus(const std::vector<Sentence>& sentences, const Classifier& classifier,
                                 std::string_view prompt, std::size_t concurrency = 1) {
  if (sentences.empty()) throw Error(ErrorKind::invalid_argument, "cannot score an empty corpus");
  ScoredCorpus corpus{std::string(prompt), std::vector<ScoredSentence>(sentences.size())};
  parallel_for(sentences.size(), concurrency, [&](std::size_t i) {
    double s = 0.0;
    try {
      s = classifier.classify(sentences[i].text);
    } catch (const std::exception& e) {
      throw CorpusScoringError(i, e.what());
    }
    if (!(s >= 0.0 && s <= 1.0)) throw CorpusScoringError(i, "score outside [0, 1]");
    corpus.items[i] = {sentences[i], s};
  });
  return corpus;
}

inline std::string corpus_to_jsonl(const ScoredCorpus& corpus) {
  std::string out;
  for (std::size_t i = 0; i < corpus.items.size(); ++i) {
    nlohmann::json line = {{"idx", i}, {"text", corpus.items[i].sentence.text}, {"score", corpus.items[i].score}};
    out += line.dump();
    out += '\n';
  }
  return out;
}

/// Parses the corpus JSONL layout; items are ordered by "idx".
inline ScoredCorpus corpus_from_jsonl(std::string_view text, std::string prompt = {}) {
  std::vector<std::pair<std::size_t, ScoredSentence>> rows;
  std::istringstream in{std::string(text)};
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const double score = j.at("score").get<double>();
      if (!(score >= 0.0 && score <= 1.0)) throw Error(ErrorKind::invalid_argument, "score outside [0, 1]");
      rows.emplace_back(j.at("idx").get<std::size_t>(),
                        ScoredSentence{Sentence::from_text(j.at("text").get<std::string>()), score});
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::invalid_argument, "corpus line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  ScoredCorpus corpus{std::move(prompt), {}};
  for (auto& [_, item] : rows) corpus.items.push_back(std::move(item));
  return corpus;
}

}  // namespace datg
