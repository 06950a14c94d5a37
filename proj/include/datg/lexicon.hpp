// Copyright 2026 The datg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <fstream>
#include <set>
#include <string>
#include <string_view>
#include <utility>

#include <json.hpp>

#include "datg/backends.hpp"
#include "datg/text.hpp"

namespace datg {

struct LexiconClassifierSpec {
  std::set<std::string> positive_terms;
  std::set<std::string> negative_terms;
  double smoothing = 1.0;

  void validate() const {
    if (!(smoothing > 0.0)) throw Error(ErrorKind::invalid_argument, "lexicon smoothing must be > 0");
    for (const auto& t : positive_terms) {
      if (negative_terms.count(t))
        throw Error(ErrorKind::invalid_argument, "term '" + t + "' is both positive and negative");
    }
  }

  /// Same lexicon with the target attribute flipped.
  LexiconClassifierSpec swapped() const { return {negative_terms, positive_terms, smoothing}; }
};

/// Smoothed term-ratio classifier: (p + λ) / (p + n + 2λ), where p and n count
/// positive and negative term occurrences in the tokenized text.
class LexiconClassifier final : public Classifier {
 public:
  explicit LexiconClassifier(LexiconClassifierSpec spec) : spec_(normalize(std::move(spec))) {
    spec_.validate();
  }

  /// Reads {"positive_terms": [...], "negative_terms": [...], "smoothing": λ}.
  static LexiconClassifierSpec load_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot read lexicon " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::config, "lexicon " + path + ": " + e.what());
    }
    LexiconClassifierSpec spec;
    for (const auto& t : j.value("positive_terms", nlohmann::json::array())) spec.positive_terms.insert(t.get<std::string>());
    for (const auto& t : j.value("negative_terms", nlohmann::json::array())) spec.negative_terms.insert(t.get<std::string>());
    spec.smoothing = j.value("smoothing", 1.0);
    return spec;
  }

  double classify(std::string_view text) const override {
    double p = 0.0, n = 0.0;
    for (const auto& token : tokenize_for_graph(text)) {
      if (spec_.positive_terms.count(token)) p += 1.0;
      else if (spec_.negative_terms.count(token)) n += 1.0;
    }
    const double lambda = spec_.smoothing;
    return (p + lambda) / (p + n + 2.0 * lambda);
  }

  const LexiconClassifierSpec& spec() const { return spec_; }

 private:
  static std::set<std::string> normalize_terms(const std::set<std::string>& terms) {
    std::set<std::string> out;
    for (const auto& t : terms) {
      for (auto& token : tokenize_for_graph(t)) out.insert(std::move(token));
    }
    return out;
  }

  static LexiconClassifierSpec normalize(LexiconClassifierSpec spec) {
    spec.positive_terms = normalize_terms(spec.positive_terms);
    spec.negative_terms = normalize_terms(spec.negative_terms);
    return spec;
  }

  LexiconClassifierSpec spec_;
};

}  // namespace datg
