// Copyright 2026 The datg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <string_view>
#include <vector>

#include "datg/backends.hpp"
#include "datg/text.hpp"

namespace datg {

/// Hashed bag-of-words: each normalized token adds 1 to bucket
/// fnv1a64(token) % dimension, then the vector is L2-normalized. Empty text
/// (or text with no tokens) embeds to the zero vector.
class HashedEmbedder final : public Embedder {
 public:
  static constexpr std::size_t kDefaultDimension = 256;

  explicit HashedEmbedder(std::size_t dimension = kDefaultDimension) : dimension_(dimension) {
    if (dimension_ == 0) throw Error(ErrorKind::invalid_argument, "embedding dimension must be >= 1");
  }

  std::size_t dimension() const { return dimension_; }

  std::size_t bucket(std::string_view token) const { return fnv1a64(token) % dimension_; }

  std::vector<double> embed(std::string_view text) const override {
    std::vector<double> v(dimension_, 0.0);
    for (const auto& token : tokenize_for_graph(text)) v[bucket(token)] += 1.0;
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm > 0.0) {
      norm = std::sqrt(norm);
      for (double& x : v) x /= norm;
    }
    return v;
  }

 private:
  std::size_t dimension_;
};

}  // namespace datg
