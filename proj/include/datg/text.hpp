// Copyright 2026 The datg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include "datg/error.hpp"

namespace datg {

namespace detail {

inline bool is_punct(UChar32 c) { return u_ispunct(c); }

inline icu::UnicodeString nfc_lower(std::string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error(ErrorKind::invalid_argument, "ICU NFC normalizer unavailable");
  icu::UnicodeString source = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  icu::UnicodeString normalized = nfc->normalize(source, status);
  if (U_FAILURE(status)) throw Error(ErrorKind::invalid_argument, "NFC normalization failed");
  normalized.toLower(icu::Locale::getRoot());
  // Lowercasing can denormalize a few sequences; renormalize to keep NFC.
  icu::UnicodeString result = nfc->normalize(normalized, status);
  if (U_FAILURE(status)) throw Error(ErrorKind::invalid_argument, "NFC normalization failed");
  return result;
}

}  // namespace detail

/// Splits text into normalized word tokens: NFC, lowercase, whitespace split,
/// leading/trailing punctuation stripped, empty tokens dropped. Order and
/// duplicates are preserved.
inline std::vector<std::string> tokenize_for_graph(std::string_view text) {
  std::vector<std::string> tokens;
  if (text.empty()) return tokens;
  const icu::UnicodeString normalized = detail::nfc_lower(text);
  const int32_t length = normalized.length();

  int32_t i = 0;
  while (i < length) {
    while (i < length && u_isUWhiteSpace(normalized.char32At(i))) i = normalized.moveIndex32(i, 1);
    int32_t start = i;
    while (i < length && !u_isUWhiteSpace(normalized.char32At(i))) i = normalized.moveIndex32(i, 1);
    int32_t end = i;

    while (start < end && detail::is_punct(normalized.char32At(start)))
      start = normalized.moveIndex32(start, 1);
    while (end > start) {
      int32_t prev = normalized.moveIndex32(end, -1);
      if (!detail::is_punct(normalized.char32At(prev))) break;
      end = prev;
    }
    if (end > start) {
      std::string token;
      normalized.tempSubStringBetween(start, end).toUTF8String(token);
      tokens.push_back(std::move(token));
    }
  }
  return tokens;
}

/// True when every code point of the token is punctuation.
inline bool is_pure_punctuation(std::string_view token) {
  if (token.empty()) return false;
  const icu::UnicodeString u = icu::UnicodeString::fromUTF8(
      icu::StringPiece(token.data(), static_cast<int32_t>(token.size())));
  for (int32_t i = 0; i < u.length(); i = u.moveIndex32(i, 1)) {
    if (!detail::is_punct(u.char32At(i))) return false;
  }
  return true;
}

/// 64-bit FNV-1a. Stable across platforms, unlike std::hash.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view separator) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += separator;
    out += parts[i];
  }
  return out;
}

/// Appends a continuation to a context with a single separating space.
inline std::string append_text(std::string_view context, std::string_view continuation) {
  if (continuation.empty()) return std::string(context);
  if (context.empty()) return std::string(continuation);
  std::string out(context);
  out += ' ';
  out += continuation;
  return out;
}

}  // namespace datg
