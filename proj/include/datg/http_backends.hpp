// Copyright 2026 The datg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <fstream>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "datg/backends.hpp"

namespace datg {

struct HttpEndpoint {
  std::string base_url;  // scheme://host:port
  std::size_t max_in_flight = 4;
  int connect_timeout_seconds = 5;
  int read_timeout_seconds = 60;
};

namespace detail {

/// Bounds concurrent requests and performs JSON POSTs.
class JsonPoster {
 public:
  explicit JsonPoster(HttpEndpoint endpoint)
      : endpoint_(std::move(endpoint)),
        slots_(std::make_unique<std::counting_semaphore<>>(
            static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, endpoint_.max_in_flight)))) {}

  nlohmann::json post(const std::string& path, const nlohmann::json& body) const {
    slots_->acquire();
    struct Release {
      std::counting_semaphore<>* s;
      ~Release() { s->release(); }
    } release{slots_.get()};

    httplib::Client client(endpoint_.base_url);
    client.set_connection_timeout(endpoint_.connect_timeout_seconds);
    client.set_read_timeout(endpoint_.read_timeout_seconds);
    auto res = client.Post(path, body.dump(), "application/json");
    if (!res)
      throw Error(ErrorKind::backend_unreachable,
                  endpoint_.base_url + path + ": " + httplib::to_string(res.error()));
    if (res->status != 200)
      throw Error(ErrorKind::backend_unreachable,
                  endpoint_.base_url + path + ": HTTP " + std::to_string(res->status));
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::backend_unreachable, endpoint_.base_url + path + ": malformed JSON: " + e.what());
    }
  }

  const HttpEndpoint& endpoint() const { return endpoint_; }

 private:
  HttpEndpoint endpoint_;
  std::unique_ptr<std::counting_semaphore<>> slots_;
};

}  // namespace detail

/// POST /classify {"text": ...} -> {"score": 0..1}
class HttpClassifier final : public Classifier {
 public:
  explicit HttpClassifier(HttpEndpoint endpoint) : poster_(std::move(endpoint)) {}

  double classify(std::string_view text) const override {
    const auto reply = poster_.post("/classify", {{"text", std::string(text)}});
    if (!reply.contains("score") || !reply["score"].is_number())
      throw Error(ErrorKind::classifier_failed, "classifier reply lacks numeric 'score'");
    const double score = reply["score"].get<double>();
    if (!(score >= 0.0 && score <= 1.0))
      throw Error(ErrorKind::classifier_failed, "classifier score outside [0, 1]");
    return score;
  }

 private:
  detail::JsonPoster poster_;
};

/// POST /embed {"text": ...} -> {"vector": [...]}
class HttpEmbedder final : public Embedder {
 public:
  explicit HttpEmbedder(HttpEndpoint endpoint) : poster_(std::move(endpoint)) {}

  std::vector<double> embed(std::string_view text) const override {
    const auto reply = poster_.post("/embed", {{"text", std::string(text)}});
    if (!reply.contains("vector") || !reply["vector"].is_array())
      throw Error(ErrorKind::backend_unreachable, "embedder reply lacks 'vector'");
    return reply["vector"].get<std::vector<double>>();
  }

 private:
  detail::JsonPoster poster_;
};

/// Id <-> surface-string table for a remote model's tokenizer, read from a
/// JSON object {"<token string>": id, ...} (the usual vocab.json layout).
class VocabularyTable {
 public:
  VocabularyTable() = default;

  explicit VocabularyTable(const std::unordered_map<std::string, TokenId>& entries) {
    for (const auto& [text, id] : entries) add(text, id);
  }

  static VocabularyTable load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot read vocabulary " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::config, "vocabulary " + path + ": " + e.what());
    }
    if (!j.is_object()) throw Error(ErrorKind::config, "vocabulary " + path + " must be a JSON object");
    VocabularyTable table;
    for (const auto& [text, id] : j.items()) table.add(text, id.get<TokenId>());
    return table;
  }

  void add(const std::string& text, TokenId id) {
    if (id >= id_to_text_.size()) id_to_text_.resize(id + 1);
    id_to_text_[id] = text;
  }

  std::size_t size() const { return id_to_text_.size(); }

  const std::optional<std::string>& text(TokenId id) const {
    static const std::optional<std::string> none;
    return id < id_to_text_.size() ? id_to_text_[id] : none;
  }

  template <class Fn>
  void for_each(Fn&& fn) const {
    for (TokenId id = 0; id < id_to_text_.size(); ++id) {
      if (id_to_text_[id]) fn(id, *id_to_text_[id]);
    }
  }

 private:
  std::vector<std::optional<std::string>> id_to_text_;
};

struct HttpGeneratorOptions {
  HttpEndpoint endpoint;
  std::string model;
};

/// Client for an OpenAI-compatible /v1/completions server. Supports logit
/// bias but not full distributions or sequence scoring.
class HttpGenerator final : public Generator {
 public:
  explicit HttpGenerator(HttpGeneratorOptions options, std::shared_ptr<const VocabularyTable> vocab = nullptr)
      : options_(std::move(options)), poster_(options_.endpoint), vocab_(std::move(vocab)) {}

  GeneratorCapabilities capabilities() const override { return {true, false, false}; }

  nlohmann::json request_body(std::string_view prompt, const GenerationConfig& config, const LogitBias& bias,
                              std::size_t n) const {
    nlohmann::json body = {
        {"prompt", std::string(prompt)},
        {"max_tokens", config.max_new_tokens},
        {"temperature", config.do_sample ? config.temperature : 0.0},
        {"top_p", config.top_p},
        {"n", n},
        {"seed", config.seed},
    };
    if (!options_.model.empty()) body["model"] = options_.model;
    if (!bias.empty()) {
      nlohmann::json lb = nlohmann::json::object();
      for (const auto& [id, value] : bias) lb[std::to_string(id)] = value;
      body["logit_bias"] = lb;
    }
    return body;
  }

  std::vector<std::string> generate(std::string_view prompt, const GenerationConfig& config,
                                    const LogitBias& bias = {}, std::size_t n = 1) const override {
    check_generate_preconditions(*this, prompt, config, bias);
    const auto reply = poster_.post("/v1/completions", request_body(prompt, config, bias, n));
    if (!reply.contains("choices") || !reply["choices"].is_array() || reply["choices"].empty())
      throw Error(ErrorKind::generation_failed, "completion reply lacks 'choices'");
    std::vector<std::pair<std::size_t, std::string>> indexed;
    for (const auto& choice : reply["choices"]) {
      indexed.emplace_back(choice.value("index", indexed.size()), choice.value("text", std::string()));
    }
    std::stable_sort(indexed.begin(), indexed.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::string> out;
    for (auto& [_, text] : indexed) out.push_back(std::move(text));
    return out;
  }

  std::string token_text(TokenId id) const override {
    if (vocab_ && vocab_->text(id)) return *vocab_->text(id);
    return Generator::token_text(id);
  }

  const std::shared_ptr<const VocabularyTable>& vocabulary() const { return vocab_; }

 private:
  HttpGeneratorOptions options_;
  detail::JsonPoster poster_;
  std::shared_ptr<const VocabularyTable> vocab_;
};

}  // namespace datg
