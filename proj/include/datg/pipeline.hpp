// Copyright 2026 The datg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "datg/baselines.hpp"
#include "datg/control.hpp"
#include "datg/corpus.hpp"
#include "datg/embedding.hpp"
#include "datg/eval.hpp"
#include "datg/graph.hpp"
#include "datg/http_backends.hpp"
#include "datg/io.hpp"
#include "datg/lexicon.hpp"
#include "datg/ngram.hpp"
#include "datg/parallel.hpp"
#include "datg/task.hpp"

namespace datg {

namespace fs = std::filesystem;

struct BackendSpec {
  std::string type;
  // ngram
  fs::path seed_corpus;
  // lexicon
  fs::path lexicon;
  bool invert = false;
  // hashed
  std::size_t dimension = HashedEmbedder::kDefaultDimension;
  // http
  std::string endpoint;
  std::string model;
  fs::path vocabulary;
  std::size_t max_in_flight = 4;
  int timeout_seconds = 60;

  nlohmann::json to_json() const {
    nlohmann::json j = {{"type", type}};
    if (type == "ngram") j["seed_corpus"] = seed_corpus.string();
    if (type == "lexicon") j.update({{"lexicon", lexicon.string()}, {"invert", invert}});
    if (type == "hashed") j["dimension"] = dimension;
    if (type == "http") {
      j.update({{"endpoint", endpoint}, {"max_in_flight", max_in_flight}, {"timeout_seconds", timeout_seconds}});
      if (!model.empty()) j["model"] = model;
      if (!vocabulary.empty()) j["vocabulary"] = vocabulary.string();
    }
    return j;
  }
};

enum class ArtifactRetention { full, reports_only };

struct BaselineOptions {
  std::size_t fudge_top_k = 100;
  double fudge_alpha = 0.5;
  double preadd_alpha = 1.0;
  fs::path templates;
};

struct PipelineConfig {
  BackendSpec generator = [] { BackendSpec s; s.type = "ngram"; return s; }();
  std::optional<BackendSpec> scorer;
  std::map<Task, BackendSpec> classifiers;
  BackendSpec embedder = [] { BackendSpec s; s.type = "hashed"; return s; }();
  GenerationConfig generation;
  ControlConfig control;
  std::size_t corpus_retry_budget = 3;
  fs::path stopwords;
  BaselineOptions baselines;
  double success_threshold = 0.5;
  std::vector<Method> methods;
  fs::path output_dir = "out";
  std::size_t concurrency_limit = 1;
  ArtifactRetention artifact_retention = ArtifactRetention::full;

  /// Everything that influences record contents. Output location, method
  /// selection and parallelism are excluded so they can change between resumed
  /// runs.
  nlohmann::json fingerprint_json() const {
    nlohmann::json classifiers_json = nlohmann::json::object();
    for (const auto& [task, spec] : classifiers) classifiers_json[std::string(to_string(task))] = spec.to_json();
    const auto& sel = control.selection;
    return {
        {"generator", generator.to_json()},
        {"scorer", scorer ? scorer->to_json() : nlohmann::json(nullptr)},
        {"classifiers", classifiers_json},
        {"embedder", embedder.to_json()},
        {"generation",
         {{"max_new_tokens", generation.max_new_tokens},
          {"do_sample", generation.do_sample},
          {"top_k", generation.top_k},
          {"top_p", generation.top_p},
          {"temperature", generation.temperature},
          {"seed", generation.seed}}},
        {"control",
         {{"alpha", control.alpha},
          {"beta", control.beta},
          {"corpus_size", control.corpus_size},
          {"max_prefix_words", control.max_prefix_words},
          {"corpus_retry_budget", corpus_retry_budget},
          {"selection",
           {{"mode", sel.mode == SelectionMode::top_k ? "top_k" : "threshold"},
            {"top_k", sel.top_k},
            {"theta_p", sel.theta_p},
            {"theta_n", sel.theta_n},
            {"stopwords", std::vector<std::string>(sel.stopwords.begin(), sel.stopwords.end())},
            {"damping", sel.damping},
            {"tolerance", sel.tolerance},
            {"max_iterations", sel.max_iterations}}}}},
        {"baselines",
         {{"fudge_top_k", baselines.fudge_top_k},
          {"fudge_alpha", baselines.fudge_alpha},
          {"preadd_alpha", baselines.preadd_alpha},
          {"templates", baselines.templates.string()}}},
        {"success_threshold", success_threshold},
    };
  }
};

struct ConfigResult {
  std::optional<PipelineConfig> config;
  std::vector<std::string> errors;

  bool ok() const { return errors.empty() && config.has_value(); }
};

namespace detail {

/// Typed field access that records every problem instead of stopping at the
/// first one.
class ConfigReader {
 public:
  ConfigReader(fs::path base_dir, std::vector<std::string>& errors) : base_(std::move(base_dir)), errors_(errors) {}

  void error(const std::string& message) { errors_.push_back(message); }

  const nlohmann::json* child(const nlohmann::json& j, const std::string& key, const std::string& path) {
    if (!j.contains(key) || j.at(key).is_null()) return nullptr;
    if (!j.at(key).is_object()) {
      error(path + " must be an object");
      return nullptr;
    }
    return &j.at(key);
  }

  template <class T>
  void read(const nlohmann::json& j, const std::string& key, const std::string& path, T& out) {
    if (!j.contains(key) || j.at(key).is_null()) return;
    const auto& v = j.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) return error(path + " must be a boolean");
      out = v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) return error(path + " must be an integer");
      if (std::is_unsigned_v<T> && v.get<long long>() < 0) return error(path + " must be >= 0");
      out = v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) return error(path + " must be a number");
      out = v.get<T>();
    } else {
      if (!v.is_string()) return error(path + " must be a string");
      out = v.get<std::string>();
    }
  }

  void read_path(const nlohmann::json& j, const std::string& key, const std::string& path, fs::path& out,
                 bool must_exist = true) {
    std::string raw;
    read(j, key, path, raw);
    if (raw.empty()) return;
    out = resolve(raw);
    if (must_exist && !fs::exists(out)) error(path + ": file not found: " + out.string());
  }

  fs::path resolve(const std::string& raw) const {
    fs::path p(raw);
    return p.is_absolute() ? p : (base_ / p).lexically_normal();
  }

  void unknown_keys(const nlohmann::json& j, const std::string& path, std::initializer_list<std::string_view> known) {
    for (const auto& [key, _] : j.items()) {
      if (std::find(known.begin(), known.end(), key) == known.end())
        error((path.empty() ? key : path + "." + key) + ": unknown key");
    }
  }

 private:
  fs::path base_;
  std::vector<std::string>& errors_;
};

inline void read_backend(ConfigReader& r, const nlohmann::json& j, const std::string& path, BackendSpec& spec,
                         std::initializer_list<std::string_view> allowed_types) {
  r.read(j, "type", path + ".type", spec.type);
  if (std::find(allowed_types.begin(), allowed_types.end(), spec.type) == allowed_types.end()) {
    std::string valid;
    for (auto t : allowed_types) valid += (valid.empty() ? "" : ", ") + std::string(t);
    r.error(path + ".type must be one of: " + valid);
    return;
  }
  if (spec.type == "ngram") {
    r.unknown_keys(j, path, {"type", "seed_corpus"});
    r.read_path(j, "seed_corpus", path + ".seed_corpus", spec.seed_corpus);
    if (spec.seed_corpus.empty()) r.error(path + ".seed_corpus is required");
  } else if (spec.type == "lexicon") {
    r.unknown_keys(j, path, {"type", "lexicon", "invert"});
    r.read_path(j, "lexicon", path + ".lexicon", spec.lexicon);
    r.read(j, "invert", path + ".invert", spec.invert);
    if (spec.lexicon.empty()) r.error(path + ".lexicon is required");
  } else if (spec.type == "hashed") {
    r.unknown_keys(j, path, {"type", "dimension"});
    r.read(j, "dimension", path + ".dimension", spec.dimension);
    if (spec.dimension < 1) r.error(path + ".dimension must be >= 1");
  } else if (spec.type == "http") {
    r.unknown_keys(j, path, {"type", "endpoint", "model", "vocabulary", "max_in_flight", "timeout_seconds"});
    r.read(j, "endpoint", path + ".endpoint", spec.endpoint);
    r.read(j, "model", path + ".model", spec.model);
    r.read_path(j, "vocabulary", path + ".vocabulary", spec.vocabulary);
    r.read(j, "max_in_flight", path + ".max_in_flight", spec.max_in_flight);
    r.read(j, "timeout_seconds", path + ".timeout_seconds", spec.timeout_seconds);
    if (spec.endpoint.empty()) r.error(path + ".endpoint is required");
    if (spec.max_in_flight < 1) r.error(path + ".max_in_flight must be >= 1");
  }
}

inline std::string valid_method_names() {
  std::string out;
  for (Method m : kAllMethods) out += (out.empty() ? "" : ", ") + std::string(to_string(m));
  return out;
}

}  // namespace detail

/// Parses and checks a configuration tree. Relative paths resolve against
/// `base_dir` (the config file's directory). All violations are reported.
inline ConfigResult parse_config(const nlohmann::json& j, const fs::path& base_dir) {
  ConfigResult result;
  if (!j.is_object()) {
    result.errors.emplace_back("config root must be an object");
    return result;
  }
  detail::ConfigReader r(base_dir, result.errors);
  PipelineConfig c;
  r.unknown_keys(j, "", {"backends", "generation", "control", "baselines", "evaluation", "methods", "output_dir",
                         "concurrency_limit", "artifact_retention"});

  if (const auto* b = r.child(j, "backends", "backends")) {
    r.unknown_keys(*b, "backends", {"generator", "scorer", "classifiers", "embedder"});
    if (const auto* g = r.child(*b, "generator", "backends.generator"))
      detail::read_backend(r, *g, "backends.generator", c.generator, {"ngram", "http"});
    else
      r.error("backends.generator is required");
    if (const auto* s = r.child(*b, "scorer", "backends.scorer")) {
      c.scorer.emplace();
      detail::read_backend(r, *s, "backends.scorer", *c.scorer, {"ngram"});
    }
    if (const auto* cl = r.child(*b, "classifiers", "backends.classifiers")) {
      for (const auto& [name, spec] : cl->items()) {
        const std::string path = "backends.classifiers." + name;
        auto task = parse_task(name);
        if (!task) {
          r.error(path + ": unknown task (valid: toxicity_mitigation, sentiment_to_positive, sentiment_to_negative)");
          continue;
        }
        if (!spec.is_object()) {
          r.error(path + " must be an object");
          continue;
        }
        detail::read_backend(r, spec, path, c.classifiers[*task], {"lexicon", "http"});
      }
    }
    if (c.classifiers.empty()) r.error("backends.classifiers must configure at least one task");
    if (const auto* e = r.child(*b, "embedder", "backends.embedder"))
      detail::read_backend(r, *e, "backends.embedder", c.embedder, {"hashed", "http"});
  } else {
    r.error("backends is required");
  }

  if (const auto* g = r.child(j, "generation", "generation")) {
    r.unknown_keys(*g, "generation", {"max_new_tokens", "do_sample", "top_k", "top_p", "temperature", "seed"});
    r.read(*g, "max_new_tokens", "generation.max_new_tokens", c.generation.max_new_tokens);
    r.read(*g, "do_sample", "generation.do_sample", c.generation.do_sample);
    r.read(*g, "top_k", "generation.top_k", c.generation.top_k);
    r.read(*g, "top_p", "generation.top_p", c.generation.top_p);
    r.read(*g, "temperature", "generation.temperature", c.generation.temperature);
    r.read(*g, "seed", "generation.seed", c.generation.seed);
  }
  for (const auto& v : c.generation.violations()) r.error(v);

  if (const auto* ctl = r.child(j, "control", "control")) {
    r.unknown_keys(*ctl, "control",
                   {"alpha", "beta", "corpus_size", "max_prefix_words", "corpus_retry_budget", "selection"});
    r.read(*ctl, "alpha", "control.alpha", c.control.alpha);
    r.read(*ctl, "beta", "control.beta", c.control.beta);
    r.read(*ctl, "corpus_size", "control.corpus_size", c.control.corpus_size);
    r.read(*ctl, "max_prefix_words", "control.max_prefix_words", c.control.max_prefix_words);
    r.read(*ctl, "corpus_retry_budget", "control.corpus_retry_budget", c.corpus_retry_budget);
    if (const auto* sel = r.child(*ctl, "selection", "control.selection")) {
      auto& s = c.control.selection;
      r.unknown_keys(*sel, "control.selection",
                     {"mode", "top_k", "theta_p", "theta_n", "stopwords", "damping", "tolerance", "max_iterations"});
      std::string mode = "top_k";
      r.read(*sel, "mode", "control.selection.mode", mode);
      if (mode == "top_k") {
        s.mode = SelectionMode::top_k;
      } else if (mode == "threshold") {
        s.mode = SelectionMode::threshold;
        if (!sel->contains("theta_p") || !sel->contains("theta_n") || sel->at("theta_p").is_null() ||
            sel->at("theta_n").is_null())
          r.error("control.selection: threshold mode needs both theta_p and theta_n");
      } else {
        r.error("control.selection.mode must be one of: top_k, threshold");
      }
      if (s.mode == SelectionMode::top_k && ((sel->contains("theta_p") && !sel->at("theta_p").is_null()) ||
                                             (sel->contains("theta_n") && !sel->at("theta_n").is_null())))
        r.error("control.selection: theta_p/theta_n are only valid in threshold mode");
      r.read(*sel, "top_k", "control.selection.top_k", s.top_k);
      r.read(*sel, "theta_p", "control.selection.theta_p", s.theta_p);
      r.read(*sel, "theta_n", "control.selection.theta_n", s.theta_n);
      r.read(*sel, "damping", "control.selection.damping", s.damping);
      r.read(*sel, "tolerance", "control.selection.tolerance", s.tolerance);
      r.read(*sel, "max_iterations", "control.selection.max_iterations", s.max_iterations);
      r.read_path(*sel, "stopwords", "control.selection.stopwords", c.stopwords);
    }
  }
  for (const auto& v : c.control.violations()) r.error(v);
  if (!c.stopwords.empty() && fs::exists(c.stopwords)) {
    try {
      c.control.selection.stopwords = load_stopwords(c.stopwords.string());
    } catch (const Error& e) {
      r.error(std::string("control.selection.stopwords: ") + e.what());
    }
  }

  if (const auto* bl = r.child(j, "baselines", "baselines")) {
    r.unknown_keys(*bl, "baselines", {"fudge_top_k", "fudge_alpha", "preadd_alpha", "templates"});
    r.read(*bl, "fudge_top_k", "baselines.fudge_top_k", c.baselines.fudge_top_k);
    r.read(*bl, "fudge_alpha", "baselines.fudge_alpha", c.baselines.fudge_alpha);
    r.read(*bl, "preadd_alpha", "baselines.preadd_alpha", c.baselines.preadd_alpha);
    r.read_path(*bl, "templates", "baselines.templates", c.baselines.templates);
    if (c.baselines.fudge_top_k < 1) r.error("baselines.fudge_top_k must be >= 1");
  }

  if (const auto* ev = r.child(j, "evaluation", "evaluation")) {
    r.unknown_keys(*ev, "evaluation", {"success_threshold"});
    r.read(*ev, "success_threshold", "evaluation.success_threshold", c.success_threshold);
    if (!(c.success_threshold >= 0.0 && c.success_threshold <= 1.0))
      r.error("evaluation.success_threshold must be in [0, 1]");
  }

  if (j.contains("methods")) {
    if (!j.at("methods").is_array()) {
      r.error("methods must be an array of method names");
    } else {
      for (const auto& m : j.at("methods")) {
        const std::string name = m.is_string() ? m.get<std::string>() : m.dump();
        auto method = parse_method(name);
        if (!method) {
          r.error("unknown method '" + name + "' (valid: " + detail::valid_method_names() + ")");
        } else if (std::find(c.methods.begin(), c.methods.end(), *method) == c.methods.end()) {
          c.methods.push_back(*method);
        }
      }
    }
  }
  if (c.methods.empty()) r.error("methods must list at least one method");

  std::string out_dir;
  r.read(j, "output_dir", "output_dir", out_dir);
  if (!out_dir.empty()) c.output_dir = r.resolve(out_dir);
  r.read(j, "concurrency_limit", "concurrency_limit", c.concurrency_limit);
  if (c.concurrency_limit < 1) r.error("concurrency_limit must be >= 1");
  std::string retention = "full";
  r.read(j, "artifact_retention", "artifact_retention", retention);
  if (retention == "full") c.artifact_retention = ArtifactRetention::full;
  else if (retention == "reports_only") c.artifact_retention = ArtifactRetention::reports_only;
  else r.error("artifact_retention must be one of: full, reports_only");

  if (result.errors.empty()) result.config = std::move(c);
  return result;
}

inline ConfigResult validate_config(const fs::path& path) {
  ConfigResult result;
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    result.errors.emplace_back(e.what());
    return result;
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    result.errors.push_back(path.string() + ": " + e.what());
    return result;
  }
  return parse_config(j, fs::absolute(path).parent_path());
}

struct DatasetRecord {
  std::string id;
  std::string prompt;
  Task task = Task::toxicity_mitigation;
};

/// Reads dataset JSONL ({"id", "prompt", "task"} per line). Throws a config
/// error listing every bad line.
inline std::vector<DatasetRecord> load_dataset(const fs::path& path) {
  const auto rows = parse_jsonl(read_file(path), path.string());
  std::vector<DatasetRecord> out;
  std::vector<std::string> errors;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    const std::string where = path.string() + " record " + std::to_string(i + 1);
    DatasetRecord rec;
    if (!row.is_object() || !row.contains("id") || !row.contains("prompt") || !row.contains("task")) {
      errors.push_back(where + ": needs id, prompt and task");
      continue;
    }
    rec.id = row.at("id").is_string() ? row.at("id").get<std::string>() : row.at("id").dump();
    if (row.at("prompt").is_string()) rec.prompt = row.at("prompt").get<std::string>();
    if (rec.prompt.empty()) errors.push_back(where + ": prompt must be a non-empty string");
    auto task = row.at("task").is_string() ? parse_task(row.at("task").get<std::string>()) : std::nullopt;
    if (!task) errors.push_back(where + ": unknown task");
    else rec.task = *task;
    if (!seen.insert(rec.id).second) errors.push_back(where + ": duplicate id '" + rec.id + "'");
    out.push_back(std::move(rec));
  }
  if (out.empty() && errors.empty()) errors.push_back(path.string() + ": dataset is empty");
  if (!errors.empty()) {
    std::string message;
    for (const auto& e : errors) message += (message.empty() ? "" : "\n") + e;
    throw Error(ErrorKind::config, message);
  }
  return out;
}

/// Backend instances wired from a config.
struct Backends {
  std::shared_ptr<const Generator> generator;
  std::shared_ptr<const Generator> scorer;  // null when nothing can score sequences
  std::map<Task, std::shared_ptr<const Classifier>> classifiers;
  std::shared_ptr<const Embedder> embedder;
  std::shared_ptr<const VocabularyMapper> mapper;  // null when no vocabulary is known
  std::map<Task, TaskTemplates> templates;

  const Classifier& classifier(Task task) const {
    auto it = classifiers.find(task);
    if (it == classifiers.end())
      throw Error(ErrorKind::config, "no classifier configured for task " + std::string(to_string(task)));
    return *it->second;
  }
};

namespace detail {

struct GeneratorBundle {
  std::shared_ptr<const Generator> generator;
  std::shared_ptr<const VocabularyMapper> mapper;
};

inline GeneratorBundle make_generator(const BackendSpec& spec) {
  if (spec.type == "ngram") {
    auto model = std::make_shared<const NGramGenerator>(NGramGenerator::from_file(spec.seed_corpus.string()));
    // The deleter holds a reference to the model so the mapper never outlives it.
    auto mapper = std::shared_ptr<const VocabularyMapper>(new ExactWordMapper(*model),
                                                          [model](const VocabularyMapper* m) { delete m; });
    return {model, mapper};
  }
  HttpGeneratorOptions options{{spec.endpoint, spec.max_in_flight, 5, spec.timeout_seconds}, spec.model};
  std::shared_ptr<const VocabularyTable> vocab;
  std::shared_ptr<const VocabularyMapper> mapper;
  if (!spec.vocabulary.empty()) {
    vocab = std::make_shared<const VocabularyTable>(VocabularyTable::load(spec.vocabulary.string()));
    mapper = std::make_shared<const VocabularyFileMapper>(*vocab);
  }
  return {std::make_shared<const HttpGenerator>(options, vocab), mapper};
}

}  // namespace detail

inline Backends make_backends(const PipelineConfig& config) {
  Backends b;
  auto bundle = detail::make_generator(config.generator);
  b.generator = bundle.generator;
  b.mapper = bundle.mapper;
  if (config.scorer) b.scorer = detail::make_generator(*config.scorer).generator;
  else if (b.generator->capabilities().supports_sequence_scoring) b.scorer = b.generator;

  for (const auto& [task, spec] : config.classifiers) {
    if (spec.type == "lexicon") {
      auto lex = LexiconClassifier::load_spec(spec.lexicon.string());
      b.classifiers[task] = std::make_shared<const LexiconClassifier>(spec.invert ? lex.swapped() : lex);
    } else {
      b.classifiers[task] =
          std::make_shared<const HttpClassifier>(HttpEndpoint{spec.endpoint, spec.max_in_flight, 5, spec.timeout_seconds});
    }
  }
  if (config.embedder.type == "hashed") {
    b.embedder = std::make_shared<const HashedEmbedder>(config.embedder.dimension);
  } else {
    b.embedder = std::make_shared<const HttpEmbedder>(
        HttpEndpoint{config.embedder.endpoint, config.embedder.max_in_flight, 5, config.embedder.timeout_seconds});
  }
  if (!config.baselines.templates.empty()) {
    b.templates = load_task_templates(config.baselines.templates.string());
  } else {
    for (Task t : kAllTasks) b.templates[t] = default_templates(t);
  }
  return b;
}

/// Tracks every artifact under the output directory with its SHA-256. The
/// manifest is rewritten atomically after each change, so an interrupted run
/// leaves a manifest describing exactly the artifacts that were completed.
class Manifest {
 public:
  static constexpr const char* kFileName = "manifest.json";

  Manifest(fs::path root, std::string fingerprint) : root_(std::move(root)), fingerprint_(std::move(fingerprint)) {
    const fs::path path = root_ / kFileName;
    if (!fs::exists(path)) return;
    try {
      const auto j = nlohmann::json::parse(read_file(path));
      if (j.value("config_fingerprint", std::string()) != fingerprint_) return;
      for (const auto& [rel, hash] : j.at("artifacts").items()) entries_[rel] = hash.get<std::string>();
    } catch (const std::exception&) {
      entries_.clear();
    }
  }

  /// True when the file exists and its content hash matches the entry.
  bool valid(const std::string& rel) const {
    std::string expected;
    {
      std::lock_guard lock(mu_);
      auto it = entries_.find(rel);
      if (it == entries_.end()) return false;
      expected = it->second;
    }
    const fs::path path = root_ / rel;
    if (!fs::exists(path)) return false;
    return sha256_hex(read_file(path)) == expected;
  }

  void write(const std::string& rel, std::string_view content) {
    write_file_atomic(root_ / rel, content);
    std::lock_guard lock(mu_);
    entries_[rel] = sha256_hex(content);
    persist_locked();
  }

  nlohmann::json to_json() const {
    std::lock_guard lock(mu_);
    nlohmann::json artifacts = nlohmann::json::object();
    for (const auto& [rel, hash] : entries_) artifacts[rel] = hash;
    return {{"config_fingerprint", fingerprint_}, {"artifacts", artifacts}};
  }

 private:
  void persist_locked() {
    nlohmann::json artifacts = nlohmann::json::object();
    for (const auto& [rel, hash] : entries_) artifacts[rel] = hash;
    const nlohmann::json j = {{"config_fingerprint", fingerprint_}, {"artifacts", artifacts}};
    write_file_atomic(root_ / kFileName, j.dump(2) + "\n");
  }

  fs::path root_;
  std::string fingerprint_;
  std::map<std::string, std::string> entries_;
  mutable std::mutex mu_;
};

/// File-name-safe form of a record id; ids that need escaping get a hash
/// suffix so distinct ids stay distinct.
inline std::string safe_file_stem(const std::string& id) {
  std::string out;
  bool changed = id.empty();
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                    c == '_' || c == '.';
    out += ok ? c : '_';
    changed |= !ok;
  }
  if (out.starts_with('.')) {
    out[0] = '_';
    changed = true;
  }
  if (changed) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(id)));
    out += "-";
    out += buf;
  }
  return out;
}

struct RunOptions {
  // Test hook: abort (as a crash would) after computing this many units.
  std::optional<std::size_t> stop_after_units;
  std::function<void(const std::string&)> log;
};

struct SkippedUnit {
  std::string prompt_id;
  std::string method;
  std::string reason;
};

struct RunSummary {
  int exit_code = 0;
  std::vector<EvalRecord> records;
  std::vector<SkippedUnit> skipped;
  std::size_t errors = 0;
  std::size_t computed_units = 0;
  std::size_t reused_units = 0;
};

/// Thrown by the stop_after_units hook.
class RunInterrupted : public std::runtime_error {
 public:
  RunInterrupted() : std::runtime_error("run interrupted") {}
};

namespace detail {

struct DatgArtifacts {
  KeyTokenSet keys;
};

class RunContext {
 public:
  RunContext(const PipelineConfig& config, const Backends& backends, const RunOptions& options, Manifest& manifest)
      : config_(config), backends_(backends), options_(options), manifest_(manifest) {}

  void log(const std::string& message) const {
    if (options_.log) options_.log(message);
  }

  /// Corpus building through key-token selection for one prompt. Inspection
  /// artifacts are written when retained.
  DatgArtifacts prepare_datg(const DatasetRecord& rec) const {
    const std::string stem = safe_file_stem(rec.id);
    const auto corpus_build = build_corpus(rec.prompt, config_.control.corpus_size, config_.generation,
                                           *backends_.generator, {config_.corpus_retry_budget, 1});
    for (const auto& w : corpus_build.warnings) log(rec.id + ": " + w);
    for (const auto& e : corpus_build.errors) log(rec.id + ": " + e);
    const ScoredCorpus corpus = score_corpus(corpus_build.sentences, backends_.classifier(rec.task), rec.prompt);
    const auto graphs = build_attribute_graphs(corpus);
    const auto& sel = config_.control.selection;
    auto rank = [&](const AttributeGraph& g, const char* name) {
      try {
        return rank_graph(g, sel);
      } catch (const NonConvergenceError& e) {
        log(rec.id + ": " + name + " graph ranking used the last iterate: " + e.what());
        return e.last_iterate();
      }
    };
    DatgArtifacts out{select_key_tokens(rank(graphs.positive, "positive"), rank(graphs.negative, "negative"), sel)};
    if (config_.artifact_retention == ArtifactRetention::full) {
      manifest_.write("artifacts/" + stem + ".corpus.jsonl", corpus_to_jsonl(corpus));
      manifest_.write("artifacts/" + stem + ".pos.dot", export_dot(graphs.positive));
      manifest_.write("artifacts/" + stem + ".neg.dot", export_dot(graphs.negative));
      manifest_.write("artifacts/" + stem + ".keys.json", key_tokens_to_json(out.keys).dump(2) + "\n");
    }
    return out;
  }

  std::string complete(Method method, const DatasetRecord& rec, const std::function<const DatgArtifacts&()>& datg) const {
    const auto& g = *backends_.generator;
    const auto& gen = config_.generation;
    const TaskTemplates& templates = backends_.templates.at(rec.task);
    BaselineSpec spec;
    spec.injection_prompt = templates.injection_prompt;
    spec.preadd_prefix = templates.preadd_prefix;
    spec.fudge_top_k = config_.baselines.fudge_top_k;
    spec.fudge_alpha = config_.baselines.fudge_alpha;
    spec.preadd_alpha = config_.baselines.preadd_alpha;
    switch (method) {
      case Method::continuation: return continuation(rec.prompt, gen, g);
      case Method::injection: return injection(rec.prompt, spec, gen, g);
      case Method::fudge: return fudge_generate(rec.prompt, spec, gen, g, backends_.classifier(rec.task));
      case Method::preadd: return preadd_generate(rec.prompt, spec, gen, g);
      case Method::datg_l: {
        if (!backends_.mapper)
          throw Error(ErrorKind::capability_missing, "DATG-L needs a vocabulary mapping for the generator");
        if (!g.capabilities().supports_logit_bias)
          throw Error(ErrorKind::capability_missing, "DATG-L needs logit bias support");
        const auto& keys = datg().keys;
        ControlConfig control = config_.control;
        control.strategy = Strategy::logits_boost;
        write_directive(rec, method, make_directive(keys, control, backends_.mapper.get()));
        return regenerate_logits_boost(rec.prompt, keys, control, gen, g, *backends_.mapper);
      }
      case Method::datg_p: {
        const auto& keys = datg().keys;
        ControlConfig control = config_.control;
        control.strategy = Strategy::prefix_prompt;
        write_directive(rec, method, make_directive(keys, control, nullptr));
        return regenerate_prefix(rec.prompt, keys, control, gen, g);
      }
    }
    throw Error(ErrorKind::invalid_argument, "unknown method");
  }

  EvalRecord evaluate(const DatasetRecord& rec, Method method, std::string completion) const {
    EvalRecord r;
    r.prompt_id = rec.id;
    r.task = rec.task;
    r.method = std::string(to_string(method));
    r.completion = std::move(completion);
    r.attribute_score = backends_.classifier(rec.task).classify(r.completion);
    r.success = r.attribute_score > config_.success_threshold;
    if (!backends_.scorer) {
      r.flags.emplace_back("perplexity unavailable: no sequence-scoring backend");
    } else if (tokenize_for_graph(r.completion).empty()) {
      r.flags.emplace_back("perplexity undefined for empty completion");
    } else {
      r.perplexity = perplexity(rec.prompt, r.completion, *backends_.scorer);
    }
    r.relevance = relevance(rec.prompt, r.completion, *backends_.embedder);
    return r;
  }

 private:
  void write_directive(const DatasetRecord& rec, Method method, const ControlDirective& d) const {
    if (config_.artifact_retention != ArtifactRetention::full) return;
    manifest_.write("artifacts/" + safe_file_stem(rec.id) + "." + std::string(to_string(method)) + ".directive.json",
                    d.to_json().dump(2) + "\n");
  }

  const PipelineConfig& config_;
  const Backends& backends_;
  const RunOptions& options_;
  Manifest& manifest_;
};

}  // namespace detail

inline std::string unit_path(const DatasetRecord& rec, Method method) {
  return "units/" + safe_file_stem(rec.id) + "/" + std::string(to_string(method)) + ".json";
}

/// Runs every selected method over every prompt, writing records, reports,
/// per-prompt artifacts and a content-hashed manifest under output_dir.
/// Units already present with a valid hash (from an earlier run with the
/// same fingerprint) are reused rather than recomputed.
inline RunSummary run(const PipelineConfig& config, const std::vector<DatasetRecord>& dataset,
                      const Backends& backends, const RunOptions& options = {}) {
  if (dataset.empty()) throw Error(ErrorKind::config, "dataset is empty");
  for (const auto& rec : dataset) backends.classifier(rec.task);

  fs::create_directories(config.output_dir);
  Manifest manifest(config.output_dir, sha256_hex(config.fingerprint_json().dump()));
  detail::RunContext ctx(config, backends, options, manifest);

  struct UnitResult {
    std::optional<EvalRecord> record;
    std::optional<SkippedUnit> skipped;
    bool reused = false;
    double elapsed = 0.0;
  };
  std::vector<std::vector<UnitResult>> results(dataset.size(), std::vector<UnitResult>(config.methods.size()));
  std::atomic<std::size_t> computed{0};

  auto load_unit = [&](const std::string& rel, UnitResult& out) {
    const auto j = nlohmann::json::parse(read_file(config.output_dir / rel));
    if (j.contains("skipped")) {
      out.skipped = SkippedUnit{j.at("prompt_id").get<std::string>(), j.at("method").get<std::string>(),
                                j.at("skipped").get<std::string>()};
    } else {
      out.record = EvalRecord::from_json(j);
    }
    out.reused = true;
  };

  parallel_for(dataset.size(), config.concurrency_limit, [&](std::size_t i) {
    const DatasetRecord& rec = dataset[i];
    std::optional<detail::DatgArtifacts> datg;
    std::optional<std::string> datg_error;
    auto datg_once = [&]() -> const detail::DatgArtifacts& {
      if (datg_error) throw Error(ErrorKind::generation_failed, *datg_error);
      if (!datg) {
        try {
          datg = ctx.prepare_datg(rec);
        } catch (const Error& e) {
          datg_error = e.what();
          throw;
        }
      }
      return *datg;
    };

    for (std::size_t k = 0; k < config.methods.size(); ++k) {
      const Method method = config.methods[k];
      const std::string rel = unit_path(rec, method);
      UnitResult& out = results[i][k];
      if (manifest.valid(rel)) {
        load_unit(rel, out);
        continue;
      }
      if (options.stop_after_units && computed.load() >= *options.stop_after_units) throw RunInterrupted();

      const auto start = std::chrono::steady_clock::now();
      nlohmann::json unit;
      try {
        std::string completion = ctx.complete(method, rec, datg_once);
        out.record = ctx.evaluate(rec, method, std::move(completion));
        unit = out.record->to_json();
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::capability_missing) {
          out.skipped = SkippedUnit{rec.id, std::string(to_string(method)), e.what()};
          unit = {{"prompt_id", rec.id}, {"method", std::string(to_string(method))}, {"skipped", e.what()}};
        } else {
          EvalRecord r;
          r.prompt_id = rec.id;
          r.task = rec.task;
          r.method = std::string(to_string(method));
          r.error = e.what();
          out.record = r;
          unit = r.to_json();
        }
      }
      out.elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (out.record) out.record->elapsed_seconds = out.elapsed;
      manifest.write(rel, unit.dump() + "\n");
      ++computed;
      ctx.log(rec.id + " " + std::string(to_string(method)) + (out.skipped ? " skipped" : " done"));
    }
  });

  RunSummary summary;
  std::string records_jsonl, timings_jsonl;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (std::size_t k = 0; k < config.methods.size(); ++k) {
      UnitResult& u = results[i][k];
      (u.reused ? summary.reused_units : summary.computed_units)++;
      if (u.skipped) {
        summary.skipped.push_back(*u.skipped);
        continue;
      }
      records_jsonl += u.record->to_json().dump() + "\n";
      if (!u.reused) {
        timings_jsonl += nlohmann::json{{"prompt_id", u.record->prompt_id},
                                        {"method", u.record->method},
                                        {"elapsed_seconds", u.elapsed}}
                             .dump() +
                         "\n";
      }
      if (u.record->error) ++summary.errors;
      summary.records.push_back(std::move(*u.record));
    }
  }

  manifest.write("records.jsonl", records_jsonl);
  if (!summary.records.empty()) {
    const AggregateReport report = aggregate(summary.records);
    std::string md = report_markdown(report);
    nlohmann::json rj = report_json(report);
    nlohmann::json skipped = nlohmann::json::array();
    if (!summary.skipped.empty()) md += "\n## Skipped\n\n| Prompt | Method | Reason |\n|---|---|---|\n";
    for (const auto& s : summary.skipped) {
      md += "| " + s.prompt_id + " | " + s.method + " | " + s.reason + " |\n";
      skipped.push_back({{"prompt_id", s.prompt_id}, {"method", s.method}, {"reason", s.reason}});
    }
    rj["skipped"] = skipped;
    manifest.write("report.md", md);
    manifest.write("report.json", rj.dump(2) + "\n");
  }
  // Wall-clock timings vary run to run, so they live outside the manifest.
  write_file_atomic(config.output_dir / "timings.jsonl", timings_jsonl);

  // Capability skips are itemized in the report but are not failures.
  if (summary.records.empty() || summary.errors == summary.records.size()) summary.exit_code = 3;
  else if (summary.errors > 0) summary.exit_code = 2;
  else summary.exit_code = 0;
  return summary;
}

enum class SampleMode { random, top };

/// Picks n rows: a seeded Fisher-Yates shuffle (random mode) or the n rows
/// with the largest numeric value at a dotted field path (top mode, ties keep
/// input order).
inline std::vector<nlohmann::json> sample_rows(std::vector<nlohmann::json> rows, std::size_t n, SampleMode mode,
                                               const std::string& field, std::uint64_t seed) {
  if (mode == SampleMode::random) {
    Rng rng(seed);
    for (std::size_t i = rows.size(); i > 1; --i) std::swap(rows[i - 1], rows[rng.below(i)]);
  } else {
    if (field.empty()) throw Error(ErrorKind::invalid_argument, "top mode needs --field");
    nlohmann::json::json_pointer ptr("/" + [&] {
      std::string p = field;
      std::replace(p.begin(), p.end(), '.', '/');
      return p;
    }());
    std::vector<std::pair<double, std::size_t>> keyed;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (!rows[i].contains(ptr) || !rows[i].at(ptr).is_number())
        throw Error(ErrorKind::invalid_argument, "row " + std::to_string(i + 1) + " lacks numeric field " + field);
      keyed.emplace_back(rows[i].at(ptr).get<double>(), i);
    }
    std::stable_sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<nlohmann::json> sorted;
    for (const auto& [_, i] : keyed) sorted.push_back(rows[i]);
    rows = std::move(sorted);
  }
  if (rows.size() > n) rows.resize(n);
  return rows;
}

/// Graphs and key tokens recomputed from a stored corpus.
struct GraphInspection {
  AttributeGraphPair graphs;
  KeyTokenSet keys;
};

inline GraphInspection inspect_corpus(const ScoredCorpus& corpus, const SelectionConfig& selection) {
  GraphInspection out{build_attribute_graphs(corpus), {}};
  auto rank = [&](const AttributeGraph& g) {
    try {
      return rank_graph(g, selection);
    } catch (const NonConvergenceError& e) {
      return e.last_iterate();
    }
  };
  out.keys = select_key_tokens(rank(out.graphs.positive), rank(out.graphs.negative), selection);
  return out;
}

}  // namespace datg
