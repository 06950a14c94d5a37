// Copyright 2026 The datg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "datg/backends.hpp"
#include "datg/task.hpp"
#include "datg/text.hpp"

namespace datg {

enum class Method { continuation, injection, fudge, preadd, datg_l, datg_p };

inline constexpr std::array<Method, 6> kAllMethods = {Method::continuation, Method::injection, Method::fudge,
                                                      Method::preadd,       Method::datg_l,    Method::datg_p};

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::continuation: return "CONTINUATION";
    case Method::injection: return "INJECTION";
    case Method::fudge: return "FUDGE";
    case Method::preadd: return "PREADD";
    case Method::datg_l: return "DATG-L";
    case Method::datg_p: return "DATG-P";
  }
  return "";
}

inline std::optional<Method> parse_method(std::string_view name) {
  for (Method m : kAllMethods) {
    if (to_string(m) == name) return m;
  }
  return std::nullopt;
}

inline bool is_baseline(Method m) { return m != Method::datg_l && m != Method::datg_p; }

inline double perplexity(std::string_view prompt, std::string_view completion, const Generator& scorer) {
  if (!scorer.capabilities().supports_sequence_scoring)
    throw Error(ErrorKind::capability_missing, "scorer does not support sequence scoring");
  if (tokenize_for_graph(completion).empty())
    throw Error(ErrorKind::invalid_argument, "perplexity is undefined for an empty completion");
  return std::exp(scorer.score_sequence(prompt, completion));
}

/// Strictly above the threshold counts as success.
inline bool success(std::string_view completion, const Classifier& classifier, double threshold = 0.5) {
  return classifier.classify(completion) > threshold;
}

inline double relevance(std::string_view prompt, std::string_view completion, const Embedder& embedder) {
  return cosine_similarity(embedder.embed(prompt), embedder.embed(completion));
}

struct EvalRecord {
  std::string prompt_id;
  Task task = Task::toxicity_mitigation;
  std::string method;
  std::string completion;
  double attribute_score = 0.0;
  bool success = false;
  std::optional<double> perplexity;
  double relevance = 0.0;
  double elapsed_seconds = 0.0;
  std::optional<std::string> error;
  // Soft notes, e.g. a metric that is undefined for this completion.
  std::vector<std::string> flags;

  /// Lower-is-better toxicity view of the attribute score (toxicity task only).
  std::optional<double> toxicity() const {
    if (task != Task::toxicity_mitigation) return std::nullopt;
    return 1.0 - attribute_score;
  }

  /// Timing is left out so that record files stay byte-stable across runs.
  nlohmann::json to_json(bool include_timing = false) const {
    nlohmann::json j = {
        {"prompt_id", prompt_id},
        {"task", std::string(to_string(task))},
        {"method", method},
        {"completion", completion},
        {"attribute_score", attribute_score},
        {"success", success},
        {"perplexity", perplexity ? nlohmann::json(*perplexity) : nlohmann::json(nullptr)},
        {"relevance", relevance},
        {"error", error ? nlohmann::json(*error) : nlohmann::json(nullptr)},
        {"flags", flags},
    };
    if (auto t = toxicity()) j["toxicity"] = *t;
    if (include_timing) j["elapsed_seconds"] = elapsed_seconds;
    return j;
  }

  static EvalRecord from_json(const nlohmann::json& j) {
    EvalRecord r;
    r.prompt_id = j.at("prompt_id").get<std::string>();
    auto task = parse_task(j.at("task").get<std::string>());
    if (!task) throw Error(ErrorKind::invalid_argument, "unknown task in record");
    r.task = *task;
    r.method = j.at("method").get<std::string>();
    r.completion = j.at("completion").get<std::string>();
    r.attribute_score = j.at("attribute_score").get<double>();
    r.success = j.at("success").get<bool>();
    if (!j.at("perplexity").is_null()) r.perplexity = j.at("perplexity").get<double>();
    r.relevance = j.at("relevance").get<double>();
    if (j.contains("elapsed_seconds")) r.elapsed_seconds = j.at("elapsed_seconds").get<double>();
    if (!j.at("error").is_null()) r.error = j.at("error").get<std::string>();
    if (j.contains("flags")) r.flags = j.at("flags").get<std::vector<std::string>>();
    return r;
  }
};

enum class Direction { higher_is_better, lower_is_better };

struct MetricInfo {
  std::string_view name;
  std::string_view label;
  Direction direction;
};

inline constexpr std::array<MetricInfo, 5> kMetrics = {{
    {"relevance", "Relevance \xE2\x86\x91", Direction::higher_is_better},
    {"perplexity", "Perplexity \xE2\x86\x93", Direction::lower_is_better},
    {"toxicity", "Toxicity \xE2\x86\x93", Direction::lower_is_better},
    {"success", "Success \xE2\x86\x91", Direction::higher_is_better},
    {"attribute_score", "Attribute score \xE2\x86\x91", Direction::higher_is_better},
}};

inline const MetricInfo& metric_info(std::string_view name) {
  for (const auto& m : kMetrics) {
    if (m.name == name) return m;
  }
  throw Error(ErrorKind::invalid_argument, "unknown metric " + std::string(name));
}

/// Relative improvement of `method` over `baseline` as a fraction:
/// (b - m) / b when lower is better, (m - b) / b otherwise.
inline double relative_improvement(double baseline, double method, Direction direction) {
  if (baseline == 0.0) throw Error(ErrorKind::invalid_argument, "relative improvement over a zero baseline");
  return direction == Direction::lower_is_better ? (baseline - method) / baseline : (method - baseline) / baseline;
}

struct MetricMean {
  double mean = 0.0;
  std::size_t count = 0;
};

struct MethodSummary {
  std::size_t records = 0;
  std::size_t errors = 0;
  std::map<std::string, MetricMean> metrics;
};

struct Improvement {
  Task task;
  std::string metric;
  std::string method;
  std::string baseline;
  double percent = 0.0;
};

struct AggregateReport {
  // task -> method name -> summary
  std::map<Task, std::map<std::string, MethodSummary>> groups;
  std::vector<Improvement> improvements;

  std::optional<double> mean(Task task, const std::string& method, const std::string& metric) const {
    auto g = groups.find(task);
    if (g == groups.end()) return std::nullopt;
    auto m = g->second.find(method);
    if (m == g->second.end()) return std::nullopt;
    auto x = m->second.metrics.find(metric);
    if (x == m->second.metrics.end() || x->second.count == 0) return std::nullopt;
    return x->second.mean;
  }

  std::optional<double> improvement(Task task, const std::string& metric, const std::string& method,
                                    const std::string& baseline) const {
    for (const auto& i : improvements) {
      if (i.task == task && i.metric == metric && i.method == method && i.baseline == baseline) return i.percent;
    }
    return std::nullopt;
  }
};

namespace detail {

inline std::size_t method_rank(const std::string& name) {
  auto m = parse_method(name);
  return m ? static_cast<std::size_t>(*m) : kAllMethods.size();
}

inline std::vector<std::string> ordered_methods(const std::map<std::string, MethodSummary>& group) {
  std::vector<std::string> names;
  for (const auto& [name, _] : group) names.push_back(name);
  std::stable_sort(names.begin(), names.end(), [](const std::string& a, const std::string& b) {
    return method_rank(a) < method_rank(b);
  });
  return names;
}

}  // namespace detail

/// Every (metric, method, baseline) improvement within each task, where the
/// baseline is one of CONTINUATION/INJECTION/FUDGE/PREADD and both means exist.
inline std::vector<Improvement> compute_improvements(
    const std::map<Task, std::map<std::string, MethodSummary>>& groups) {
  std::vector<Improvement> out;
  for (const auto& [task, group] : groups) {
    const auto names = detail::ordered_methods(group);
    for (const auto& info : kMetrics) {
      const std::string metric(info.name);
      for (const auto& method : names) {
        for (const auto& baseline : names) {
          if (method == baseline) continue;
          auto b = parse_method(baseline);
          if (!b || !is_baseline(*b)) continue;
          const auto& bm = group.at(baseline).metrics;
          const auto& mm = group.at(method).metrics;
          auto bi = bm.find(metric);
          auto mi = mm.find(metric);
          if (bi == bm.end() || mi == mm.end() || bi->second.count == 0 || mi->second.count == 0) continue;
          if (bi->second.mean == 0.0) continue;
          out.push_back({task, metric, method, baseline,
                         100.0 * relative_improvement(bi->second.mean, mi->second.mean, info.direction)});
        }
      }
    }
  }
  return out;
}

/// Arithmetic means per (task, method, metric) over records without errors;
/// errored records are only counted. Values are summed in sorted order so the
/// result does not depend on record order.
inline AggregateReport aggregate(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw Error(ErrorKind::invalid_argument, "cannot aggregate zero records");
  std::map<Task, std::map<std::string, std::map<std::string, std::vector<double>>>> values;
  AggregateReport report;
  for (const auto& r : records) {
    MethodSummary& summary = report.groups[r.task][r.method];
    ++summary.records;
    if (r.error) {
      ++summary.errors;
      continue;
    }
    auto& v = values[r.task][r.method];
    v["relevance"].push_back(r.relevance);
    v["attribute_score"].push_back(r.attribute_score);
    v["success"].push_back(r.success ? 1.0 : 0.0);
    if (r.perplexity) v["perplexity"].push_back(*r.perplexity);
    if (auto t = r.toxicity()) v["toxicity"].push_back(*t);
  }
  for (auto& [task, methods] : values) {
    for (auto& [method, metrics] : methods) {
      for (auto& [metric, xs] : metrics) {
        std::sort(xs.begin(), xs.end());
        double total = 0.0;
        for (double x : xs) total += x;
        report.groups[task][method].metrics[metric] = {total / static_cast<double>(xs.size()), xs.size()};
      }
    }
  }
  report.improvements = compute_improvements(report.groups);
  return report;
}

namespace detail {

inline std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

inline std::vector<std::string_view> table_metrics(Task task) {
  if (task == Task::toxicity_mitigation) return {"relevance", "perplexity", "toxicity"};
  return {"relevance", "perplexity", "success"};
}

}  // namespace detail

/// Markdown report: one table per task with metrics as rows and methods as
/// columns, followed by the improvement of each DATG variant over each
/// baseline.
inline std::string report_markdown(const AggregateReport& report) {
  std::string out = "# Evaluation report\n";
  for (const auto& [task, group] : report.groups) {
    const auto names = detail::ordered_methods(group);
    out += "\n## " + std::string(to_string(task)) + "\n\n| Metric |";
    for (const auto& n : names) out += " " + n + " |";
    out += "\n|---|";
    for (std::size_t i = 0; i < names.size(); ++i) out += "---|";
    out += "\n";
    for (auto metric : detail::table_metrics(task)) {
      out += "| " + std::string(metric_info(metric).label) + " |";
      for (const auto& n : names) {
        auto m = report.mean(task, n, std::string(metric));
        out += " " + (m ? detail::fixed(*m, metric == "perplexity" ? 2 : 4) : std::string("-")) + " |";
      }
      out += "\n";
    }
    out += "| Records |";
    for (const auto& n : names) out += " " + std::to_string(group.at(n).records) + " |";
    out += "\n| Errors |";
    for (const auto& n : names) out += " " + std::to_string(group.at(n).errors) + " |";
    out += "\n";

    bool header = false;
    for (const auto& imp : report.improvements) {
      if (imp.task != task) continue;
      auto m = parse_method(imp.method);
      if (!m || is_baseline(*m)) continue;
      const auto rows = detail::table_metrics(task);
      if (std::find(rows.begin(), rows.end(), std::string_view(imp.metric)) == rows.end()) continue;
      if (!header) {
        out += "\n| Method | Baseline | Metric | Improvement |\n|---|---|---|---|\n";
        header = true;
      }
      out += "| " + imp.method + " | " + imp.baseline + " | " + imp.metric + " | " +
             detail::fixed(imp.percent, 2) + "% |\n";
    }
  }
  return out;
}

inline nlohmann::json report_json(const AggregateReport& report) {
  nlohmann::json j = {{"groups", nlohmann::json::object()}, {"improvements", nlohmann::json::array()}};
  for (const auto& [task, group] : report.groups) {
    nlohmann::json g = nlohmann::json::object();
    for (const auto& [method, summary] : group) {
      nlohmann::json metrics = nlohmann::json::object();
      for (const auto& [metric, mm] : summary.metrics) metrics[metric] = {{"mean", mm.mean}, {"count", mm.count}};
      g[method] = {{"records", summary.records}, {"errors", summary.errors}, {"metrics", metrics}};
    }
    j["groups"][std::string(to_string(task))] = g;
  }
  for (const auto& imp : report.improvements) {
    j["improvements"].push_back({{"task", std::string(to_string(imp.task))},
                                 {"metric", imp.metric},
                                 {"method", imp.method},
                                 {"baseline", imp.baseline},
                                 {"percent", imp.percent}});
  }
  return j;
}

}  // namespace datg
