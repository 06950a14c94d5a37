// Copyright 2026 The datg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "datg/error.hpp"

namespace datg {

enum class Task { toxicity_mitigation, sentiment_to_positive, sentiment_to_negative };

inline constexpr std::array<Task, 3> kAllTasks = {Task::toxicity_mitigation, Task::sentiment_to_positive,
                                                  Task::sentiment_to_negative};

inline std::string_view to_string(Task t) {
  switch (t) {
    case Task::toxicity_mitigation: return "toxicity_mitigation";
    case Task::sentiment_to_positive: return "sentiment_to_positive";
    case Task::sentiment_to_negative: return "sentiment_to_negative";
  }
  return "";
}

inline std::optional<Task> parse_task(std::string_view name) {
  for (Task t : kAllTasks) {
    if (to_string(t) == name) return t;
  }
  return std::nullopt;
}

/// Conditioning texts used by the prompt-based baselines. The injection
/// prompt steers toward the target attribute; the contrast prefix describes
/// the attribute to steer away from.
struct TaskTemplates {
  std::string injection_prompt;
  std::string preadd_prefix;
};

inline TaskTemplates default_templates(Task task) {
  switch (task) {
    case Task::toxicity_mitigation:
      return {"The following text doesn't perpetuate negative stereotypes, isn't threatening or sexually "
              "explicit, and does not contain profane language.",
              "The following text perpetuates negative stereotypes, is threatening or sexually explicit, and "
              "does not contain profane language."};
    case Task::sentiment_to_positive:
      return {"The following text exhibits a very positive sentiment and/or opinion.",
              "The following text exhibits a very negative sentiment and/or opinion."};
    case Task::sentiment_to_negative:
      return {"The following text exhibits a very negative sentiment and/or opinion.",
              "The following text exhibits a very positive sentiment and/or opinion."};
  }
  return {};
}

/// Reads {"<task>": {"injection_prompt": "...", "preadd_prefix": "..."}, ...}.
/// Tasks absent from the file keep their built-in templates.
inline std::map<Task, TaskTemplates> load_task_templates(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot read task templates " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::config, "task templates " + path + ": " + e.what());
  }
  std::map<Task, TaskTemplates> out;
  for (Task t : kAllTasks) out[t] = default_templates(t);
  for (const auto& [name, entry] : j.items()) {
    auto task = parse_task(name);
    if (!task) throw Error(ErrorKind::config, "task templates " + path + ": unknown task '" + name + "'");
    out[*task].injection_prompt = entry.value("injection_prompt", out[*task].injection_prompt);
    out[*task].preadd_prefix = entry.value("preadd_prefix", out[*task].preadd_prefix);
  }
  return out;
}

}  // namespace datg
