// Copyright 2026 The datg Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: run, sample, graph, validate.

#include <CLI11.hpp>

#include <iostream>
#include <sstream>

#include "datg/datg.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kTotalFailure = 3;

int report_config_errors(const std::vector<std::string>& errors) {
  for (const auto& e : errors) std::cerr << "config error: " << e << "\n";
  return kConfigError;
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_validate(const std::string& config_path) {
  auto result = datg::validate_config(config_path);
  if (!result.ok()) return report_config_errors(result.errors);
  const auto& c = *result.config;
  std::cout << "ok: alpha=" << c.control.alpha << " beta=" << c.control.beta << " m=" << c.control.corpus_size
            << " top_k=" << c.control.selection.top_k << " max_new_tokens=" << c.generation.max_new_tokens << "\n";
  return kOk;
}

int cmd_run(const std::string& config_path, const std::string& dataset_path, const std::string& methods,
            const std::string& out) {
  auto result = datg::validate_config(config_path);
  std::vector<std::string> errors = result.errors;
  if (!methods.empty() && result.config) {
    result.config->methods.clear();
    for (const auto& name : split_commas(methods)) {
      auto m = datg::parse_method(name);
      if (!m) {
        errors.push_back("unknown method '" + name + "' (valid: " + datg::detail::valid_method_names() + ")");
      } else if (std::find(result.config->methods.begin(), result.config->methods.end(), *m) ==
                 result.config->methods.end()) {
        result.config->methods.push_back(*m);
      }
    }
    if (result.config->methods.empty()) errors.emplace_back("--methods selects no method");
  }
  if (!errors.empty() || !result.config) return report_config_errors(errors);
  auto config = *result.config;
  if (!out.empty()) config.output_dir = out;

  std::vector<datg::DatasetRecord> dataset;
  try {
    dataset = datg::load_dataset(dataset_path);
  } catch (const datg::Error& e) {
    return report_config_errors({e.what()});
  }

  try {
    const auto backends = datg::make_backends(config);
    datg::RunOptions options;
    options.log = [](const std::string& line) { std::cerr << line << "\n"; };
    const auto summary = datg::run(config, dataset, backends, options);
    std::cerr << summary.records.size() << " records (" << summary.errors << " errors, " << summary.skipped.size()
              << " skipped, " << summary.reused_units << " reused) in " << config.output_dir.string() << "\n";
    return summary.exit_code;
  } catch (const datg::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == datg::ErrorKind::config ? kConfigError : kTotalFailure;
  }
}

int cmd_sample(const std::string& in, std::size_t n, const std::string& mode, const std::string& field,
               std::uint64_t seed) {
  const auto rows = datg::parse_jsonl(datg::read_file(in), in);
  const auto picked =
      datg::sample_rows(rows, n, mode == "top" ? datg::SampleMode::top : datg::SampleMode::random, field, seed);
  for (const auto& row : picked) std::cout << row.dump() << "\n";
  return kOk;
}

int cmd_graph(const std::string& corpus_path, const std::string& out, const std::string& config_path) {
  datg::SelectionConfig selection;
  if (!config_path.empty()) {
    auto result = datg::validate_config(config_path);
    if (!result.ok()) return report_config_errors(result.errors);
    selection = result.config->control.selection;
  }
  const auto corpus = datg::corpus_from_jsonl(datg::read_file(corpus_path), "");
  const auto inspection = datg::inspect_corpus(corpus, selection);
  const std::filesystem::path dir(out);
  datg::write_file_atomic(dir / "pos.dot", datg::export_dot(inspection.graphs.positive));
  datg::write_file_atomic(dir / "neg.dot", datg::export_dot(inspection.graphs.negative));
  datg::write_file_atomic(dir / "keys.json", datg::key_tokens_to_json(inspection.keys).dump(2) + "\n");
  std::cout << "wrote " << (dir / "pos.dot").string() << ", " << (dir / "neg.dot").string() << ", "
            << (dir / "keys.json").string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph-guided attribute control for text generation"};
  app.require_subcommand(1);

  std::string config, dataset, methods, out, in, mode = "random", field, corpus;
  std::size_t n = 0;
  std::uint64_t seed = 0;

  auto* run = app.add_subcommand("run", "Run methods over a dataset");
  run->add_option("--config", config, "Config file")->required()->check(CLI::ExistingFile);
  run->add_option("--dataset", dataset, "Dataset JSONL")->required()->check(CLI::ExistingFile);
  run->add_option("--methods", methods, "Comma-separated method names (overrides config)");
  run->add_option("--out", out, "Output directory (overrides config)");

  auto* sample = app.add_subcommand("sample", "Sample rows from a JSONL file");
  sample->add_option("--in", in, "Source JSONL")->required()->check(CLI::ExistingFile);
  sample->add_option("--n", n, "Rows to keep")->required();
  sample->add_option("--mode", mode, "random or top")->check(CLI::IsMember({"random", "top"}));
  sample->add_option("--field", field, "Dotted numeric field for top mode");
  sample->add_option("--seed", seed, "Shuffle seed");

  auto* graph = app.add_subcommand("graph", "Build graphs and key tokens for a stored corpus");
  graph->add_option("--corpus", corpus, "Scored corpus JSONL")->required()->check(CLI::ExistingFile);
  graph->add_option("--out", out, "Output directory")->required();
  graph->add_option("--config", config, "Config file for selection settings");

  auto* validate = app.add_subcommand("validate", "Check a config file");
  validate->add_option("--config", config, "Config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*run) return cmd_run(config, dataset, methods, out);
    if (*sample) return cmd_sample(in, n, mode, field, seed);
    if (*graph) return cmd_graph(corpus, out, config);
    if (*validate) return cmd_validate(config);
  } catch (const datg::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == datg::ErrorKind::config ? kConfigError : kTotalFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kTotalFailure;
  }
  return kConfigError;
}
