#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "scd/io.hpp"

namespace scd::pipeline {

inline constexpr const char* kToolVersion = "0.3.0";
inline constexpr const char* kConfigEnv = "SCICOMM_DRIFT_CONFIG";

/// Built-in defaults; a config file is merged over them (JSON merge patch).
ordered_json default_config();

/// Effective configuration. Relative input paths resolve against the
/// directory of the config file, stage outputs against `output_dir`.
struct PipelineConfig {
  json tree;
  std::filesystem::path base_dir;
  std::filesystem::path output_dir;
  std::size_t threads = 1;
  bool strict = false;

  /// Value at a dotted key; throws ValidationError when absent.
  [[nodiscard]] const json& at(const std::string& dotted) const;
  /// Input path at a dotted key, or empty when unset or null.
  [[nodiscard]] std::filesystem::path input_path(const std::string& dotted) const;
  [[nodiscard]] std::filesystem::path out(const std::string& relative) const { return output_dir / relative; }
  [[nodiscard]] std::string sha256() const;
};

/// Sets a dotted key from "key=value"; the value is parsed as JSON when it
/// parses, otherwise taken as a string.
void apply_override(json& tree, const std::string& assignment);

/// Throws ValidationError naming the first out-of-range setting.
void validate_config(const json& tree);

PipelineConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

struct RunManifest {
  std::string command;
  std::string config_sha256;
  std::string tool_version = kToolVersion;
  std::map<std::string, std::string> inputs;   // path -> sha256
  std::map<std::string, std::string> outputs;  // path relative to output_dir -> sha256
  double wall_time_s = 0.0;

  void add_input(const PipelineConfig& cfg, const std::filesystem::path& p);
  void add_output(const PipelineConfig& cfg, const std::filesystem::path& p);
  [[nodiscard]] ordered_json to_json() const;
};

/// Subcommands in pipeline order.
const std::vector<std::string>& stage_names();

/// Runs one stage and writes `<output_dir>/manifests/<stage>.json`.
/// Throws ValidationError or RuntimeFailure.
RunManifest run_stage(const std::string& stage, const PipelineConfig& cfg);

}  // namespace scd::pipeline
