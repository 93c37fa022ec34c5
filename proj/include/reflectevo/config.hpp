// SPDX-License-Identifier: Apache-2.0
//
// Pipeline configuration: a TOML file with [endpoint], [judge], [embedder],
// [policy], [curation], [export], [eval], [verifier] and [run] tables.
// Every key is optional; unknown tables or keys are rejected.
#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "reflectevo/curation.hpp"
#include "reflectevo/model.hpp"
#include "reflectevo/rollout.hpp"

namespace reflectevo {

inline constexpr std::string_view kApiKeyEnv = "REFLECT_API_KEY";

struct EndpointConfig {
  std::string base_url;  // empty = not configured
  std::string model;
  int timeout_s = 60;
};

struct EvalConfig {
  ReflectionStyle style = ReflectionStyle::plain;
  std::string instruction_id = "1-1+2-1+3-1";
  std::string verifier = "oracle";  // oracle | self_judgment
  std::size_t bins = 10;
};

struct RunnerConfig {
  std::string command;  // empty = no external runner; "{file}" is the program path
  int timeout_s = 10;
  std::string suffix = ".py";
};

struct PipelineConfig {
  EndpointConfig endpoint;
  EndpointConfig judge;     // falls back to `endpoint` field by field
  EndpointConfig embedder;  // empty base_url = offline hashing embedder
  GenerationPolicy policy;
  PairingPolicy curation;
  bool export_instruction_prompt = false;
  bool dpo_with_answer = false;
  EvalConfig eval;
  RunnerConfig runner;
  std::string prompts_dir;  // empty = built-in default
  std::size_t max_in_flight = 4;
  int max_retries = 3;
  int backoff_ms = 500;

  /// Throws Error(config) on out-of-range values.
  void validate() const;
};

/// Defaults for everything; used when no --config is given.
PipelineConfig default_config();

PipelineConfig parse_config(std::string_view toml_text, std::string_view source = "<string>");
PipelineConfig load_config(const std::filesystem::path& path);

/// The fully-resolved config, API key excluded. Keys are sorted.
json config_to_json(const PipelineConfig& config);

/// SHA-256 of config_to_json(config).dump().
std::string config_hash(const PipelineConfig& config);

/// Judge endpoint with unset fields taken from the main endpoint.
EndpointConfig resolved_judge(const PipelineConfig& config);

}  // namespace reflectevo
