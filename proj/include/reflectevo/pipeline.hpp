// SPDX-License-Identifier: Apache-2.0
//
// Directory-level pipeline stages shared by the CLI and end-to-end tests.
#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "reflectevo/config.hpp"
#include "reflectevo/curation.hpp"
#include "reflectevo/export.hpp"
#include "reflectevo/gateway.hpp"
#include "reflectevo/instruction_pool.hpp"
#include "reflectevo/prompts.hpp"
#include "reflectevo/rollout.hpp"
#include "reflectevo/verify.hpp"

namespace reflectevo {

struct BackendChoice {
  enum class Kind { http, scripted, echo, replay };
  Kind kind = Kind::http;
  std::filesystem::path file;  // script for scripted, log for replay

  std::string describe() const;
};

/// HTTP needs a base_url and reads the API key from REFLECT_API_KEY.
std::shared_ptr<ChatBackend> make_backend(const BackendChoice& choice,
                                          const EndpointConfig& endpoint);

/// Replay runs never sleep between retries: the outcome is already recorded.
std::shared_ptr<Gateway> make_gateway(std::shared_ptr<ChatBackend> backend,
                                      const PipelineConfig& config, bool replaying,
                                      std::optional<std::filesystem::path> log_path);

std::unique_ptr<Verifier> make_verifier(const PipelineConfig& config, std::string_view name,
                                        std::shared_ptr<Gateway> gateway,
                                        const PromptLibrary& prompts);

std::optional<ExternalRunner> make_runner(const PipelineConfig& config);

/// Candidate pool generation. Writes candidates.jsonl, aborts.jsonl and
/// first_turns.jsonl under `out`; returns counts for the manifest.
json run_generate(const std::vector<TaskItem>& tasks, const PipelineConfig& config,
                  const PromptLibrary& prompts, std::shared_ptr<Gateway> gateway,
                  const std::filesystem::path& out);

/// Writes d_plus.jsonl, d_pm.jsonl, d_pref.jsonl and curation.json under `out`.
json run_curate(const std::vector<CandidateSample>& pool, const PipelineConfig& config,
                const PromptLibrary& prompts, std::shared_ptr<Gateway> judge_gateway,
                const std::filesystem::path& out);

/// Reads the curated files from `curated` and writes
/// out/{setting1,setting2.1,setting2.2,setting3,setting4}/{dataset}.jsonl.
json run_export(const std::filesystem::path& curated, const PipelineConfig& config,
                const PromptLibrary& prompts, const std::vector<TaskItem>& tasks,
                const std::filesystem::path& out);

inline constexpr const char* kExportSettings[] = {"setting1", "setting2.1", "setting2.2",
                                                  "setting3", "setting4"};

}  // namespace reflectevo
