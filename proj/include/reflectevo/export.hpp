// SPDX-License-Identifier: Apache-2.0
//
// Training-ready JSONL for the four fine-tuning settings, and dataset stats.
#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "reflectevo/model.hpp"

namespace reflectevo {

class PromptLibrary;
class InstructionPool;

/// Loss is over `target` only; `prompt` is context.
struct SftRecord {
  std::string prompt;
  std::string target;
  json meta;  // setting ("1", "2.1", "2.2"), task_id, instruction_id, dataset, sample_index

  friend bool operator==(const SftRecord&, const SftRecord&) = default;
};

struct DpoRecord {
  std::string prompt;
  std::string chosen;
  std::string rejected;
  json meta;  // setting ("3", "4"), kind, task_id, dataset, completion

  friend bool operator==(const DpoRecord&, const DpoRecord&) = default;
};

void to_json(json& j, const SftRecord& v);
void from_json(const json& j, SftRecord& v);
void to_json(json& j, const DpoRecord& v);
void from_json(const json& j, DpoRecord& v);

enum class DpoSetting { outcome = 3, judged = 4 };

struct ExportOptions {
  /// Reflection prompt for setting 2.1 and DPO: the plain Reflexion prompt,
  /// or the sample's own instruction prompt when its id is in the pool.
  bool use_instruction_prompt = false;
  /// DPO completions are r + "\n\n" + corrected scratchpad instead of r alone.
  bool dpo_with_answer = false;
  /// Few-shot examples for the correction prompt, keyed by task id.
  std::map<std::string, std::vector<std::string>> fewshot;
};

class Exporter {
public:
  /// `pool` may be null when `options.use_instruction_prompt` is false.
  Exporter(const PromptLibrary& prompts, const InstructionPool* pool, ExportOptions options = {});

  std::vector<SftRecord> setting1(const std::vector<CandidateSample>& d_plus) const;
  /// {2.1 reflection records, 2.2 correction records}, same length and order.
  std::pair<std::vector<SftRecord>, std::vector<SftRecord>> setting2(
      const std::vector<CandidateSample>& d_plus) const;
  /// Throws Error(kind_mismatch) if any pair's kind does not belong to `setting`,
  /// Error(schema) if chosen and rejected would be identical.
  std::vector<DpoRecord> dpo(const std::vector<PreferencePair>& pairs, DpoSetting setting) const;

  std::string reflection_prompt(const std::string& question, const std::string& failed_scratchpad,
                                const std::string& instruction_id) const;

private:
  const PromptLibrary& prompts_;
  const InstructionPool* pool_;
  ExportOptions options_;
};

/// setting-1 target: the reflection, a blank line, then the corrected scratchpad.
std::string join_reflection_and_correction(const std::string& reflection,
                                           const std::string& corrected_scratchpad);

/// Writes `records` under dir/{setting}/{dataset}.jsonl, one file per
/// dataset found in meta.dataset ('/' in dataset names becomes '_').
/// Returns the written paths in sorted order.
std::vector<std::filesystem::path> write_export(const std::filesystem::path& dir,
                                                std::string_view setting,
                                                const std::vector<SftRecord>& records);
std::vector<std::filesystem::path> write_export(const std::filesystem::path& dir,
                                                std::string_view setting,
                                                const std::vector<DpoRecord>& records);
std::string dataset_file_stem(std::string_view dataset);

// ---------------------------------------------------------------------------
// Stats
// ---------------------------------------------------------------------------

using TokenCounter = std::function<std::size_t(std::string_view)>;

/// Whitespace-piece approximation; tokenizer counts will differ.
TokenCounter whitespace_token_counter();

struct CategoryStats {
  std::string category;
  std::size_t samples = 0;
  std::size_t correct = 0;
  std::size_t d_plus = 0;
  double pct_correct = 0.0;
  double avg_question_tokens = 0.0;
  double avg_first_answer_tokens = 0.0;
  double avg_second_answer_tokens = 0.0;
  double avg_reflection_tokens = 0.0;

  friend bool operator==(const CategoryStats&, const CategoryStats&) = default;
};

struct DatasetStats {
  std::vector<CategoryStats> categories;  // sorted by name; empty categories omitted
  CategoryStats overall;
};

/// Per-category counts and averages over `pool`; d_plus only contributes counts.
DatasetStats compute_stats(const std::vector<CandidateSample>& pool,
                           const std::vector<CandidateSample>& d_plus,
                           const TokenCounter& counter = whitespace_token_counter());

json stats_to_json(const DatasetStats& stats);
std::string stats_to_table(const DatasetStats& stats);

}  // namespace reflectevo
