// SPDX-License-Identifier: Apache-2.0
//
// Domain records shared by every stage of the pipeline: tasks, turns,
// reflections, rollout traces, sampled candidates and preference pairs.
// All records are plain values; once built they are never mutated, so they
// can be handed to worker threads freely.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "reflectevo/util.hpp"

namespace reflectevo {

enum class AnswerKind { multiple_choice, numeric, free_text, code };

/// The ten task categories used to group dataset statistics.
inline constexpr std::string_view kTaskCategories[] = {
    "logical_reasoning",     "mathematics",           "coding",
    "contextual_qa",         "context_free_qa",       "reading_comprehension",
    "commonsense_reasoning", "social_reasoning",      "causal_reasoning",
    "physics_reasoning",
};

bool is_known_category(std::string_view category);

/// Accepts "logiqa", "math", "mbpp" and "bigbench/<subset>".
bool is_known_dataset(std::string_view source_dataset);

struct TaskItem {
  std::string id;
  std::string source_dataset;
  std::string task_category;
  std::string question;
  std::string gold_answer;
  AnswerKind answer_kind = AnswerKind::free_text;
  std::vector<std::string> fewshot;

  friend bool operator==(const TaskItem&, const TaskItem&) = default;
};

enum class FeedbackValue { correct, incorrect, unverified };
enum class VerifierKind { oracle, self_judgment, external_runner };

struct Feedback {
  FeedbackValue value = FeedbackValue::unverified;
  VerifierKind verifier = VerifierKind::oracle;
  /// Why the verdict came out the way it did when it is not a plain match
  /// ("timeout", "unparsable", "runner_error", ...). Empty otherwise.
  std::string reason;

  bool is_correct() const { return value == FeedbackValue::correct; }
  bool is_incorrect() const { return value == FeedbackValue::incorrect; }

  friend bool operator==(const Feedback&, const Feedback&) = default;
};

struct Turn {
  int index = 1;
  std::string scratchpad;
  std::optional<std::string> extracted_answer;
  std::optional<std::string> normalized_answer;
  Feedback feedback;

  friend bool operator==(const Turn&, const Turn&) = default;
};

enum class ReflectionSource { self, teacher };

struct SamplingInfo {
  double temperature = 0.0;
  std::uint64_t seed = 0;
  int sample_index = 1;  // j in 1..k

  friend bool operator==(const SamplingInfo&, const SamplingInfo&) = default;
};

struct ReflectionRecord {
  std::string instruction_id;
  std::string text;
  SamplingInfo sampling;
  ReflectionSource source = ReflectionSource::self;

  friend bool operator==(const ReflectionRecord&, const ReflectionRecord&) = default;
};

struct TraceStatus {
  enum class Kind { solved, unsolved, aborted };
  Kind kind = Kind::unsolved;
  int solved_turn = 0;       // meaningful when kind == solved
  std::string abort_reason;  // meaningful when kind == aborted

  static TraceStatus solved_at(int turn) { return {Kind::solved, turn, {}}; }
  static TraceStatus unsolved() { return {Kind::unsolved, 0, {}}; }
  static TraceStatus aborted(std::string reason) { return {Kind::aborted, 0, std::move(reason)}; }

  friend bool operator==(const TraceStatus&, const TraceStatus&) = default;
};

struct RolloutTrace {
  std::string task_id;
  std::vector<Turn> turns;
  /// reflections[i] sits between turns[i] and turns[i + 1].
  std::vector<ReflectionRecord> reflections;
  TraceStatus status;

  friend bool operator==(const RolloutTrace&, const RolloutTrace&) = default;
};

enum class Outcome { correct, incorrect };

/// One element of the raw reflection pool: a failed first attempt, one
/// sampled reflection on it and the correction that followed.
///
/// The question, gold answer and first scratchpad are carried along so that
/// every downstream file (curation, export, stats) is self-contained and the
/// outcome can be re-verified from the record alone.
struct CandidateSample {
  std::string task_id;
  std::string source_dataset;
  std::string task_category;
  std::string question;
  std::string gold_answer;
  AnswerKind answer_kind = AnswerKind::free_text;

  std::string first_scratchpad;
  std::string first_answer;
  Feedback first_feedback;

  ReflectionRecord reflection;

  std::string corrected_scratchpad;
  std::string corrected_answer;
  std::string corrected_answer_normalized;
  Outcome outcome = Outcome::incorrect;

  friend bool operator==(const CandidateSample&, const CandidateSample&) = default;
};

/// A candidate slot that could not be produced. Kept so the pool count law
/// reconciles: |samples| + |aborts| = failed tasks * m * k.
struct AbortRecord {
  std::string task_id;
  std::string instruction_id;
  int sample_index = 0;
  std::string stage;   // "reflection" or "correction"
  std::string reason;  // "empty_reflection", "no_answer", "transport", ...

  friend bool operator==(const AbortRecord&, const AbortRecord&) = default;
};

/// x = (q, a, f) of a preference pair.
struct PairContext {
  std::string task_id;
  std::string source_dataset;
  std::string task_category;
  std::string question;
  std::string gold_answer;
  std::string first_scratchpad;
  std::string first_answer;
  Feedback first_feedback;

  friend bool operator==(const PairContext&, const PairContext&) = default;
};

/// y = (r, a-hat) of a preference pair.
struct PairMember {
  ReflectionRecord reflection;
  std::string corrected_scratchpad;
  std::string corrected_answer;
  Outcome outcome = Outcome::incorrect;

  friend bool operator==(const PairMember&, const PairMember&) = default;
};

enum class PairKind { outcome_pm, judged_pref };

struct JudgeVotes {
  bool debiased = true;
  /// "A", "B", "unparsable" or "error" for each pass; the second pass has the
  /// two reflections swapped and is absent in single-pass mode.
  std::string first_pass;
  std::optional<std::string> second_pass;

  friend bool operator==(const JudgeVotes&, const JudgeVotes&) = default;
};

struct PreferencePair {
  PairContext context;
  PairMember chosen;
  PairMember rejected;
  PairKind kind = PairKind::outcome_pm;
  std::optional<JudgeVotes> judge_votes;

  friend bool operator==(const PreferencePair&, const PreferencePair&) = default;
};

enum class SelectionMode { per_dataset, per_question };

struct GenerationPolicy {
  int k = 2;          // reject-sampling count per instruction
  int m = 5;          // instructions drawn from the pool
  int max_turns = 2;  // T
  int step_budget = 6;
  double sample_temperature = 0.7;
  double eval_temperature = 0.0;
  int max_new_tokens = 512;
  std::uint64_t seed = 0;
  SelectionMode selection = SelectionMode::per_dataset;
  /// Maximum number of tasks taken per source dataset; absent = no cap.
  std::map<std::string, std::size_t> per_dataset_caps;

  /// Throws Error(config) when k < 1, m outside [1, 32] or T < 1.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Enum names
// ---------------------------------------------------------------------------

std::string_view to_string(AnswerKind v);
std::string_view to_string(FeedbackValue v);
std::string_view to_string(VerifierKind v);
std::string_view to_string(ReflectionSource v);
std::string_view to_string(Outcome v);
std::string_view to_string(PairKind v);
std::string_view to_string(SelectionMode v);

AnswerKind parse_answer_kind(std::string_view s);
FeedbackValue parse_feedback_value(std::string_view s);
VerifierKind parse_verifier_kind(std::string_view s);
ReflectionSource parse_reflection_source(std::string_view s);
Outcome parse_outcome(std::string_view s);
PairKind parse_pair_kind(std::string_view s);
SelectionMode parse_selection_mode(std::string_view s);

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

void to_json(json& j, const TaskItem& v);
void from_json(const json& j, TaskItem& v);
void to_json(json& j, const Feedback& v);
void from_json(const json& j, Feedback& v);
void to_json(json& j, const Turn& v);
void from_json(const json& j, Turn& v);
void to_json(json& j, const SamplingInfo& v);
void from_json(const json& j, SamplingInfo& v);
void to_json(json& j, const ReflectionRecord& v);
void from_json(const json& j, ReflectionRecord& v);
void to_json(json& j, const TraceStatus& v);
void from_json(const json& j, TraceStatus& v);
void to_json(json& j, const RolloutTrace& v);
void from_json(const json& j, RolloutTrace& v);
void to_json(json& j, const CandidateSample& v);
void from_json(const json& j, CandidateSample& v);
void to_json(json& j, const AbortRecord& v);
void from_json(const json& j, AbortRecord& v);
void to_json(json& j, const PairContext& v);
void from_json(const json& j, PairContext& v);
void to_json(json& j, const PairMember& v);
void from_json(const json& j, PairMember& v);
void to_json(json& j, const JudgeVotes& v);
void from_json(const json& j, JudgeVotes& v);
void to_json(json& j, const PreferencePair& v);
void from_json(const json& j, PreferencePair& v);

/// Loads tasks from JSONL and checks id uniqueness and non-empty gold answers.
std::vector<TaskItem> load_tasks(const std::filesystem::path& path);
void validate_tasks(const std::vector<TaskItem>& tasks);

// ---------------------------------------------------------------------------
// Invariant checks
// ---------------------------------------------------------------------------

/// Lists every violated RolloutTrace invariant. Never throws.
std::vector<std::string> validate_trace(const RolloutTrace& trace);

/// Lists every violated CandidateSample invariant that can be checked
/// without re-running the verifier.
std::vector<std::string> validate_candidate(const CandidateSample& sample);

}  // namespace reflectevo
