// SPDX-License-Identifier: Apache-2.0
//
// Generator / Reflector protocol: ReAct-style first turn, reflection on a
// failed attempt, correction turn, the one-stage reflect-and-correct
// variant, the multi-turn rollout loop and reject sampling of candidates.
#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "reflectevo/instruction_pool.hpp"
#include "reflectevo/model.hpp"
#include "reflectevo/prompts.hpp"

namespace reflectevo {

class Gateway;
class Verifier;

// ---------------------------------------------------------------------------
// Scratchpad
// ---------------------------------------------------------------------------

enum class SegmentKind { thought, action, observation };

struct ScratchpadSegment {
  SegmentKind kind;
  std::string text;

  friend bool operator==(const ScratchpadSegment&, const ScratchpadSegment&) = default;
};

/// Interleaved Thought / Action / Observation transcript. Renders one
/// "Label: text" block per segment; parse() inverts render() for any
/// segment whose text has no line starting with a label.
class Scratchpad {
public:
  void add(SegmentKind kind, std::string text) { segments_.push_back({kind, std::move(text)}); }
  const std::vector<ScratchpadSegment>& segments() const { return segments_; }
  bool empty() const { return segments_.empty(); }

  std::string render() const;
  static Scratchpad parse(std::string_view rendered);

private:
  std::vector<ScratchpadSegment> segments_;
};

/// Last `Finish[...]` in `text`, with a bracket-balanced capture.
struct TerminalAction {
  std::size_t begin = 0;  // offset of "Finish["
  std::size_t end = 0;    // one past the closing bracket
  std::string answer;
};
std::optional<TerminalAction> find_terminal_action(std::string_view text);

/// The scratchpad shown to reflection prompts: the attempt followed by the
/// binary verdict as an observation.
std::string render_failed_attempt(const std::string& scratchpad);

// Prompt renderers shared by the engine and the exporters. The failed
// scratchpads are passed raw; the INCORRECT observation is appended here.
std::string render_reasoning_prompt(const PromptLibrary& prompts, const TaskItem& task,
                                    const std::string& progress);
std::string render_correction_prompt(const PromptLibrary& prompts, const TaskItem& task,
                                     const std::string& reflection, const std::string& progress);
std::string render_plain_reflection_prompt(const PromptLibrary& prompts,
                                           const std::string& question,
                                           const std::string& failed_scratchpad);
std::string render_one_stage_prompt(const PromptLibrary& prompts, const std::string& question,
                                    const std::string& failed_scratchpad);

/// Observation inserted after a non-terminal action.
inline constexpr std::string_view kContinueObservation =
    "Continue reasoning. Call Finish[answer] when you are ready to answer.";

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

/// A step that could not produce its record. `reason` is a short code:
/// no_answer, empty_reflection, parse, transport, protocol.
class RolloutAbort : public std::runtime_error {
public:
  RolloutAbort(std::string reason, const std::string& detail)
      : std::runtime_error(reason + ": " + detail), reason_(std::move(reason)) {}
  const std::string& reason() const { return reason_; }

private:
  std::string reason_;
};

/// How the model reflects between turns during evaluation rollouts.
enum class ReflectionStyle {
  plain,        // Reflexion-style prompt, then a correction turn
  instruction,  // one instruction from the pool, then a correction turn
  one_stage,    // reflection and new answer in one completion
};

std::string_view to_string(ReflectionStyle s);
ReflectionStyle parse_reflection_style(std::string_view s);

inline constexpr std::string_view kPlainInstructionId = "reflexion";
inline constexpr std::string_view kOneStageInstructionId = "one_stage";

struct RolloutConfig {
  GenerationPolicy policy;
  std::string model;
  ReflectionStyle style = ReflectionStyle::plain;
  /// Pool id used when style == instruction.
  std::string instruction_id = "1-1+2-1+3-1";
};

struct CandidateBatch {
  std::vector<CandidateSample> samples;
  std::vector<AbortRecord> aborts;
};

class RolloutEngine {
public:
  RolloutEngine(std::shared_ptr<Gateway> gateway, const PromptLibrary& prompts,
                const InstructionPool& pool, RolloutConfig config);

  /// Turn 1 from the reasoning prompt. Feedback is left Unverified.
  /// Throws RolloutAbort("no_answer") when the step budget runs out.
  Turn run_first_turn(const TaskItem& task) const;

  /// One reflection on a failed turn. `spec == nullptr` uses the plain
  /// Reflexion prompt. Throws Error(reflect_on_correct) if `failed` was
  /// judged Correct and RolloutAbort("empty_reflection") on a blank reply.
  ReflectionRecord generate_reflection(const TaskItem& task, const Turn& failed,
                                       const InstructionSpec* spec, int sample_index) const;

  /// Next turn, prompted with the reflection and the previous attempt.
  Turn run_correction_turn(const TaskItem& task, const Turn& previous,
                           const ReflectionRecord& reflection) const;

  /// Reflection text and corrected answer from a single completion.
  /// Throws RolloutAbort("parse") if the reply has no terminal action.
  std::pair<ReflectionRecord, Turn> run_one_stage_reflect_correct(const TaskItem& task,
                                                                  const Turn& failed) const;

  /// verify -> (stop | reflect + correct) until Correct or max_turns.
  RolloutTrace run_rollout(const TaskItem& task, Verifier& verifier) const;

  /// m x k reflection + correction samples for one failed first turn. Every
  /// slot yields either a sample or an abort record.
  CandidateBatch sample_candidates(const TaskItem& task, const Turn& failed,
                                   const std::vector<InstructionSpec>& specs,
                                   Verifier& verifier) const;

  const RolloutConfig& config() const { return config_; }

  // Prompt renderers, public so exports and tests share them.
  std::string render_reasoning_prompt(const TaskItem& task, const std::string& progress) const;
  std::string render_correction_prompt(const TaskItem& task, const std::string& reflection,
                                       const std::string& progress) const;
  std::string render_plain_reflection_prompt(const TaskItem& task,
                                             const std::string& failed_scratchpad) const;
  std::string render_one_stage_prompt(const TaskItem& task,
                                      const std::string& failed_scratchpad) const;

private:
  /// ReAct loop shared by first and correction turns.
  Turn run_react_turn(int index, const std::string& history,
                      const std::function<std::string(const std::string&)>& render,
                      double temperature, std::uint64_t seed) const;
  std::string complete_text(const std::string& prompt, double temperature, std::uint64_t seed,
                            std::vector<std::string> stop = {}) const;

  std::shared_ptr<Gateway> gateway_;
  const PromptLibrary& prompts_;
  const InstructionPool& pool_;
  RolloutConfig config_;
};

// ---------------------------------------------------------------------------
// Pool generation
// ---------------------------------------------------------------------------

struct GenerationResult {
  std::vector<RolloutTrace> first_turns;  // one single-turn trace per task, by task id
  std::vector<CandidateSample> samples;   // sorted by (task_id, instruction_id, j)
  std::vector<AbortRecord> aborts;        // sorted the same way
  std::size_t failed_tasks = 0;           // first turn verified Incorrect
  std::size_t first_turn_aborts = 0;
  /// Instructions used per dataset (per_dataset mode) or per task.
  std::map<std::string, std::vector<std::string>> selected_instructions;

  /// failed_tasks * m * k.
  std::size_t expected_candidates(const GenerationPolicy& policy) const;
};

/// Runs the first turn on every task, and reject sampling on each failure.
/// Output order is by task id regardless of `workers`.
GenerationResult generate_pool(const std::vector<TaskItem>& tasks, const RolloutEngine& engine,
                               const InstructionPool& pool, Verifier& verifier,
                               std::size_t workers);

}  // namespace reflectevo
