// SPDX-License-Identifier: Apache-2.0
#include "reflectevo/model.hpp"

#include <algorithm>
#include <array>
#include <set>

#include "reflectevo/error.hpp"
#include "reflectevo/json_fields.hpp"

namespace reflectevo {

using fields::optional_field;
using fields::optional_or;
using fields::required;

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const std::array<std::pair<std::string_view, E>, N>& table,
             const char* what) {
  for (const auto& [name, value] : table) {
    if (name == s) return value;
  }
  throw Error(ErrorCode::schema, std::string("unknown ") + what + " '" + std::string(s) + "'");
}

template <typename E, std::size_t N>
std::string_view enum_name(E v, const std::array<std::pair<std::string_view, E>, N>& table) {
  for (const auto& [name, value] : table) {
    if (value == v) return name;
  }
  return "?";
}

constexpr std::array<std::pair<std::string_view, AnswerKind>, 4> kAnswerKinds{{
    {"multiple_choice", AnswerKind::multiple_choice},
    {"numeric", AnswerKind::numeric},
    {"free_text", AnswerKind::free_text},
    {"code", AnswerKind::code},
}};
constexpr std::array<std::pair<std::string_view, FeedbackValue>, 3> kFeedbackValues{{
    {"Correct", FeedbackValue::correct},
    {"Incorrect", FeedbackValue::incorrect},
    {"Unverified", FeedbackValue::unverified},
}};
constexpr std::array<std::pair<std::string_view, VerifierKind>, 3> kVerifierKinds{{
    {"oracle", VerifierKind::oracle},
    {"self_judgment", VerifierKind::self_judgment},
    {"external_runner", VerifierKind::external_runner},
}};
constexpr std::array<std::pair<std::string_view, ReflectionSource>, 2> kSources{{
    {"self", ReflectionSource::self},
    {"teacher", ReflectionSource::teacher},
}};
constexpr std::array<std::pair<std::string_view, Outcome>, 2> kOutcomes{{
    {"correct", Outcome::correct},
    {"incorrect", Outcome::incorrect},
}};
constexpr std::array<std::pair<std::string_view, PairKind>, 2> kPairKinds{{
    {"outcome_pm", PairKind::outcome_pm},
    {"judged_pref", PairKind::judged_pref},
}};
constexpr std::array<std::pair<std::string_view, SelectionMode>, 2> kSelectionModes{{
    {"per_dataset", SelectionMode::per_dataset},
    {"per_question", SelectionMode::per_question},
}};

}  // namespace

bool is_known_category(std::string_view category) {
  return std::find(std::begin(kTaskCategories), std::end(kTaskCategories), category) !=
         std::end(kTaskCategories);
}

bool is_known_dataset(std::string_view name) {
  if (name == "logiqa" || name == "math" || name == "mbpp") return true;
  constexpr std::string_view prefix = "bigbench/";
  return name.size() > prefix.size() && name.substr(0, prefix.size()) == prefix;
}

void GenerationPolicy::validate() const {
  if (k < 1) throw Error(ErrorCode::config, "policy.k must be >= 1");
  if (m < 1 || m > 32) throw Error(ErrorCode::config, "policy.m must be in [1, 32]");
  if (max_turns < 1) throw Error(ErrorCode::config, "policy.max_turns must be >= 1");
  if (step_budget < 1) throw Error(ErrorCode::config, "policy.step_budget must be >= 1");
  if (max_new_tokens < 1) throw Error(ErrorCode::config, "policy.max_new_tokens must be >= 1");
}

std::string_view to_string(AnswerKind v) { return enum_name(v, kAnswerKinds); }
std::string_view to_string(FeedbackValue v) { return enum_name(v, kFeedbackValues); }
std::string_view to_string(VerifierKind v) { return enum_name(v, kVerifierKinds); }
std::string_view to_string(ReflectionSource v) { return enum_name(v, kSources); }
std::string_view to_string(Outcome v) { return enum_name(v, kOutcomes); }
std::string_view to_string(PairKind v) { return enum_name(v, kPairKinds); }
std::string_view to_string(SelectionMode v) { return enum_name(v, kSelectionModes); }

AnswerKind parse_answer_kind(std::string_view s) { return parse_enum(s, kAnswerKinds, "answer_kind"); }
FeedbackValue parse_feedback_value(std::string_view s) {
  return parse_enum(s, kFeedbackValues, "feedback value");
}
VerifierKind parse_verifier_kind(std::string_view s) {
  return parse_enum(s, kVerifierKinds, "verifier kind");
}
ReflectionSource parse_reflection_source(std::string_view s) {
  return parse_enum(s, kSources, "reflection source");
}
Outcome parse_outcome(std::string_view s) { return parse_enum(s, kOutcomes, "outcome"); }
PairKind parse_pair_kind(std::string_view s) { return parse_enum(s, kPairKinds, "pair kind"); }
SelectionMode parse_selection_mode(std::string_view s) {
  return parse_enum(s, kSelectionModes, "selection mode");
}

// ---------------------------------------------------------------------------

void to_json(json& j, const TaskItem& v) {
  j = json{{"id", v.id},
           {"source_dataset", v.source_dataset},
           {"task_category", v.task_category},
           {"question", v.question},
           {"gold_answer", v.gold_answer},
           {"answer_kind", to_string(v.answer_kind)},
           {"fewshot", v.fewshot}};
}

void from_json(const json& j, TaskItem& v) {
  v.id = required<std::string>(j, "id");
  v.source_dataset = required<std::string>(j, "source_dataset");
  v.task_category = optional_or<std::string>(j, "task_category", "");
  v.question = required<std::string>(j, "question");
  v.gold_answer = required<std::string>(j, "gold_answer");
  v.answer_kind = parse_answer_kind(required<std::string>(j, "answer_kind"));
  v.fewshot = optional_or<std::vector<std::string>>(j, "fewshot", {});
}

void to_json(json& j, const Feedback& v) {
  j = json{{"value", to_string(v.value)}, {"verifier", to_string(v.verifier)}};
  if (!v.reason.empty()) j["reason"] = v.reason;
}

void from_json(const json& j, Feedback& v) {
  v.value = parse_feedback_value(required<std::string>(j, "value"));
  v.verifier = parse_verifier_kind(required<std::string>(j, "verifier"));
  v.reason = optional_or<std::string>(j, "reason", "");
}

void to_json(json& j, const Turn& v) {
  j = json{{"index", v.index}, {"scratchpad", v.scratchpad}, {"feedback", v.feedback}};
  j["extracted_answer"] = v.extracted_answer ? json(*v.extracted_answer) : json(nullptr);
  j["normalized_answer"] = v.normalized_answer ? json(*v.normalized_answer) : json(nullptr);
}

void from_json(const json& j, Turn& v) {
  v.index = required<int>(j, "index");
  v.scratchpad = required<std::string>(j, "scratchpad");
  v.feedback = required<Feedback>(j, "feedback");
  v.extracted_answer = optional_field<std::string>(j, "extracted_answer");
  v.normalized_answer = optional_field<std::string>(j, "normalized_answer");
}

void to_json(json& j, const SamplingInfo& v) {
  j = json{{"temperature", v.temperature}, {"seed", v.seed}, {"sample_index", v.sample_index}};
}

void from_json(const json& j, SamplingInfo& v) {
  v.temperature = required<double>(j, "temperature");
  v.seed = required<std::uint64_t>(j, "seed");
  v.sample_index = required<int>(j, "sample_index");
}

void to_json(json& j, const ReflectionRecord& v) {
  j = json{{"instruction_id", v.instruction_id},
           {"text", v.text},
           {"sampling", v.sampling},
           {"source", to_string(v.source)}};
}

void from_json(const json& j, ReflectionRecord& v) {
  v.instruction_id = required<std::string>(j, "instruction_id");
  v.text = required<std::string>(j, "text");
  v.sampling = required<SamplingInfo>(j, "sampling");
  v.source = parse_reflection_source(optional_or<std::string>(j, "source", "self"));
}

void to_json(json& j, const TraceStatus& v) {
  switch (v.kind) {
    case TraceStatus::Kind::solved:
      j = json{{"kind", "solved"}, {"turn", v.solved_turn}};
      break;
    case TraceStatus::Kind::unsolved:
      j = json{{"kind", "unsolved"}};
      break;
    case TraceStatus::Kind::aborted:
      j = json{{"kind", "aborted"}, {"reason", v.abort_reason}};
      break;
  }
}

void from_json(const json& j, TraceStatus& v) {
  const auto kind = required<std::string>(j, "kind");
  if (kind == "solved") {
    v = TraceStatus::solved_at(required<int>(j, "turn"));
  } else if (kind == "unsolved") {
    v = TraceStatus::unsolved();
  } else if (kind == "aborted") {
    v = TraceStatus::aborted(required<std::string>(j, "reason"));
  } else {
    throw Error(ErrorCode::schema, "unknown trace status '" + kind + "'");
  }
}

void to_json(json& j, const RolloutTrace& v) {
  j = json{{"task_id", v.task_id},
           {"turns", v.turns},
           {"reflections", v.reflections},
           {"status", v.status}};
}

void from_json(const json& j, RolloutTrace& v) {
  v.task_id = required<std::string>(j, "task_id");
  v.turns = required<std::vector<Turn>>(j, "turns");
  v.reflections = required<std::vector<ReflectionRecord>>(j, "reflections");
  v.status = required<TraceStatus>(j, "status");
}

void to_json(json& j, const CandidateSample& v) {
  j = json{{"task_id", v.task_id},
           {"source_dataset", v.source_dataset},
           {"task_category", v.task_category},
           {"question", v.question},
           {"gold_answer", v.gold_answer},
           {"answer_kind", to_string(v.answer_kind)},
           {"first_scratchpad", v.first_scratchpad},
           {"first_answer", v.first_answer},
           {"first_feedback", v.first_feedback},
           {"reflection", v.reflection},
           {"corrected_scratchpad", v.corrected_scratchpad},
           {"corrected_answer", v.corrected_answer},
           {"corrected_answer_normalized", v.corrected_answer_normalized},
           {"outcome", to_string(v.outcome)}};
}

void from_json(const json& j, CandidateSample& v) {
  v.task_id = required<std::string>(j, "task_id");
  v.source_dataset = optional_or<std::string>(j, "source_dataset", "");
  v.task_category = optional_or<std::string>(j, "task_category", "");
  v.question = required<std::string>(j, "question");
  v.gold_answer = required<std::string>(j, "gold_answer");
  v.answer_kind = parse_answer_kind(required<std::string>(j, "answer_kind"));
  v.first_scratchpad = required<std::string>(j, "first_scratchpad");
  v.first_answer = required<std::string>(j, "first_answer");
  v.first_feedback = required<Feedback>(j, "first_feedback");
  v.reflection = required<ReflectionRecord>(j, "reflection");
  v.corrected_scratchpad = required<std::string>(j, "corrected_scratchpad");
  v.corrected_answer = required<std::string>(j, "corrected_answer");
  v.corrected_answer_normalized = optional_or<std::string>(j, "corrected_answer_normalized", "");
  v.outcome = parse_outcome(required<std::string>(j, "outcome"));
}

void to_json(json& j, const AbortRecord& v) {
  j = json{{"task_id", v.task_id},
           {"instruction_id", v.instruction_id},
           {"sample_index", v.sample_index},
           {"stage", v.stage},
           {"reason", v.reason}};
}

void from_json(const json& j, AbortRecord& v) {
  v.task_id = required<std::string>(j, "task_id");
  v.instruction_id = optional_or<std::string>(j, "instruction_id", "");
  v.sample_index = optional_or<int>(j, "sample_index", 0);
  v.stage = required<std::string>(j, "stage");
  v.reason = required<std::string>(j, "reason");
}

void to_json(json& j, const PairContext& v) {
  j = json{{"task_id", v.task_id},
           {"source_dataset", v.source_dataset},
           {"task_category", v.task_category},
           {"question", v.question},
           {"gold_answer", v.gold_answer},
           {"first_scratchpad", v.first_scratchpad},
           {"first_answer", v.first_answer},
           {"first_feedback", v.first_feedback}};
}

void from_json(const json& j, PairContext& v) {
  v.task_id = required<std::string>(j, "task_id");
  v.source_dataset = optional_or<std::string>(j, "source_dataset", "");
  v.task_category = optional_or<std::string>(j, "task_category", "");
  v.question = required<std::string>(j, "question");
  v.gold_answer = required<std::string>(j, "gold_answer");
  v.first_scratchpad = required<std::string>(j, "first_scratchpad");
  v.first_answer = required<std::string>(j, "first_answer");
  v.first_feedback = required<Feedback>(j, "first_feedback");
}

void to_json(json& j, const PairMember& v) {
  j = json{{"reflection", v.reflection},
           {"corrected_scratchpad", v.corrected_scratchpad},
           {"corrected_answer", v.corrected_answer},
           {"outcome", to_string(v.outcome)}};
}

void from_json(const json& j, PairMember& v) {
  v.reflection = required<ReflectionRecord>(j, "reflection");
  v.corrected_scratchpad = required<std::string>(j, "corrected_scratchpad");
  v.corrected_answer = required<std::string>(j, "corrected_answer");
  v.outcome = parse_outcome(required<std::string>(j, "outcome"));
}

void to_json(json& j, const JudgeVotes& v) {
  j = json{{"debiased", v.debiased}, {"first_pass", v.first_pass}};
  j["second_pass"] = v.second_pass ? json(*v.second_pass) : json(nullptr);
}

void from_json(const json& j, JudgeVotes& v) {
  v.debiased = required<bool>(j, "debiased");
  v.first_pass = required<std::string>(j, "first_pass");
  v.second_pass = optional_field<std::string>(j, "second_pass");
}

void to_json(json& j, const PreferencePair& v) {
  j = json{{"context", v.context},
           {"chosen", v.chosen},
           {"rejected", v.rejected},
           {"kind", to_string(v.kind)}};
  j["judge_votes"] = v.judge_votes ? json(*v.judge_votes) : json(nullptr);
}

void from_json(const json& j, PreferencePair& v) {
  v.context = required<PairContext>(j, "context");
  v.chosen = required<PairMember>(j, "chosen");
  v.rejected = required<PairMember>(j, "rejected");
  v.kind = parse_pair_kind(required<std::string>(j, "kind"));
  v.judge_votes = optional_field<JudgeVotes>(j, "judge_votes");
}

// ---------------------------------------------------------------------------

void validate_tasks(const std::vector<TaskItem>& tasks) {
  std::set<std::string> seen;
  for (const auto& t : tasks) {
    if (t.id.empty()) throw Error(ErrorCode::schema, "task with empty id");
    if (!seen.insert(t.id).second) throw Error(ErrorCode::schema, "duplicate task id '" + t.id + "'");
    if (trim(t.gold_answer).empty()) {
      throw Error(ErrorCode::schema, "task '" + t.id + "' has an empty gold_answer");
    }
    if (!is_known_dataset(t.source_dataset)) {
      throw Error(ErrorCode::config,
                  "task '" + t.id + "': unknown dataset name '" + t.source_dataset +
                      "' (expected logiqa, math, mbpp or bigbench/<subset>)");
    }
    if (!t.task_category.empty() && !is_known_category(t.task_category)) {
      throw Error(ErrorCode::schema,
                  "task '" + t.id + "': unknown task_category '" + t.task_category + "'");
    }
  }
}

std::vector<TaskItem> load_tasks(const std::filesystem::path& path) {
  std::vector<TaskItem> tasks;
  std::size_t line = 0;
  for (const auto& j : read_jsonl(path)) {
    ++line;
    try {
      tasks.push_back(j.get<TaskItem>());
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + " record " + std::to_string(line) + ": " + e.what());
    }
  }
  validate_tasks(tasks);
  return tasks;
}

std::vector<std::string> validate_trace(const RolloutTrace& trace) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < trace.turns.size(); ++i) {
    if (trace.turns[i].index != static_cast<int>(i) + 1) {
      out.emplace_back("non-contiguous turn indices");
      break;
    }
  }
  const bool aborted = trace.status.kind == TraceStatus::Kind::aborted;
  if (!aborted && !trace.turns.empty() && trace.reflections.size() != trace.turns.size() - 1) {
    out.emplace_back("reflection count does not match turn count");
  }
  if (!aborted && trace.turns.empty()) out.emplace_back("trace has no turns");
  if (trace.status.kind == TraceStatus::Kind::solved) {
    const int t = trace.status.solved_turn;
    if (t < 1 || t > static_cast<int>(trace.turns.size())) {
      out.emplace_back("solved turn out of range");
    } else {
      if (!trace.turns[static_cast<std::size_t>(t - 1)].feedback.is_correct()) {
        out.emplace_back("solved turn not Correct");
      }
      if (t != static_cast<int>(trace.turns.size())) out.emplace_back("turns follow the solved turn");
    }
  }
  for (const auto& turn : trace.turns) {
    const bool has_finish = contains(turn.scratchpad, "Finish[");
    if (turn.extracted_answer.has_value() && !has_finish) {
      out.emplace_back("answer extracted without a terminal action");
      break;
    }
  }
  return out;
}

std::vector<std::string> validate_candidate(const CandidateSample& s) {
  std::vector<std::string> out;
  if (s.first_feedback.value != FeedbackValue::incorrect) {
    out.emplace_back("first_feedback is not Incorrect");
  }
  if (s.reflection.instruction_id.empty()) out.emplace_back("missing instruction_id");
  if (s.reflection.sampling.sample_index < 1) out.emplace_back("sample_index below 1");
  if (trim(s.gold_answer).empty()) out.emplace_back("empty gold answer");
  return out;
}

}  // namespace reflectevo
