// SPDX-License-Identifier: Apache-2.0
#include "reflectevo/rollout.hpp"

#include <algorithm>
#include <mutex>

#include "reflectevo/error.hpp"
#include "reflectevo/gateway.hpp"
#include "reflectevo/verify.hpp"

namespace reflectevo {

namespace {

constexpr std::string_view kThoughtLabel = "Thought:";
constexpr std::string_view kActionLabel = "Action:";
constexpr std::string_view kObservationLabel = "Observation:";

std::string_view label_of(SegmentKind kind) {
  switch (kind) {
    case SegmentKind::thought: return kThoughtLabel;
    case SegmentKind::action: return kActionLabel;
    case SegmentKind::observation: return kObservationLabel;
  }
  return kThoughtLabel;
}

bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }

/// Drops a leading "Label:" or "Label 3:" from `s`.
std::string strip_label(std::string_view s, std::string_view word) {
  std::string t = trim(s);
  if (!starts_with(t, word)) return t;
  std::size_t i = word.size();
  while (i < t.size() && (std::isdigit(static_cast<unsigned char>(t[i])) || t[i] == ' ')) ++i;
  if (i < t.size() && t[i] == ':') return trim(std::string_view(t).substr(i + 1));
  return t;
}

/// Drops a trailing "Action:" / "Action 2:" left in front of a terminal action.
std::string strip_trailing_action_label(std::string_view s) {
  std::string t = trim(s);
  if (t.empty() || t.back() != ':') return t;
  const auto pos = t.rfind("Action");
  if (pos == std::string::npos) return t;
  for (std::size_t i = pos + 6; i + 1 < t.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(t[i])) && t[i] != ' ') return t;
  }
  return trim(std::string_view(t).substr(0, pos));
}

struct ParsedStep {
  std::vector<ScratchpadSegment> segments;
  std::optional<std::string> answer;
};

ParsedStep parse_step(std::string_view reply) {
  ParsedStep out;
  if (const auto terminal = find_terminal_action(reply)) {
    auto thought = strip_label(strip_trailing_action_label(reply.substr(0, terminal->begin)), "Thought");
    if (!thought.empty()) out.segments.push_back({SegmentKind::thought, std::move(thought)});
    out.segments.push_back({SegmentKind::action, "Finish[" + terminal->answer + "]"});
    out.answer = terminal->answer;
    return out;
  }
  // Cut any observation the model invented for itself.
  if (const auto obs = reply.find("\nObservation"); obs != std::string_view::npos) {
    reply = reply.substr(0, obs);
  }
  const auto action = reply.find(kActionLabel);
  auto thought = strip_label(reply.substr(0, action), "Thought");
  if (!thought.empty()) out.segments.push_back({SegmentKind::thought, std::move(thought)});
  if (action != std::string_view::npos) {
    auto rest = reply.substr(action + kActionLabel.size());
    rest = rest.substr(0, rest.find('\n'));
    auto text = trim(rest);
    if (!text.empty()) out.segments.push_back({SegmentKind::action, std::move(text)});
  }
  return out;
}

std::string few_shot_block(const TaskItem& task) { return join(task.fewshot, "\n\n"); }

AbortRecord make_abort(const TaskItem& task, const std::string& instruction_id, int j,
                       std::string stage, std::string reason) {
  return AbortRecord{task.id, instruction_id, j, std::move(stage), std::move(reason)};
}

}  // namespace

// ---------------------------------------------------------------------------

std::string Scratchpad::render() const {
  std::string out;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (i) out += '\n';
    out += label_of(segments_[i].kind);
    out += ' ';
    out += segments_[i].text;
  }
  return out;
}

Scratchpad Scratchpad::parse(std::string_view rendered) {
  Scratchpad pad;
  std::size_t start = 0;
  while (start <= rendered.size()) {
    auto end = rendered.find('\n', start);
    if (end == std::string_view::npos) end = rendered.size();
    const auto line = rendered.substr(start, end - start);
    bool labelled = false;
    for (auto kind : {SegmentKind::thought, SegmentKind::action, SegmentKind::observation}) {
      const auto label = label_of(kind);
      if (starts_with(line, label)) {
        auto text = line.substr(label.size());
        if (!text.empty() && text[0] == ' ') text.remove_prefix(1);
        pad.add(kind, std::string(text));
        labelled = true;
        break;
      }
    }
    if (!labelled && !pad.segments_.empty()) {
      pad.segments_.back().text += '\n';
      pad.segments_.back().text += line;
    } else if (!labelled && !line.empty()) {
      pad.add(SegmentKind::thought, std::string(line));
    }
    if (end == rendered.size()) break;
    start = end + 1;
  }
  return pad;
}

std::optional<TerminalAction> find_terminal_action(std::string_view text) {
  constexpr std::string_view marker = "Finish[";
  for (auto pos = text.rfind(marker); pos != std::string_view::npos;
       pos = pos == 0 ? std::string_view::npos : text.rfind(marker, pos - 1)) {
    int depth = 1;
    const auto open = pos + marker.size();
    for (std::size_t i = open; i < text.size(); ++i) {
      if (text[i] == '[') ++depth;
      if (text[i] == ']' && --depth == 0) {
        return TerminalAction{pos, i + 1, trim(text.substr(open, i - open))};
      }
    }
    // unbalanced: try an earlier occurrence
  }
  return std::nullopt;
}

std::string render_failed_attempt(const std::string& scratchpad) {
  return scratchpad + "\n" + std::string(kObservationLabel) + " Answer is INCORRECT";
}

std::string_view to_string(ReflectionStyle s) {
  switch (s) {
    case ReflectionStyle::plain: return "plain";
    case ReflectionStyle::instruction: return "instruction";
    case ReflectionStyle::one_stage: return "one_stage";
  }
  return "plain";
}

ReflectionStyle parse_reflection_style(std::string_view s) {
  if (s == "plain") return ReflectionStyle::plain;
  if (s == "instruction") return ReflectionStyle::instruction;
  if (s == "one_stage") return ReflectionStyle::one_stage;
  throw Error(ErrorCode::config, "unknown reflection style '" + std::string(s) +
                                     "' (expected plain, instruction or one_stage)");
}

// ---------------------------------------------------------------------------

RolloutEngine::RolloutEngine(std::shared_ptr<Gateway> gateway, const PromptLibrary& prompts,
                             const InstructionPool& pool, RolloutConfig config)
    : gateway_(std::move(gateway)), prompts_(prompts), pool_(pool), config_(std::move(config)) {
  if (!gateway_) throw Error(ErrorCode::config, "rollout engine needs a gateway");
  config_.policy.validate();
  if (config_.style == ReflectionStyle::instruction) pool_.find(config_.instruction_id);
}

std::string render_reasoning_prompt(const PromptLibrary& prompts, const TaskItem& task,
                                    const std::string& progress) {
  return prompts.generator().render(
      {{"Examples", few_shot_block(task)}, {"Question", task.question}, {"Scratchpad", progress}});
}

std::string render_correction_prompt(const PromptLibrary& prompts, const TaskItem& task,
                                     const std::string& reflection, const std::string& progress) {
  return prompts.correction().render({{"Examples", few_shot_block(task)},
                                      {"Question", task.question},
                                      {"Reflections", reflection},
                                      {"Scratchpad", progress}});
}

std::string render_plain_reflection_prompt(const PromptLibrary& prompts,
                                           const std::string& question,
                                           const std::string& failed_scratchpad) {
  return prompts.reflexion().render(
      {{"Question", question}, {"Scratchpad", render_failed_attempt(failed_scratchpad)}});
}

std::string render_one_stage_prompt(const PromptLibrary& prompts, const std::string& question,
                                    const std::string& failed_scratchpad) {
  return prompts.one_stage().render(
      {{"Question", question}, {"Scratchpad", render_failed_attempt(failed_scratchpad)}});
}

std::string RolloutEngine::render_reasoning_prompt(const TaskItem& task,
                                                   const std::string& progress) const {
  return reflectevo::render_reasoning_prompt(prompts_, task, progress);
}

std::string RolloutEngine::render_correction_prompt(const TaskItem& task,
                                                    const std::string& reflection,
                                                    const std::string& progress) const {
  return reflectevo::render_correction_prompt(prompts_, task, reflection, progress);
}

std::string RolloutEngine::render_plain_reflection_prompt(const TaskItem& task,
                                                          const std::string& failed) const {
  return reflectevo::render_plain_reflection_prompt(prompts_, task.question, failed);
}

std::string RolloutEngine::render_one_stage_prompt(const TaskItem& task,
                                                   const std::string& failed) const {
  return reflectevo::render_one_stage_prompt(prompts_, task.question, failed);
}

std::string RolloutEngine::complete_text(const std::string& prompt, double temperature,
                                         std::uint64_t seed, std::vector<std::string> stop) const {
  auto request = CompletionRequest::user(prompt, temperature, seed);
  request.model = config_.model;
  request.max_new_tokens = config_.policy.max_new_tokens;
  request.stop = std::move(stop);
  return gateway_->complete(request).text;
}

Turn RolloutEngine::run_react_turn(int index, const std::string& history,
                                   const std::function<std::string(const std::string&)>& render,
                                   double temperature, std::uint64_t seed) const {
  Scratchpad pad;
  for (int step = 0; step < config_.policy.step_budget; ++step) {
    std::string progress = history;
    if (!pad.empty()) {
      if (!progress.empty()) progress += '\n';
      progress += pad.render();
    }
    const auto reply = complete_text(render(progress), temperature,
                                     derive_seed(seed, "step" + std::to_string(step)),
                                     {"\nObservation:"});
    auto parsed = parse_step(reply);
    for (auto& seg : parsed.segments) pad.add(seg.kind, std::move(seg.text));
    if (parsed.answer) {
      Turn turn;
      turn.index = index;
      turn.scratchpad = pad.render();
      turn.extracted_answer = *parsed.answer;
      return turn;
    }
    pad.add(SegmentKind::observation, std::string(kContinueObservation));
  }
  throw RolloutAbort("no_answer", "no terminal action within " +
                                      std::to_string(config_.policy.step_budget) + " steps");
}

Turn RolloutEngine::run_first_turn(const TaskItem& task) const {
  auto turn = run_react_turn(
      1, "", [&](const std::string& progress) { return render_reasoning_prompt(task, progress); },
      config_.policy.eval_temperature, derive_seed(config_.policy.seed, "turn1|" + task.id));
  turn.normalized_answer = normalize_answer(*turn.extracted_answer, task.answer_kind);
  return turn;
}

namespace {

ReflectionRecord reflect_with(const std::string& reply, std::string instruction_id,
                              double temperature, std::uint64_t seed, int j) {
  auto text = trim(reply);
  if (text.empty()) throw RolloutAbort("empty_reflection", "blank completion");
  return ReflectionRecord{std::move(instruction_id), std::move(text), {temperature, seed, j},
                          ReflectionSource::self};
}

}  // namespace

ReflectionRecord RolloutEngine::generate_reflection(const TaskItem& task, const Turn& failed,
                                                    const InstructionSpec* spec,
                                                    int sample_index) const {
  if (failed.feedback.is_correct()) {
    throw Error(ErrorCode::reflect_on_correct,
                "task '" + task.id + "': reflection requested for a Correct answer");
  }
  if (sample_index < 1 || sample_index > config_.policy.k) {
    throw Error(ErrorCode::out_of_range, "sample index " + std::to_string(sample_index) +
                                             " outside 1.." + std::to_string(config_.policy.k));
  }
  const std::string instruction_id = spec ? spec->id : std::string(kPlainInstructionId);
  const auto prompt = spec ? pool_.render_reflection_prompt(
                                 *spec, task.question, render_failed_attempt(failed.scratchpad))
                           : render_plain_reflection_prompt(task, failed.scratchpad);
  const double temperature = config_.policy.sample_temperature;
  const auto seed =
      derive_seed(config_.policy.seed, "reflect|" + task.id + "|" + instruction_id + "|" +
                                           std::to_string(sample_index) + "|t" +
                                           std::to_string(failed.index));
  return reflect_with(complete_text(prompt, temperature, seed), instruction_id, temperature, seed,
                      sample_index);
}

Turn RolloutEngine::run_correction_turn(const TaskItem& task, const Turn& previous,
                                        const ReflectionRecord& reflection) const {
  if (previous.feedback.is_correct()) {
    throw Error(ErrorCode::reflect_on_correct,
                "task '" + task.id + "': correction requested after a Correct answer");
  }
  const auto history = render_failed_attempt(previous.scratchpad);
  auto turn = run_react_turn(
      previous.index + 1, history,
      [&](const std::string& progress) {
        return render_correction_prompt(task, reflection.text, progress);
      },
      reflection.sampling.temperature, derive_seed(reflection.sampling.seed, "correct"));
  turn.normalized_answer = normalize_answer(*turn.extracted_answer, task.answer_kind);
  return turn;
}

std::pair<ReflectionRecord, Turn> RolloutEngine::run_one_stage_reflect_correct(
    const TaskItem& task, const Turn& failed) const {
  if (failed.feedback.is_correct()) {
    throw Error(ErrorCode::reflect_on_correct,
                "task '" + task.id + "': reflection requested for a Correct answer");
  }
  const double temperature = config_.policy.eval_temperature;
  const auto seed = derive_seed(config_.policy.seed,
                                "one_stage|" + task.id + "|t" + std::to_string(failed.index));
  const auto reply =
      complete_text(render_one_stage_prompt(task, failed.scratchpad), temperature, seed);
  const auto terminal = find_terminal_action(reply);
  if (!terminal) throw RolloutAbort("parse", "one-stage reply has no terminal action");

  ReflectionRecord reflection{std::string(kOneStageInstructionId),
                              strip_trailing_action_label(std::string_view(reply).substr(0, terminal->begin)),
                              {temperature, seed, 1},
                              ReflectionSource::self};
  Scratchpad pad;
  pad.add(SegmentKind::action, "Finish[" + terminal->answer + "]");
  Turn turn;
  turn.index = failed.index + 1;
  turn.scratchpad = pad.render();
  turn.extracted_answer = terminal->answer;
  turn.normalized_answer = normalize_answer(terminal->answer, task.answer_kind);
  return {std::move(reflection), std::move(turn)};
}

RolloutTrace RolloutEngine::run_rollout(const TaskItem& task, Verifier& verifier) const {
  RolloutTrace trace;
  trace.task_id = task.id;
  const int max_turns = config_.policy.max_turns;
  try {
    Turn turn = run_first_turn(task);
    for (int t = 1;; ++t) {
      turn.feedback = verifier.verify(task, turn);
      trace.turns.push_back(turn);
      if (turn.feedback.is_correct()) {
        trace.status = TraceStatus::solved_at(t);
        return trace;
      }
      if (t >= max_turns) {
        trace.status = TraceStatus::unsolved();
        return trace;
      }
      const Turn& last = trace.turns.back();
      switch (config_.style) {
        case ReflectionStyle::one_stage: {
          auto [reflection, next] = run_one_stage_reflect_correct(task, last);
          trace.reflections.push_back(std::move(reflection));
          turn = std::move(next);
          break;
        }
        case ReflectionStyle::plain:
        case ReflectionStyle::instruction: {
          const InstructionSpec* spec = config_.style == ReflectionStyle::instruction
                                            ? &pool_.find(config_.instruction_id)
                                            : nullptr;
          const std::string id = spec ? spec->id : std::string(kPlainInstructionId);
          const auto prompt =
              spec ? pool_.render_reflection_prompt(*spec, task.question,
                                                    render_failed_attempt(last.scratchpad))
                   : render_plain_reflection_prompt(task, last.scratchpad);
          const double temperature = config_.policy.eval_temperature;
          const auto seed =
              derive_seed(config_.policy.seed, "eval-reflect|" + task.id + "|t" + std::to_string(t));
          auto reflection = reflect_with(complete_text(prompt, temperature, seed), id, temperature,
                                         seed, 1);
          turn = run_correction_turn(task, last, reflection);
          trace.reflections.push_back(std::move(reflection));
          break;
        }
      }
    }
  } catch (const RolloutAbort& e) {
    trace.status = TraceStatus::aborted(e.reason());
  } catch (const Error& e) {
    if (e.code() != ErrorCode::transport && e.code() != ErrorCode::protocol) throw;
    trace.status = TraceStatus::aborted(std::string(to_string(e.code())));
  }
  return trace;
}

CandidateBatch RolloutEngine::sample_candidates(const TaskItem& task, const Turn& failed,
                                                const std::vector<InstructionSpec>& specs,
                                                Verifier& verifier) const {
  if (!failed.feedback.is_incorrect()) {
    throw Error(ErrorCode::reflect_on_correct,
                "task '" + task.id + "': candidates are only sampled for Incorrect first turns");
  }
  CandidateBatch batch;
  for (const auto& spec : specs) {
    for (int j = 1; j <= config_.policy.k; ++j) {
      std::string stage = "reflection";
      try {
        auto reflection = generate_reflection(task, failed, &spec, j);
        stage = "correction";
        Turn corrected = run_correction_turn(task, failed, reflection);
        corrected.feedback = verifier.verify(task, corrected);

        CandidateSample s;
        s.task_id = task.id;
        s.source_dataset = task.source_dataset;
        s.task_category = task.task_category;
        s.question = task.question;
        s.gold_answer = task.gold_answer;
        s.answer_kind = task.answer_kind;
        s.first_scratchpad = failed.scratchpad;
        s.first_answer = failed.extracted_answer.value_or("");
        s.first_feedback = failed.feedback;
        s.reflection = std::move(reflection);
        s.corrected_scratchpad = corrected.scratchpad;
        s.corrected_answer = *corrected.extracted_answer;
        s.corrected_answer_normalized = corrected.normalized_answer.value_or("");
        s.outcome = corrected.feedback.is_correct() ? Outcome::correct : Outcome::incorrect;
        batch.samples.push_back(std::move(s));
      } catch (const RolloutAbort& e) {
        batch.aborts.push_back(make_abort(task, spec.id, j, stage, e.reason()));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::transport && e.code() != ErrorCode::protocol) throw;
        batch.aborts.push_back(make_abort(task, spec.id, j, stage, std::string(to_string(e.code()))));
      }
    }
  }
  return batch;
}

// ---------------------------------------------------------------------------

std::size_t GenerationResult::expected_candidates(const GenerationPolicy& policy) const {
  return failed_tasks * static_cast<std::size_t>(policy.m) * static_cast<std::size_t>(policy.k);
}

GenerationResult generate_pool(const std::vector<TaskItem>& all_tasks, const RolloutEngine& engine,
                               const InstructionPool& pool, Verifier& verifier,
                               std::size_t workers) {
  const auto& policy = engine.config().policy;

  // Dataset caps apply in input order.
  std::vector<TaskItem> tasks;
  std::map<std::string, std::size_t> taken;
  for (const auto& t : all_tasks) {
    const auto cap = policy.per_dataset_caps.find(t.source_dataset);
    if (cap != policy.per_dataset_caps.end() && taken[t.source_dataset] >= cap->second) continue;
    ++taken[t.source_dataset];
    tasks.push_back(t);
  }
  std::sort(tasks.begin(), tasks.end(), [](const auto& a, const auto& b) { return a.id < b.id; });

  GenerationResult result;
  std::map<std::string, std::vector<InstructionSpec>> per_dataset;
  if (policy.selection == SelectionMode::per_dataset) {
    for (const auto& t : tasks) {
      if (per_dataset.count(t.source_dataset)) continue;
      auto specs = pool.select(policy.m, derive_seed(policy.seed, "select|" + t.source_dataset));
      auto& ids = result.selected_instructions[t.source_dataset];
      for (const auto& s : specs) ids.push_back(s.id);
      per_dataset.emplace(t.source_dataset, std::move(specs));
    }
  }

  struct PerTask {
    RolloutTrace first;
    CandidateBatch batch;
    bool failed = false;
    std::vector<std::string> selected;
  };
  std::vector<PerTask> out(tasks.size());

  parallel_for(tasks.size(), workers, [&](std::size_t i) {
    const auto& task = tasks[i];
    auto& slot = out[i];
    slot.first.task_id = task.id;
    Turn first;
    try {
      first = engine.run_first_turn(task);
    } catch (const RolloutAbort& e) {
      slot.first.status = TraceStatus::aborted(e.reason());
      return;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::transport && e.code() != ErrorCode::protocol) throw;
      slot.first.status = TraceStatus::aborted(std::string(to_string(e.code())));
      return;
    }
    first.feedback = verifier.verify(task, first);
    slot.first.turns.push_back(first);
    if (first.feedback.is_correct()) {
      slot.first.status = TraceStatus::solved_at(1);
      return;
    }
    slot.first.status = TraceStatus::unsolved();
    if (!first.feedback.is_incorrect()) return;  // Unverified answers are not reflected on
    slot.failed = true;

    std::vector<InstructionSpec> specs;
    if (policy.selection == SelectionMode::per_dataset) {
      specs = per_dataset.at(task.source_dataset);
    } else {
      specs = pool.select(policy.m, derive_seed(policy.seed, "select|" + task.id));
      for (const auto& s : specs) slot.selected.push_back(s.id);
    }
    slot.batch = engine.sample_candidates(task, first, specs, verifier);
  });

  for (std::size_t i = 0; i < tasks.size(); ++i) {
    auto& slot = out[i];
    if (slot.first.status.kind == TraceStatus::Kind::aborted) {
      ++result.first_turn_aborts;
      result.aborts.push_back(
          AbortRecord{tasks[i].id, "", 0, "first_turn", slot.first.status.abort_reason});
    }
    if (slot.failed) ++result.failed_tasks;
    if (!slot.selected.empty()) result.selected_instructions[tasks[i].id] = slot.selected;
    result.first_turns.push_back(std::move(slot.first));
    for (auto& s : slot.batch.samples) result.samples.push_back(std::move(s));
    for (auto& a : slot.batch.aborts) result.aborts.push_back(std::move(a));
  }

  const auto sample_key = [](const CandidateSample& s) {
    return std::tie(s.task_id, s.reflection.instruction_id, s.reflection.sampling.sample_index);
  };
  std::stable_sort(result.samples.begin(), result.samples.end(),
                   [&](const auto& a, const auto& b) { return sample_key(a) < sample_key(b); });
  std::stable_sort(result.aborts.begin(), result.aborts.end(), [](const auto& a, const auto& b) {
    return std::tie(a.task_id, a.instruction_id, a.sample_index) <
           std::tie(b.task_id, b.instruction_id, b.sample_index);
  });
  return result;
}

}  // namespace reflectevo
