// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <atomic>
#include <mutex>

#include "reflectevo/error.hpp"
#include "reflectevo/gateway.hpp"
#include "reflectevo/instruction_pool.hpp"
#include "reflectevo/rollout.hpp"
#include "reflectevo/util.hpp"
#include "reflectevo/verify.hpp"
#include "support.hpp"

using namespace reflectevo;
using namespace reflectevo::testing;

namespace {

const InstructionPool& pool() {
  static const InstructionPool p(prompts());
  return p;
}

RolloutConfig config(int m = 2, int k = 2, int turns = 2) {
  RolloutConfig c;
  c.policy.m = m;
  c.policy.k = k;
  c.policy.max_turns = turns;
  c.model = "test-model";
  return c;
}

RolloutEngine engine_with(CallbackBackend::Fn fn, RolloutConfig c = config()) {
  return RolloutEngine(callback_gateway(std::move(fn)), prompts(), pool(), std::move(c));
}

Turn failed_turn(std::string answer = "A") {
  Turn t;
  t.index = 1;
  t.scratchpad = "Thought: guess.\nAction: Finish[" + answer + "]";
  t.extracted_answer = answer;
  t.feedback = Feedback{FeedbackValue::incorrect, VerifierKind::oracle, {}};
  return t;
}

/// Answer inside the last Finish[...] of the prompt's progress block.
std::string last_finish(const std::string& prompt) {
  const auto t = find_terminal_action(prompt);
  return t ? t->answer : "";
}

}  // namespace

TEST(Scratchpad, RenderParseRoundTrip) {
  SeededRng rng(5);
  const std::vector<std::string> words = {"alpha", "x = 3", "[b]", "Finish", "so", "\\frac{1}{2}"};
  for (int round = 0; round < 200; ++round) {
    Scratchpad pad;
    const auto n = rng.below(6) + 1;
    for (std::uint64_t i = 0; i < n; ++i) {
      std::string text;
      const auto len = rng.below(4) + 1;
      for (std::uint64_t w = 0; w < len; ++w) {
        if (w) text += rng.below(5) == 0 ? "\n" : " ";
        text += words[rng.below(words.size())];
      }
      pad.add(static_cast<SegmentKind>(rng.below(3)), text);
    }
    EXPECT_EQ(Scratchpad::parse(pad.render()).segments(), pad.segments()) << pad.render();
  }
}

TEST(TerminalAction, BracketBalancedAndLast) {
  EXPECT_EQ(find_terminal_action("Finish[A] then Finish[B]")->answer, "B");
  EXPECT_EQ(find_terminal_action("Finish[x[1]]")->answer, "x[1]");
  EXPECT_FALSE(find_terminal_action("Finish[open"));
  EXPECT_FALSE(find_terminal_action("no action"));
}

// ---------------------------------------------------------------------------

TEST(FirstTurn, ExtractsFinish) {
  auto e = engine_with([](const CompletionRequest&) { return finish("B"); });
  const auto t = e.run_first_turn(make_task("a", "q", "B"));
  EXPECT_EQ(t.index, 1);
  EXPECT_EQ(t.extracted_answer, "B");
  EXPECT_EQ(t.feedback.value, FeedbackValue::unverified);
  EXPECT_NE(t.scratchpad.find("Action: Finish[B]"), std::string::npos);
}

TEST(FirstTurn, StepBudgetExhaustedIsNoAnswer) {
  std::atomic<int> calls{0};
  auto e = engine_with([&](const CompletionRequest&) {
    ++calls;
    return std::string("Thought: still thinking.\nAction: Search[x]");
  });
  try {
    e.run_first_turn(make_task("a", "q", "B"));
    FAIL();
  } catch (const RolloutAbort& a) {
    EXPECT_EQ(a.reason(), "no_answer");
  }
  EXPECT_EQ(calls.load(), 6);
}

TEST(FirstTurn, MultiStepCarriesProgress) {
  std::vector<std::string> seen;
  auto e = engine_with([&](const CompletionRequest& r) {
    seen.push_back(r.joined_content());
    return seen.size() == 1 ? std::string("Thought: step one.") : finish("B");
  });
  const auto t = e.run_first_turn(make_task("a", "q", "B"));
  ASSERT_EQ(seen.size(), 2u);
  EXPECT_NE(seen[1].find("Thought: step one."), std::string::npos);
  EXPECT_NE(t.scratchpad.find(std::string(kContinueObservation)), std::string::npos);
}

TEST(FirstTurn, LatexAnswerKeptRaw) {
  auto e = engine_with([](const CompletionRequest&) { return finish("\\frac{1}{2}"); });
  const auto task = make_task("m", "q", "0.5", AnswerKind::numeric, "math", "mathematics");
  auto t = e.run_first_turn(task);
  EXPECT_EQ(t.extracted_answer, "\\frac{1}{2}");
  OracleVerifier v;
  EXPECT_TRUE(v.verify(task, t).is_correct());
}

TEST(FirstTurn, ExamplesEndMarkerAppearsOnce) {
  std::vector<std::string> seen;
  std::mutex mu;
  auto e = engine_with([&](const CompletionRequest& r) {
    std::lock_guard lock(mu);
    seen.push_back(r.joined_content());
    switch (classify(r.joined_content())) {
      case PromptKind::plain_reflection:
      case PromptKind::instruction_reflection: return std::string("Check the arithmetic.");
      default: return finish("A");
    }
  });
  auto task = make_task("a", "q", "B");
  task.fewshot = {"Question: x\nThought: y\nAction: Finish[z]", "Question: u\nAction: Finish[v]"};
  OracleVerifier v;
  e.run_rollout(task, v);
  int checked = 0;
  for (const auto& p : seen) {
    const auto kind = classify(p);
    if (kind != PromptKind::first_turn && kind != PromptKind::correction) continue;
    std::size_t count = 0;
    for (auto pos = p.find("(END OF EXAMPLES)"); pos != std::string::npos;
         pos = p.find("(END OF EXAMPLES)", pos + 1)) {
      ++count;
    }
    EXPECT_EQ(count, 1u);
    EXPECT_NE(p.find("Question: u"), std::string::npos);
    ++checked;
  }
  EXPECT_GE(checked, 2);
}

// ---------------------------------------------------------------------------

TEST(Reflection, SampleIndexAndInstruction) {
  auto e = engine_with([](const CompletionRequest&) { return std::string("  I misread it. "); });
  const auto& spec = pool().find("1-2+2-5+3-1");
  const auto task = make_task("a", "q", "B");
  const auto r1 = e.generate_reflection(task, failed_turn(), &spec, 1);
  const auto r2 = e.generate_reflection(task, failed_turn(), &spec, 2);
  EXPECT_EQ(r1.text, "I misread it.");
  EXPECT_EQ(r1.instruction_id, "1-2+2-5+3-1");
  EXPECT_EQ(r1.sampling.sample_index, 1);
  EXPECT_EQ(r2.sampling.sample_index, 2);
  EXPECT_NE(r1.sampling.seed, r2.sampling.seed);
  EXPECT_DOUBLE_EQ(r1.sampling.temperature, 0.7);
  EXPECT_THROW(e.generate_reflection(task, failed_turn(), &spec, 3), Error);
}

TEST(Reflection, PlainPromptWhenNoSpec) {
  std::string seen;
  auto e = engine_with([&](const CompletionRequest& r) {
    seen = r.joined_content();
    return std::string("r");
  });
  const auto r = e.generate_reflection(make_task("a", "q", "B"), failed_turn(), nullptr, 1);
  EXPECT_EQ(r.instruction_id, kPlainInstructionId);
  EXPECT_EQ(classify(seen), PromptKind::plain_reflection);
  EXPECT_NE(seen.find("Observation: Answer is INCORRECT"), std::string::npos);
}

TEST(Reflection, RefusesCorrectTurn) {
  auto e = engine_with([](const CompletionRequest&) { return std::string("r"); });
  auto t = failed_turn("B");
  t.feedback.value = FeedbackValue::correct;
  try {
    e.generate_reflection(make_task("a", "q", "B"), t, nullptr, 1);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::reflect_on_correct);
  }
}

TEST(Reflection, BlankReplyAborts) {
  auto e = engine_with([](const CompletionRequest&) { return std::string(" \n "); });
  try {
    e.generate_reflection(make_task("a", "q", "B"), failed_turn(), nullptr, 1);
    FAIL();
  } catch (const RolloutAbort& a) {
    EXPECT_EQ(a.reason(), "empty_reflection");
  }
}

TEST(Correction, PromptCarriesReflectionAndAttempt) {
  std::string seen;
  auto e = engine_with([&](const CompletionRequest& r) {
    seen = r.joined_content();
    return finish("B");
  });
  const ReflectionRecord refl{"reflexion", "UNIQUE-REFLECTION-TEXT", {0.7, 9, 1},
                              ReflectionSource::self};
  auto prev = failed_turn();
  prev.index = 3;
  const auto t = e.run_correction_turn(make_task("a", "q", "B"), prev, refl);
  EXPECT_EQ(classify(seen), PromptKind::correction);
  EXPECT_NE(seen.find("UNIQUE-REFLECTION-TEXT"), std::string::npos);
  EXPECT_NE(seen.find("(BEGIN)\n" + prev.scratchpad + "\nObservation: Answer is INCORRECT"),
            std::string::npos);
  EXPECT_EQ(t.index, 4);
  EXPECT_EQ(t.extracted_answer, "B");
}

TEST(OneStage, SplitsReflectionAndAnswer) {
  auto e = engine_with([](const CompletionRequest&) {
    return std::string("I confused the options.\nAction: Finish[C]");
  });
  const auto [refl, turn] = e.run_one_stage_reflect_correct(make_task("a", "q", "B"), failed_turn());
  EXPECT_EQ(refl.text, "I confused the options.");
  EXPECT_EQ(refl.instruction_id, kOneStageInstructionId);
  EXPECT_EQ(turn.extracted_answer, "C");
  EXPECT_EQ(turn.index, 2);
}

TEST(OneStage, AnswerOnlyGivesEmptyReflection) {
  auto e = engine_with([](const CompletionRequest&) { return std::string("Finish[C]"); });
  const auto [refl, turn] = e.run_one_stage_reflect_correct(make_task("a", "q", "B"), failed_turn());
  EXPECT_EQ(refl.text, "");
  EXPECT_EQ(turn.extracted_answer, "C");
}

TEST(OneStage, NoTerminalActionIsParseAbort) {
  auto e = engine_with([](const CompletionRequest&) { return std::string("just musing"); });
  try {
    e.run_one_stage_reflect_correct(make_task("a", "q", "B"), failed_turn());
    FAIL();
  } catch (const RolloutAbort& a) {
    EXPECT_EQ(a.reason(), "parse");
  }
}

// ---------------------------------------------------------------------------

namespace {

/// First turn answers 1; each correction answers the previous answer + 1.
std::string counting_model(const CompletionRequest& r) {
  const auto p = r.joined_content();
  switch (classify(p)) {
    case PromptKind::first_turn: return finish("1");
    case PromptKind::correction: return finish(std::to_string(std::stoi(last_finish(p)) + 1));
    case PromptKind::one_stage:
      return "Count higher.\nAction: Finish[" + std::to_string(std::stoi(last_finish(p)) + 1) + "]";
    default: return "Count higher.";
  }
}

TaskItem counting_task(const std::string& gold) {
  return make_task("c", "Count.", gold, AnswerKind::numeric, "math", "mathematics");
}

}  // namespace

TEST(Rollout, SolvedOnFirstTurn) {
  auto e = engine_with(counting_model);
  OracleVerifier v;
  const auto t = e.run_rollout(counting_task("1"), v);
  EXPECT_EQ(t.status, TraceStatus::solved_at(1));
  EXPECT_EQ(t.turns.size(), 1u);
  EXPECT_TRUE(t.reflections.empty());
  EXPECT_TRUE(validate_trace(t).empty());
}

TEST(Rollout, AlwaysWrongStopsAtMaxTurns) {
  auto e = engine_with(counting_model, config(2, 2, 2));
  OracleVerifier v;
  const auto t = e.run_rollout(counting_task("99"), v);
  EXPECT_EQ(t.status, TraceStatus::unsolved());
  EXPECT_EQ(t.turns.size(), 2u);
  EXPECT_EQ(t.reflections.size(), 1u);
  EXPECT_TRUE(validate_trace(t).empty());
}

TEST(Rollout, SolvedAtFourWithSixTurns) {
  for (auto style : {ReflectionStyle::plain, ReflectionStyle::instruction, ReflectionStyle::one_stage}) {
    auto c = config(2, 2, 6);
    c.style = style;
    auto e = engine_with(counting_model, c);
    OracleVerifier v;
    const auto t = e.run_rollout(counting_task("4"), v);
    EXPECT_EQ(t.status, TraceStatus::solved_at(4)) << to_string(style);
    EXPECT_EQ(t.turns.size(), 4u);
    EXPECT_EQ(t.reflections.size(), 3u);
    EXPECT_TRUE(validate_trace(t).empty());
  }
}

TEST(Rollout, TransportFailureAborts) {
  GatewayOptions o = fast_options();
  o.max_retries = 0;
  auto g = std::make_shared<Gateway>(
      std::make_shared<CallbackBackend>([](const CompletionRequest& r) -> std::string {
        if (classify(r.joined_content()) == PromptKind::first_turn) return finish("1");
        throw Error(ErrorCode::transport, "down");
      }),
      o);
  RolloutEngine e(g, prompts(), pool(), config(2, 2, 3));
  OracleVerifier v;
  const auto t = e.run_rollout(counting_task("4"), v);
  EXPECT_EQ(t.status, TraceStatus::aborted("transport"));
  EXPECT_TRUE(validate_trace(t).empty());
}

// ---------------------------------------------------------------------------

namespace {

std::string sampling_model(const CompletionRequest& r) {
  const auto p = r.joined_content();
  switch (classify(p)) {
    case PromptKind::first_turn: return finish("A");
    case PromptKind::correction: return finish((r.seed.value_or(0) % 2) ? "B" : "C");
    default: return "Reflection with seed " + std::to_string(r.seed.value_or(0));
  }
}

}  // namespace

TEST(Sampling, CountsAreMTimesK) {
  const auto task = make_task("a", "q", "B");
  OracleVerifier v;
  for (auto [m, k] : {std::pair{2, 2}, std::pair{5, 2}}) {
    auto e = engine_with(sampling_model, config(m, k));
    const auto specs = pool().select(m, 1);
    const auto batch = e.sample_candidates(task, failed_turn(), specs, v);
    EXPECT_EQ(batch.samples.size(), static_cast<std::size_t>(m * k));
    EXPECT_TRUE(batch.aborts.empty());
    for (const auto& s : batch.samples) {
      EXPECT_TRUE(validate_candidate(s).empty());
      EXPECT_EQ(s.outcome == Outcome::correct, s.corrected_answer == "B");
    }
  }
}

TEST(Sampling, EmptyReflectionBecomesAbort) {
  const auto& specs = pool().enumerate();
  const std::vector<InstructionSpec> two = {specs[0], specs[2]};
  const auto blank_id = specs[2].id;
  auto e = engine_with(
      [&](const CompletionRequest& r) {
        const auto p = r.joined_content();
        // Blank reflection for the second instruction's second sample only.
        if (classify(p) == PromptKind::instruction_reflection &&
            p.find(prompts().stage_variants().at("2-2")) != std::string::npos) {
          static std::atomic<int> seen{0};
          if (seen++ == 1) return std::string("   ");
        }
        return sampling_model(r);
      },
      config(2, 2));
  OracleVerifier v;
  const auto batch = e.sample_candidates(make_task("a", "q", "B"), failed_turn(), two, v);
  EXPECT_EQ(batch.samples.size(), 3u);
  ASSERT_EQ(batch.aborts.size(), 1u);
  EXPECT_EQ(batch.aborts[0].instruction_id, blank_id);
  EXPECT_EQ(batch.aborts[0].reason, "empty_reflection");
  EXPECT_EQ(batch.aborts[0].stage, "reflection");
}

TEST(Sampling, RefusesNonIncorrectFirstTurn) {
  auto e = engine_with(sampling_model);
  auto t = failed_turn();
  t.feedback.value = FeedbackValue::unverified;
  OracleVerifier v;
  EXPECT_THROW(e.sample_candidates(make_task("a", "q", "B"), t, pool().select(2, 0), v), Error);
}

TEST(GeneratePool, CountLawAndOrder) {
  std::vector<TaskItem> tasks;
  for (int i = 9; i >= 0; --i) {
    // Even ids are solved on the first turn.
    tasks.push_back(make_task("t" + std::to_string(i), "q" + std::to_string(i), i % 2 ? "B" : "A"));
  }
  OracleVerifier v;
  auto e = engine_with(sampling_model, config(3, 2));
  const auto res = generate_pool(tasks, e, pool(), v, 4);
  EXPECT_EQ(res.failed_tasks, 5u);
  EXPECT_EQ(res.samples.size() + res.aborts.size(), res.expected_candidates(e.config().policy));
  EXPECT_EQ(res.samples.size(), 30u);
  ASSERT_EQ(res.first_turns.size(), 10u);
  EXPECT_EQ(res.first_turns.front().task_id, "t0");
  EXPECT_TRUE(std::is_sorted(res.samples.begin(), res.samples.end(), [](const auto& a, const auto& b) {
    return std::tie(a.task_id, a.reflection.instruction_id, a.reflection.sampling.sample_index) <
           std::tie(b.task_id, b.reflection.instruction_id, b.reflection.sampling.sample_index);
  }));
  EXPECT_EQ(res.selected_instructions.at("logiqa").size(), 3u);

  // Worker count does not change the result.
  const auto serial = generate_pool(tasks, e, pool(), v, 1);
  EXPECT_EQ(json(serial.samples).dump(), json(res.samples).dump());
}

TEST(GeneratePool, PerDatasetCaps) {
  std::vector<TaskItem> tasks;
  for (int i = 0; i < 6; ++i) tasks.push_back(make_task("t" + std::to_string(i), "q", "B"));
  auto c = config(1, 1);
  c.policy.per_dataset_caps["logiqa"] = 2;
  OracleVerifier v;
  const auto res = generate_pool(tasks, engine_with(sampling_model, c), pool(), v, 2);
  EXPECT_EQ(res.first_turns.size(), 2u);
}
