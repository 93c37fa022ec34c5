// SPDX-License-Identifier: Apache-2.0
//
// Shared fixtures for the unit and acceptance tests.
#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <random>
#include <string>

#include "reflectevo/gateway.hpp"
#include "reflectevo/model.hpp"
#include "reflectevo/prompts.hpp"

namespace reflectevo::testing {

inline const PromptLibrary& prompts() {
  static const PromptLibrary lib = PromptLibrary::load(REFLECTEVO_TEST_PROMPT_DIR);
  return lib;
}

inline std::filesystem::path data_dir() { return REFLECTEVO_TEST_DATA_DIR; }

class TempDir {
public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("reflectevo-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
  std::filesystem::path path_;
};

inline TaskItem make_task(std::string id, std::string question, std::string gold,
                          AnswerKind kind = AnswerKind::multiple_choice,
                          std::string dataset = "logiqa",
                          std::string category = "logical_reasoning") {
  TaskItem t;
  t.id = std::move(id);
  t.source_dataset = std::move(dataset);
  t.task_category = std::move(category);
  t.question = std::move(question);
  t.gold_answer = std::move(gold);
  t.answer_kind = kind;
  return t;
}

inline GatewayOptions fast_options(std::size_t max_in_flight = 4) {
  GatewayOptions o;
  o.backoff_base = std::chrono::milliseconds(0);
  o.max_in_flight = max_in_flight;
  return o;
}

inline std::shared_ptr<Gateway> callback_gateway(CallbackBackend::Fn fn,
                                                 std::size_t max_in_flight = 4) {
  return std::make_shared<Gateway>(std::make_shared<CallbackBackend>(std::move(fn)),
                                   fast_options(max_in_flight));
}

// Which prompt a request carries, by a phrase unique to each template.
enum class PromptKind { first_turn, correction, instruction_reflection, plain_reflection,
                        one_stage, judge, tagging, self_judgment, other };

inline PromptKind classify(const std::string& prompt) {
  auto has = [&](const char* s) { return prompt.find(s) != std::string::npos; };
  if (has("Student A's reflection")) return PromptKind::judge;
  if (has("# Error Taxonomy")) return PromptKind::tagging;
  if (has("Respond with exactly one word")) return PromptKind::self_judgment;
  if (has("Based on your self-reflection")) return PromptKind::one_stage;
  if (has("# Stage 1: Verify the failed solution")) return PromptKind::instruction_reflection;
  if (has("diagnose a possible reason for failure")) return PromptKind::plain_reflection;
  if (has("Below is your previous reflection")) return PromptKind::correction;
  if (has("Please complete the current step.")) return PromptKind::first_turn;
  return PromptKind::other;
}

inline std::string prompt_of(const CompletionRequest& r) { return r.joined_content(); }

/// "You are solving the following question: <q>" -> q's first line.
inline std::string question_of(const std::string& prompt) {
  static const std::string marker = "You are solving the following question: ";
  auto pos = prompt.find(marker);
  if (pos == std::string::npos) {
    static const std::string alt = "Question: ";
    pos = prompt.find(alt);
    if (pos == std::string::npos) return {};
    pos += alt.size();
  } else {
    pos += marker.size();
  }
  return prompt.substr(pos, prompt.find('\n', pos) - pos);
}

inline std::string finish(const std::string& answer) {
  return "Thought: answering.\nAction: Finish[" + answer + "]";
}

inline CandidateSample make_sample(std::string task_id, std::string instruction_id, int j,
                                   bool correct, std::string reflection,
                                   std::string first_answer = "A") {
  CandidateSample s;
  s.task_id = std::move(task_id);
  s.source_dataset = "logiqa";
  s.task_category = "logical_reasoning";
  s.question = "Question for " + s.task_id;
  s.gold_answer = "B";
  s.answer_kind = AnswerKind::multiple_choice;
  s.first_scratchpad = "Thought: guess.\nAction: Finish[" + first_answer + "]";
  s.first_answer = std::move(first_answer);
  s.first_feedback = Feedback{FeedbackValue::incorrect, VerifierKind::oracle, {}};
  s.reflection = ReflectionRecord{std::move(instruction_id), std::move(reflection),
                                  SamplingInfo{0.7, 1, j}, ReflectionSource::self};
  s.corrected_answer = correct ? "B" : "C";
  s.corrected_answer_normalized = correct ? "b" : "c";
  s.corrected_scratchpad = "Thought: retry.\nAction: Finish[" + s.corrected_answer + "]";
  s.outcome = correct ? Outcome::correct : Outcome::incorrect;
  return s;
}

}  // namespace reflectevo::testing
