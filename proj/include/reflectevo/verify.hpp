// SPDX-License-Identifier: Apache-2.0
//
// Binary feedback f for an extracted answer: oracle matching against the
// gold answer, self-judgment by a model, or an external test runner.
#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "reflectevo/model.hpp"

namespace reflectevo {

class Gateway;
class PromptLibrary;

enum class CompareMode { exact, numeric_tolerant, choice_letter, external };

struct MatchRule {
  AnswerKind kind;
  CompareMode mode;
};

MatchRule match_rule_for(AnswerKind kind);

inline constexpr double kNumericTolerance = 1e-6;

/// Exact rational when representable in 64 bits, otherwise a double.
struct ParsedNumber {
  std::int64_t numerator = 0;
  std::int64_t denominator = 1;  // > 0, reduced
  bool exact = true;
  double value = 0.0;
};

/// Parses integers, decimals and fractions ("a/b", "\frac{a}{b}") after
/// stripping $, \boxed{}, \left/\right and thousands separators.
std::optional<ParsedNumber> parse_number(std::string_view text);

/// Canonical form compared by verify_oracle. Applied to both sides.
std::string normalize_answer(std::string_view answer, AnswerKind kind);

/// Correct iff the normalized answer matches the normalized gold under the
/// kind's rule. Pure.
Feedback verify_oracle(std::string_view answer, std::string_view gold, AnswerKind kind);

/// "correct" / "incorrect" keyword rule for self-judgment replies.
std::optional<FeedbackValue> parse_judgment(std::string_view reply);

struct ExternalRunner {
  /// Shell command; every "{file}" is replaced by the path of the answer file.
  std::string command_template;
  std::chrono::milliseconds timeout{10000};
  std::string file_suffix = ".py";
};

/// Correct iff the runner exits with status 0 within the timeout.
/// Timeout -> Incorrect(timeout); runner cannot start -> Unverified(runner_error).
Feedback verify_external(std::string_view code, const ExternalRunner& runner);

// ---------------------------------------------------------------------------

class Verifier {
public:
  virtual ~Verifier() = default;
  /// Judges the answer of `turn`. A turn without an extracted answer is Incorrect.
  virtual Feedback verify(const TaskItem& task, const Turn& turn) = 0;
  virtual VerifierKind kind() const = 0;
};

/// Oracle matching. Code tasks go through `runner` when one is configured.
class OracleVerifier final : public Verifier {
public:
  explicit OracleVerifier(std::optional<ExternalRunner> runner = std::nullopt)
      : runner_(std::move(runner)) {}
  Feedback verify(const TaskItem& task, const Turn& turn) override;
  VerifierKind kind() const override { return VerifierKind::oracle; }

private:
  std::optional<ExternalRunner> runner_;
};

/// Asks a model whether the answer is right, without showing it the gold answer.
class SelfJudgmentVerifier final : public Verifier {
public:
  SelfJudgmentVerifier(std::shared_ptr<Gateway> gateway, const PromptLibrary& prompts,
                       std::string model);
  Feedback verify(const TaskItem& task, const Turn& turn) override;
  VerifierKind kind() const override { return VerifierKind::self_judgment; }

private:
  std::shared_ptr<Gateway> gateway_;
  const PromptLibrary& prompts_;
  std::string model_;
};

Feedback verify_self_judgment(const TaskItem& task, std::string_view scratchpad,
                              std::string_view answer, Gateway& gateway,
                              const PromptLibrary& prompts, const std::string& model);

}  // namespace reflectevo
