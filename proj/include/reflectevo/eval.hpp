// SPDX-License-Identifier: Apache-2.0
//
// Evaluation: accuracy by turn, error-type tagging, and reflection/thought
// similarity against correctness.
#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "reflectevo/model.hpp"

namespace reflectevo {

class Gateway;
class Embedder;
class PromptLibrary;
class RolloutEngine;
class Verifier;

/// One evaluated task. correct_at[t-1] says whether the answer standing after
/// turn t is correct under the scoring verifier.
struct ItemResult {
  std::string task_id;
  std::string source_dataset;
  std::vector<bool> correct_at;
  bool aborted = false;
  std::string abort_reason;

  friend bool operator==(const ItemResult&, const ItemResult&) = default;
};

struct EvalReport {
  int turns = 0;
  std::vector<ItemResult> items;  // sorted by task id
  std::vector<double> accuracy;   // fraction in [0,1], one per turn
  std::vector<std::string> aborted;

  double acc(int t) const;  // 1-based
  double delta(int t1, int t2) const { return acc(t2) - acc(t1); }
};

/// Acc@t = (1/N) * sum over items of correct_at[t-1]. Aborted items count as
/// incorrect at every turn.
std::vector<double> accuracy_by_turn(const std::vector<ItemResult>& items, int turns);

EvalReport make_report(std::vector<ItemResult> items, int turns);

/// Items from "first solved at turn s" values (nullopt = never solved).
EvalReport report_from_solved_turns(const std::vector<std::optional<int>>& solved, int turns);

/// Scores a trace. With `truth == nullptr` the turn feedback is trusted;
/// otherwise each turn's answer is re-judged by `truth` (verifier ablation:
/// the rollout stops on its own verifier, the score comes from the oracle).
ItemResult score_trace(const TaskItem& task, const RolloutTrace& trace, int turns,
                       Verifier* truth = nullptr);

struct EvalRun {
  EvalReport report;
  std::vector<RolloutTrace> traces;  // by task id
};

/// Runs a rollout per task with `verifier` deciding when to stop. T comes from
/// the engine's policy.
EvalRun evaluate(const std::vector<TaskItem>& tasks, const RolloutEngine& engine,
                 Verifier& verifier, Verifier* truth = nullptr, std::size_t workers = 1);

/// "30.2% / 43.8% / +13.6%" for Acc@t1 / Acc@t2 / delta.
std::string format_summary(const EvalReport& report, int t1 = 1, int t2 = 2);
std::string format_percent(double fraction, bool sign = false);

json report_to_json(const EvalReport& report);
void from_json(const json& j, ItemResult& v);
std::string report_to_table(const EvalReport& report);
/// "turn,accuracy" rows.
std::string curve_to_csv(const EvalReport& report);

// ---------------------------------------------------------------------------
// Error taxonomy
// ---------------------------------------------------------------------------

struct ErrorType {
  std::string_view code;
  std::string_view coarse;
  std::string_view fine;
};

extern const std::array<ErrorType, 9> kErrorTaxonomy;

const ErrorType* find_error_type(std::string_view code);

/// Codes from a tagging reply. Looks at the "Labels:" line, or the first
/// bracketed list when there is none. Nullopt if the list is missing, empty,
/// or holds anything outside the taxonomy.
std::optional<std::vector<std::string>> parse_error_labels(std::string_view reply);

struct ErrorTag {
  std::string task_id;
  std::vector<std::string> labels;  // empty when unlabeled
  bool unlabeled = false;
  int attempts = 0;

  friend bool operator==(const ErrorTag&, const ErrorTag&) = default;
};

void to_json(json& j, const ErrorTag& v);
void from_json(const json& j, ErrorTag& v);

class ErrorTagger {
public:
  ErrorTagger(std::shared_ptr<Gateway> gateway, const PromptLibrary& prompts, std::string model);

  /// One retry on an unparsable or off-taxonomy reply, then Unlabeled.
  /// Gateway failures also end as Unlabeled.
  ErrorTag tag(std::string_view task_id, std::string_view question, std::string_view thought,
               std::string_view reflection) const;

private:
  std::shared_ptr<Gateway> gateway_;
  const PromptLibrary& prompts_;
  std::string model_;
};

/// Label counts keyed by code, plus "unlabeled".
json tag_histogram(const std::vector<ErrorTag>& tags);

// ---------------------------------------------------------------------------
// Correlation
// ---------------------------------------------------------------------------

/// 0 when either vector has zero norm.
double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

/// Nullopt when either side has zero variance.
std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y);

struct CorrelationItem {
  std::string task_id;
  std::string reflection;
  std::string thought;  // turn-2 scratchpad
  bool correct = false;
};

struct SimilarityBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  std::optional<double> mean_accuracy;  // empty bin -> none
};

struct CorrelationResult {
  std::vector<double> similarities;
  std::vector<double> correctness;
  std::optional<double> r;
  std::vector<SimilarityBin> bins;
};

/// Equal-width bins over the observed similarity range; items at the upper
/// edge go into the last bin.
std::vector<SimilarityBin> bin_by_similarity(const std::vector<double>& similarity,
                                             const std::vector<double>& correctness,
                                             std::size_t bins);

CorrelationResult correlate(const std::vector<CorrelationItem>& items, Embedder& embedder,
                            std::size_t bins = 10);

json correlation_to_json(const CorrelationResult& result);

}  // namespace reflectevo
