// SPDX-License-Identifier: Apache-2.0
//
// Raw candidate pool D -> D+ (correct corrections), D± (correct vs incorrect
// pairs for the same failed context) and Dpref (judge-ranked pairs of two
// correct reflections).
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "reflectevo/model.hpp"

namespace reflectevo {

class Gateway;
class PromptLibrary;

enum class PairingMode { cross_product, one_per_question, capped_cross };

std::string_view to_string(PairingMode m);
PairingMode parse_pairing_mode(std::string_view s);

struct PairingPolicy {
  PairingMode mode = PairingMode::capped_cross;
  std::size_t cap = 8;
  std::uint64_t seed = 0;
  /// Ask the judge twice with positions swapped and keep only agreements.
  bool debias = true;

  void validate() const;
};

/// Members of `pool` with outcome == correct, ordered by (task_id, instruction_id, j).
std::vector<CandidateSample> build_d_plus(const std::vector<CandidateSample>& pool);

/// Correct/incorrect pairs per (task_id, first_answer) group. Pairs whose two
/// reflections are the same text are skipped.
std::vector<PreferencePair> build_d_pm(const std::vector<CandidateSample>& pool,
                                       const PairingPolicy& policy);

// ---------------------------------------------------------------------------
// Judge
// ---------------------------------------------------------------------------

enum class JudgeVerdict { a, b, tie };

struct JudgeDecision {
  JudgeVerdict verdict = JudgeVerdict::tie;
  JudgeVotes votes;
  std::string tie_reason;  // "disagree", "unparsable", "error" when verdict == tie
};

/// "A" / "B" from a judge reply, by a case-insensitive token scan for
/// "Student A" and "Student B". A bare "A" or "B" also counts. Nullopt when
/// neither or both appear.
std::optional<char> parse_judge_reply(std::string_view reply);

class PreferenceJudge {
public:
  PreferenceJudge(std::shared_ptr<Gateway> gateway, const PromptLibrary& prompts,
                  std::string model);

  /// Which of two reflections on the same failed attempt is better. Gateway
  /// errors become Tie("error"); they never propagate.
  JudgeDecision judge(std::string_view question, std::string_view gold,
                      std::string_view first_scratchpad, std::string_view reflection_a,
                      std::string_view reflection_b, bool debias) const;

  std::string render_prompt(std::string_view question, std::string_view gold,
                            std::string_view first_scratchpad, std::string_view student_a,
                            std::string_view student_b) const;

private:
  std::string ask(const std::string& prompt) const;

  std::shared_ptr<Gateway> gateway_;
  const PromptLibrary& prompts_;
  std::string model_;
};

struct DPrefResult {
  std::vector<PreferencePair> pairs;
  std::size_t candidate_pairs = 0;  // pairs sent to the judge
  std::size_t ties = 0;
};

/// Judge-ranked pairs drawn from groups of >= 2 correct samples. Ties are dropped.
DPrefResult build_d_pref(const std::vector<CandidateSample>& d_plus, const PairingPolicy& policy,
                         const PreferenceJudge& judge, std::size_t workers = 1);

// ---------------------------------------------------------------------------

PairContext context_of(const CandidateSample& s);
PairMember member_of(const CandidateSample& s);

/// Record-by-record soundness checks over curated outputs; empty when all hold.
std::vector<std::string> check_curation(const std::vector<CandidateSample>& pool,
                                        const std::vector<CandidateSample>& d_plus,
                                        const std::vector<PreferencePair>& d_pm,
                                        const std::vector<PreferencePair>& d_pref);

}  // namespace reflectevo
