// SPDX-License-Identifier: Apache-2.0
#include "reflectevo/curation.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <tuple>

#include <spdlog/spdlog.h>

#include "reflectevo/error.hpp"
#include "reflectevo/gateway.hpp"
#include "reflectevo/prompts.hpp"

namespace reflectevo {

namespace {

using GroupKey = std::pair<std::string, std::string>;  // (task_id, first_answer)

bool sample_less(const CandidateSample& a, const CandidateSample& b) {
  return std::tie(a.task_id, a.reflection.instruction_id, a.reflection.sampling.sample_index) <
         std::tie(b.task_id, b.reflection.instruction_id, b.reflection.sampling.sample_index);
}

std::map<GroupKey, std::vector<const CandidateSample*>> group_by_context(
    const std::vector<CandidateSample>& pool) {
  std::vector<const CandidateSample*> sorted;
  sorted.reserve(pool.size());
  for (const auto& s : pool) sorted.push_back(&s);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto* a, const auto* b) { return sample_less(*a, *b); });
  std::map<GroupKey, std::vector<const CandidateSample*>> groups;
  for (const auto* s : sorted) groups[{s->task_id, s->first_answer}].push_back(s);
  return groups;
}

/// Which of `total` candidate pairs (indexed in enumeration order) to keep.
std::vector<std::size_t> pick_pairs(std::size_t total, const PairingPolicy& policy,
                                    std::uint64_t group_seed) {
  std::vector<std::size_t> keep;
  if (total == 0) return keep;
  switch (policy.mode) {
    case PairingMode::cross_product:
      keep.resize(total);
      for (std::size_t i = 0; i < total; ++i) keep[i] = i;
      return keep;
    case PairingMode::one_per_question: {
      SeededRng rng(group_seed);
      keep.push_back(static_cast<std::size_t>(rng.below(total)));
      return keep;
    }
    case PairingMode::capped_cross: {
      if (total <= policy.cap) return pick_pairs(total, {PairingMode::cross_product}, group_seed);
      SeededRng rng(group_seed);
      keep = rng.sample_indices(total, policy.cap);
      std::sort(keep.begin(), keep.end());
      return keep;
    }
  }
  return keep;
}

std::string key_tag(const GroupKey& key) { return key.first + "\x1f" + key.second; }

}  // namespace

std::string_view to_string(PairingMode m) {
  switch (m) {
    case PairingMode::cross_product: return "cross_product";
    case PairingMode::one_per_question: return "one_per_question";
    case PairingMode::capped_cross: return "capped_cross";
  }
  return "capped_cross";
}

PairingMode parse_pairing_mode(std::string_view s) {
  if (s == "cross_product") return PairingMode::cross_product;
  if (s == "one_per_question") return PairingMode::one_per_question;
  if (s == "capped_cross") return PairingMode::capped_cross;
  throw Error(ErrorCode::config, "unknown pairing mode '" + std::string(s) +
                                     "' (expected cross_product, one_per_question or capped_cross)");
}

void PairingPolicy::validate() const {
  if (mode == PairingMode::capped_cross && cap < 1) {
    throw Error(ErrorCode::config, "capped_cross pairing needs cap >= 1");
  }
}

PairContext context_of(const CandidateSample& s) {
  return PairContext{s.task_id,     s.source_dataset,   s.task_category,
                     s.question,    s.gold_answer,      s.first_scratchpad,
                     s.first_answer, s.first_feedback};
}

PairMember member_of(const CandidateSample& s) {
  return PairMember{s.reflection, s.corrected_scratchpad, s.corrected_answer, s.outcome};
}

std::vector<CandidateSample> build_d_plus(const std::vector<CandidateSample>& pool) {
  std::vector<CandidateSample> out;
  std::copy_if(pool.begin(), pool.end(), std::back_inserter(out),
               [](const auto& s) { return s.outcome == Outcome::correct; });
  std::stable_sort(out.begin(), out.end(), sample_less);
  if (out.empty() && !pool.empty()) {
    spdlog::warn("no correct corrections among {} candidates; D+ is empty", pool.size());
  }
  return out;
}

std::vector<PreferencePair> build_d_pm(const std::vector<CandidateSample>& pool,
                                       const PairingPolicy& policy) {
  policy.validate();
  std::vector<PreferencePair> out;
  for (const auto& [key, members] : group_by_context(pool)) {
    std::vector<const CandidateSample*> positives, negatives;
    for (const auto* s : members) {
      (s->outcome == Outcome::correct ? positives : negatives).push_back(s);
    }
    // Pairs whose reflections are the same text carry no signal for a
    // reflection-only preference objective.
    std::vector<std::pair<const CandidateSample*, const CandidateSample*>> all;
    for (const auto* pos : positives) {
      for (const auto* neg : negatives) {
        if (pos->reflection.text != neg->reflection.text) all.emplace_back(pos, neg);
      }
    }
    const auto keep = pick_pairs(all.size(), policy, derive_seed(policy.seed, "pm|" + key_tag(key)));
    for (const auto idx : keep) {
      const auto [pos, neg] = all[idx];
      out.push_back(PreferencePair{context_of(*pos), member_of(*pos), member_of(*neg),
                                   PairKind::outcome_pm, std::nullopt});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

/// `word` in `text` with no letter or digit right after it.
bool has_token(std::string_view text, std::string_view word) {
  for (auto pos = text.find(word); pos != std::string_view::npos; pos = text.find(word, pos + 1)) {
    const auto end = pos + word.size();
    if (end == text.size() || !std::isalnum(static_cast<unsigned char>(text[end]))) return true;
  }
  return false;
}

}  // namespace

std::optional<char> parse_judge_reply(std::string_view reply) {
  const auto lower = to_lower(reply);
  const bool a = has_token(lower, "student a");
  const bool b = has_token(lower, "student b");
  if (a != b) return a ? 'A' : 'B';
  if (!a && !b) {
    auto t = trim(lower);
    if (!t.empty() && t.back() == '.') t.pop_back();
    if (t == "a") return 'A';
    if (t == "b") return 'B';
  }
  return std::nullopt;
}

PreferenceJudge::PreferenceJudge(std::shared_ptr<Gateway> gateway, const PromptLibrary& prompts,
                                 std::string model)
    : gateway_(std::move(gateway)), prompts_(prompts), model_(std::move(model)) {
  if (!gateway_) throw Error(ErrorCode::config, "judge needs a gateway");
}

std::string PreferenceJudge::render_prompt(std::string_view question, std::string_view gold,
                                           std::string_view first_scratchpad,
                                           std::string_view student_a,
                                           std::string_view student_b) const {
  return prompts_.judge().render({{"Question", std::string(question)},
                                  {"Answer", std::string(gold)},
                                  {"Scratchpad", std::string(first_scratchpad)},
                                  {"Reflections 1", std::string(student_a)},
                                  {"Reflections 2", std::string(student_b)}});
}

std::string PreferenceJudge::ask(const std::string& prompt) const {
  auto request = CompletionRequest::user(prompt);
  request.model = model_;
  request.max_new_tokens = 8;
  return gateway_->complete(request).text;
}

JudgeDecision PreferenceJudge::judge(std::string_view question, std::string_view gold,
                                     std::string_view first_scratchpad,
                                     std::string_view reflection_a, std::string_view reflection_b,
                                     bool debias) const {
  if (reflection_a == reflection_b) {
    throw Error(ErrorCode::invalid_argument, "judge needs two different reflections");
  }
  JudgeDecision d;
  d.votes.debiased = debias;

  // Returns the winner in terms of reflection_a/reflection_b.
  auto pass = [&](bool swapped, std::string& vote) -> std::optional<char> {
    const auto prompt = swapped ? render_prompt(question, gold, first_scratchpad, reflection_b, reflection_a)
                                : render_prompt(question, gold, first_scratchpad, reflection_a, reflection_b);
    try {
      const auto letter = parse_judge_reply(ask(prompt));
      if (!letter) {
        vote = "unparsable";
        return std::nullopt;
      }
      vote = std::string(1, *letter);
      if (!swapped) return letter;
      return *letter == 'A' ? 'B' : 'A';
    } catch (const Error&) {
      vote = "error";
      return std::nullopt;
    }
  };

  const auto first = pass(false, d.votes.first_pass);
  std::optional<char> second;
  if (debias) {
    std::string vote;
    second = pass(true, vote);
    d.votes.second_pass = vote;
  }

  const bool any_error = d.votes.first_pass == "error" || d.votes.second_pass == "error";
  if (!debias) {
    if (first) {
      d.verdict = *first == 'A' ? JudgeVerdict::a : JudgeVerdict::b;
    } else {
      d.tie_reason = any_error ? "error" : "unparsable";
    }
    return d;
  }
  if (first && second && *first == *second) {
    d.verdict = *first == 'A' ? JudgeVerdict::a : JudgeVerdict::b;
  } else if (any_error) {
    d.tie_reason = "error";
  } else if (!first && !second) {
    d.tie_reason = "unparsable";
  } else {
    d.tie_reason = "disagree";
  }
  return d;
}

DPrefResult build_d_pref(const std::vector<CandidateSample>& d_plus, const PairingPolicy& policy,
                         const PreferenceJudge& judge, std::size_t workers) {
  policy.validate();
  struct Candidate {
    const CandidateSample* a;
    const CandidateSample* b;
  };
  std::vector<Candidate> candidates;
  for (const auto& [key, members] : group_by_context(d_plus)) {
    std::vector<Candidate> all;
    for (std::size_t i = 0; i < members.size(); ++i) {
      if (members[i]->outcome != Outcome::correct) continue;
      for (std::size_t j = i + 1; j < members.size(); ++j) {
        if (members[j]->outcome != Outcome::correct) continue;
        if (members[i]->reflection.text == members[j]->reflection.text) continue;
        all.push_back({members[i], members[j]});
      }
    }
    for (const auto idx : pick_pairs(all.size(), policy, derive_seed(policy.seed, "pref|" + key_tag(key)))) {
      candidates.push_back(all[idx]);
    }
  }

  std::vector<JudgeDecision> decisions(candidates.size());
  parallel_for(candidates.size(), workers, [&](std::size_t i) {
    const auto& c = candidates[i];
    decisions[i] = judge.judge(c.a->question, c.a->gold_answer, c.a->first_scratchpad,
                               c.a->reflection.text, c.b->reflection.text, policy.debias);
  });

  DPrefResult result;
  result.candidate_pairs = candidates.size();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& d = decisions[i];
    if (d.verdict == JudgeVerdict::tie) {
      ++result.ties;
      continue;
    }
    const auto* chosen = d.verdict == JudgeVerdict::a ? candidates[i].a : candidates[i].b;
    const auto* rejected = d.verdict == JudgeVerdict::a ? candidates[i].b : candidates[i].a;
    result.pairs.push_back(PreferencePair{context_of(*chosen), member_of(*chosen),
                                          member_of(*rejected), PairKind::judged_pref, d.votes});
  }
  return result;
}

// ---------------------------------------------------------------------------

std::vector<std::string> check_curation(const std::vector<CandidateSample>& pool,
                                        const std::vector<CandidateSample>& d_plus,
                                        const std::vector<PreferencePair>& d_pm,
                                        const std::vector<PreferencePair>& d_pref) {
  std::vector<std::string> out;
  const auto sample_id = [](const std::string& task, const ReflectionRecord& r) {
    return task + "|" + r.instruction_id + "|" + std::to_string(r.sampling.sample_index) + "|" +
           r.text;
  };
  std::set<std::string> pool_ids, plus_ids;
  std::set<std::pair<std::string, std::string>> contexts;
  for (const auto& s : pool) {
    pool_ids.insert(sample_id(s.task_id, s.reflection));
    contexts.insert({s.task_id, s.first_answer});
  }
  for (const auto& s : d_plus) {
    plus_ids.insert(sample_id(s.task_id, s.reflection));
    if (s.outcome != Outcome::correct) out.push_back("D+ record with outcome incorrect: " + s.task_id);
    if (!s.first_feedback.is_incorrect()) out.push_back("D+ record whose first feedback is not Incorrect: " + s.task_id);
    if (!pool_ids.count(sample_id(s.task_id, s.reflection))) out.push_back("D+ record not in pool: " + s.task_id);
  }
  for (const auto& p : d_pm) {
    if (p.kind != PairKind::outcome_pm) out.push_back("D± pair with wrong kind");
    if (p.chosen.outcome != Outcome::correct || p.rejected.outcome != Outcome::incorrect) {
      out.push_back("D± pair without (correct, incorrect) outcomes: " + p.context.task_id);
    }
    if (!contexts.count({p.context.task_id, p.context.first_answer})) {
      out.push_back("D± pair context not in pool: " + p.context.task_id);
    }
    if (p.chosen.reflection.text == p.rejected.reflection.text) {
      out.push_back("D± pair with identical reflections: " + p.context.task_id);
    }
  }
  for (const auto& p : d_pref) {
    if (p.kind != PairKind::judged_pref) out.push_back("Dpref pair with wrong kind");
    for (const auto* m : {&p.chosen, &p.rejected}) {
      if (!plus_ids.count(sample_id(p.context.task_id, m->reflection))) {
        out.push_back("Dpref member not in D+: " + p.context.task_id);
      }
      if (m->outcome != Outcome::correct) out.push_back("Dpref member with incorrect outcome");
    }
    if (p.chosen.reflection.text == p.rejected.reflection.text) {
      out.push_back("Dpref pair with identical reflections: " + p.context.task_id);
    }
  }
  return out;
}

}  // namespace reflectevo
