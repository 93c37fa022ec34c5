// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <set>

#include "reflectevo/curation.hpp"
#include "reflectevo/error.hpp"
#include "reflectevo/gateway.hpp"
#include "support.hpp"

using namespace reflectevo;
using namespace reflectevo::testing;

namespace {

PairingPolicy policy(PairingMode mode, std::size_t cap = 8) {
  PairingPolicy p;
  p.mode = mode;
  p.cap = cap;
  return p;
}

/// n correct and n_wrong incorrect samples on one failed attempt.
std::vector<CandidateSample> group(const std::string& task, int n_correct, int n_wrong) {
  std::vector<CandidateSample> out;
  int j = 1;
  for (int i = 0; i < n_correct; ++i) {
    // Distinct lengths so a length-preferring judge is never split.
    out.push_back(make_sample(task, "1-1+2-1+3-1", j, true, "good" + std::string(j, '+')));
    ++j;
  }
  for (int i = 0; i < n_wrong; ++i) {
    out.push_back(make_sample(task, "1-1+2-1+3-1", j, false, "bad " + std::to_string(j)));
    ++j;
  }
  return out;
}

std::string between(const std::string& s, const std::string& from, const std::string& to) {
  const auto b = s.find(from);
  if (b == std::string::npos) return {};
  const auto start = b + from.size();
  return s.substr(start, s.find(to, start) - start);
}

/// Prefers the longer reflection regardless of position.
std::string longer_judge(const CompletionRequest& r) {
  const auto p = r.joined_content();
  const auto a = between(p, "Student A's reflection:  ", "\n\nStudent B's reflection:");
  const auto b = between(p, "Student B's reflection:  ", " \n\nStudent A and");
  return a.size() >= b.size() ? "Student A" : "Student B";
}

PreferenceJudge judge_with(CallbackBackend::Fn fn) {
  return PreferenceJudge(callback_gateway(std::move(fn)), prompts(), "judge");
}

}  // namespace

TEST(DPlus, KeepsCorrectInOrder) {
  std::vector<CandidateSample> pool = {
      make_sample("t2", "1-1+2-1+3-1", 1, true, "c"), make_sample("t1", "1-1+2-1+3-1", 2, false, "i"),
      make_sample("t1", "1-1+2-1+3-1", 1, true, "c"), make_sample("t1", "1-1+2-1+3-1", 3, false, "i")};
  const auto d_plus = build_d_plus(pool);
  ASSERT_EQ(d_plus.size(), 2u);
  EXPECT_EQ(d_plus[0].task_id, "t1");
  EXPECT_EQ(d_plus[1].task_id, "t2");
}

TEST(DPlus, AlternatingOutcomes) {
  // [c, i, c, i] -> 2
  std::vector<CandidateSample> pool;
  for (int j = 1; j <= 4; ++j) pool.push_back(make_sample("t", "1-1+2-1+3-1", j, j % 2 == 1, "r"));
  EXPECT_EQ(build_d_plus(pool).size(), 2u);
}

TEST(DPm, CrossProduct) {
  const auto pairs = build_d_pm(group("t", 3, 2), policy(PairingMode::cross_product));
  EXPECT_EQ(pairs.size(), 6u);
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& p : pairs) {
    EXPECT_EQ(p.kind, PairKind::outcome_pm);
    EXPECT_EQ(p.chosen.outcome, Outcome::correct);
    EXPECT_EQ(p.rejected.outcome, Outcome::incorrect);
    seen.insert({p.chosen.reflection.text, p.rejected.reflection.text});
  }
  EXPECT_EQ(seen.size(), 6u);
}

TEST(DPm, CappedCrossIsDeterministic) {
  auto p = policy(PairingMode::capped_cross, 4);
  p.seed = 3;
  const auto a = build_d_pm(group("t", 3, 2), p);
  EXPECT_EQ(a.size(), 4u);
  EXPECT_EQ(a, build_d_pm(group("t", 3, 2), p));
  // Under the cap the whole cross product is kept.
  EXPECT_EQ(build_d_pm(group("t", 2, 2), p).size(), 4u);
}

TEST(DPm, OnePerQuestion) {
  auto pool = group("t1", 3, 2);
  for (auto& s : group("t2", 1, 1)) pool.push_back(s);
  EXPECT_EQ(build_d_pm(pool, policy(PairingMode::one_per_question)).size(), 2u);
}

TEST(DPm, NoCorrectGivesNothing) {
  EXPECT_TRUE(build_d_pm(group("t", 0, 4), policy(PairingMode::cross_product)).empty());
  EXPECT_TRUE(build_d_pm(group("t", 4, 0), policy(PairingMode::cross_product)).empty());
}

TEST(DPm, GroupsByFirstAnswer) {
  // Different failed attempts on one task never pair across.
  std::vector<CandidateSample> pool = {make_sample("t", "1-1+2-1+3-1", 1, true, "x", "A"),
                                       make_sample("t", "1-1+2-1+3-1", 2, false, "y", "C")};
  EXPECT_TRUE(build_d_pm(pool, policy(PairingMode::cross_product)).empty());
}

TEST(DPm, SkipsIdenticalReflections) {
  std::vector<CandidateSample> pool = {make_sample("t", "1-1+2-1+3-1", 1, true, "same"),
                                       make_sample("t", "1-1+2-1+3-1", 2, false, "same"),
                                       make_sample("t", "1-1+2-1+3-1", 3, false, "other")};
  const auto pairs = build_d_pm(pool, policy(PairingMode::cross_product));
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0].rejected.reflection.text, "other");
}

TEST(DPm, RandomPoolsMatchBruteForceCount) {
  SeededRng rng(17);
  for (int round = 0; round < 50; ++round) {
    std::vector<CandidateSample> pool;
    const int tasks = static_cast<int>(rng.below(4)) + 1;
    for (int t = 0; t < tasks; ++t) {
      const int n = static_cast<int>(rng.below(7));
      for (int j = 1; j <= n; ++j) {
        pool.push_back(make_sample("t" + std::to_string(t), "1-1+2-1+3-1", j, rng.below(2) == 0,
                                   "r" + std::to_string(rng.below(5)),
                                   rng.below(3) == 0 ? "A" : "C"));
      }
    }
    std::size_t expected = 0;
    for (const auto& a : pool) {
      for (const auto& b : pool) {
        if (a.task_id == b.task_id && a.first_answer == b.first_answer &&
            a.outcome == Outcome::correct && b.outcome == Outcome::incorrect &&
            a.reflection.text != b.reflection.text) {
          ++expected;
        }
      }
    }
    const auto pairs = build_d_pm(pool, policy(PairingMode::cross_product));
    EXPECT_EQ(pairs.size(), expected);
    EXPECT_TRUE(check_curation(pool, build_d_plus(pool), pairs, {}).empty());
  }
}

// ---------------------------------------------------------------------------

TEST(Judge, ParseReply) {
  EXPECT_EQ(parse_judge_reply("Student A"), 'A');
  EXPECT_EQ(parse_judge_reply("student b."), 'B');
  EXPECT_EQ(parse_judge_reply("B"), 'B');
  EXPECT_EQ(parse_judge_reply("Both are good"), std::nullopt);
  EXPECT_EQ(parse_judge_reply("Student A or Student B"), std::nullopt);
  EXPECT_EQ(parse_judge_reply("Student Alpha"), std::nullopt);
}

TEST(Judge, AlwaysAIsTieWhenDebiased) {
  const auto j = judge_with([](const CompletionRequest&) { return std::string("Student A"); });
  const auto d = j.judge("q", "B", "s", "one", "two", true);
  EXPECT_EQ(d.verdict, JudgeVerdict::tie);
  EXPECT_EQ(d.tie_reason, "disagree");
  EXPECT_EQ(d.votes.first_pass, "A");
  EXPECT_EQ(d.votes.second_pass, "A");

  const auto single = j.judge("q", "B", "s", "one", "two", false);
  EXPECT_EQ(single.verdict, JudgeVerdict::a);
  EXPECT_EQ(single.votes.second_pass, std::nullopt);
}

TEST(Judge, ConsistentJudgePicksWinner) {
  const auto j = judge_with(longer_judge);
  EXPECT_EQ(j.judge("q", "B", "s", "short", "much longer text", true).verdict, JudgeVerdict::b);
  EXPECT_EQ(j.judge("q", "B", "s", "much longer text", "short", true).verdict, JudgeVerdict::a);
}

TEST(Judge, UnparsableIsTie) {
  const auto j = judge_with([](const CompletionRequest&) { return std::string("Both are good"); });
  const auto d = j.judge("q", "B", "s", "one", "two", true);
  EXPECT_EQ(d.verdict, JudgeVerdict::tie);
  EXPECT_EQ(d.tie_reason, "unparsable");
}

TEST(Judge, GatewayErrorIsTie) {
  GatewayOptions o = fast_options();
  o.max_retries = 0;
  PreferenceJudge j(std::make_shared<Gateway>(
                        std::make_shared<CallbackBackend>([](const CompletionRequest&) -> std::string {
                          throw Error(ErrorCode::transport, "down");
                        }),
                        o),
                    prompts(), "judge");
  const auto d = j.judge("q", "B", "s", "one", "two", true);
  EXPECT_EQ(d.verdict, JudgeVerdict::tie);
  EXPECT_EQ(d.tie_reason, "error");
}

TEST(Judge, PromptHasGoldAndBothReflections) {
  const auto j = judge_with(longer_judge);
  const auto p = j.render_prompt("QQ", "GOLD", "PAD", "RA", "RB");
  EXPECT_EQ(classify(p), PromptKind::judge);
  for (const char* s : {"QQ", "GOLD", "PAD", "RA", "RB"}) EXPECT_NE(p.find(s), std::string::npos);
  EXPECT_LT(p.find("RA"), p.find("RB"));
}

TEST(DPref, GroupSizes) {
  const auto j = judge_with(longer_judge);
  const auto cross = policy(PairingMode::cross_product);
  EXPECT_EQ(build_d_pref(build_d_plus(group("t", 1, 0)), cross, j).candidate_pairs, 0u);
  const auto two = build_d_pref(build_d_plus(group("t", 2, 0)), cross, j);
  EXPECT_EQ(two.candidate_pairs, 1u);
  EXPECT_EQ(two.pairs.size(), 1u);
  const auto three = build_d_pref(build_d_plus(group("t", 3, 0)), cross, j, 4);
  EXPECT_EQ(three.candidate_pairs, 3u);
  EXPECT_EQ(three.pairs.size() + three.ties, 3u);
  for (const auto& p : three.pairs) {
    EXPECT_EQ(p.kind, PairKind::judged_pref);
    EXPECT_GE(p.chosen.reflection.text.size(), p.rejected.reflection.text.size());
    ASSERT_TRUE(p.judge_votes);
    EXPECT_TRUE(p.judge_votes->debiased);
  }
}

TEST(DPref, AlwaysAJudgeDropsEverythingOnlyWhenDebiased) {
  const auto j = judge_with([](const CompletionRequest&) { return std::string("Student A"); });
  auto p = policy(PairingMode::cross_product);
  const auto d_plus = build_d_plus(group("t", 4, 0));
  const auto on = build_d_pref(d_plus, p, j);
  EXPECT_EQ(on.pairs.size(), 0u);
  EXPECT_EQ(on.ties, on.candidate_pairs);
  p.debias = false;
  const auto off = build_d_pref(d_plus, p, j);
  EXPECT_EQ(off.pairs.size(), off.candidate_pairs);
  EXPECT_EQ(off.candidate_pairs, 6u);
}

TEST(Curation, CheckFlagsViolations) {
  const auto pool = group("t", 2, 2);
  auto d_plus = build_d_plus(pool);
  auto d_pm = build_d_pm(pool, policy(PairingMode::cross_product));
  EXPECT_TRUE(check_curation(pool, d_plus, d_pm, {}).empty());

  auto bad_plus = d_plus;
  bad_plus.push_back(pool.back());  // an incorrect sample
  EXPECT_FALSE(check_curation(pool, bad_plus, d_pm, {}).empty());

  auto bad_pm = d_pm;
  std::swap(bad_pm[0].chosen, bad_pm[0].rejected);
  EXPECT_FALSE(check_curation(pool, d_plus, bad_pm, {}).empty());
}

TEST(Curation, PairingModeNames) {
  for (auto m : {PairingMode::cross_product, PairingMode::one_per_question, PairingMode::capped_cross}) {
    EXPECT_EQ(parse_pairing_mode(to_string(m)), m);
  }
  EXPECT_THROW(parse_pairing_mode("all"), Error);
  EXPECT_THROW(policy(PairingMode::capped_cross, 0).validate(), Error);
}
