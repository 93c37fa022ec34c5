// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <set>

#include "reflectevo/error.hpp"
#include "reflectevo/model.hpp"
#include "reflectevo/util.hpp"
#include "support.hpp"

using namespace reflectevo;
using namespace reflectevo::testing;

namespace {

Turn turn(int index, FeedbackValue value, std::optional<std::string> answer = "A") {
  Turn t;
  t.index = index;
  t.scratchpad = answer ? "Action: Finish[" + *answer + "]" : "Thought: thinking";
  t.extracted_answer = answer;
  t.feedback = Feedback{value, VerifierKind::oracle, {}};
  return t;
}

ReflectionRecord reflection(std::string text = "r") {
  return ReflectionRecord{"1-1+2-1+3-1", std::move(text), {0.7, 3, 1}, ReflectionSource::self};
}

}  // namespace

TEST(Util, TrimAndCollapse) {
  EXPECT_EQ(trim("  a b \n"), "a b");
  EXPECT_EQ(collapse_whitespace(" a \t b\n\nc "), "a b c");
  EXPECT_EQ(to_lower("AbC"), "abc");
}

TEST(Util, WhitespacePieces) {
  EXPECT_EQ(count_whitespace_pieces(""), 0u);
  EXPECT_EQ(count_whitespace_pieces("  one two\tthree\n"), 3u);
}

TEST(Util, Sha256KnownVector) {
  // FIPS 180-2 test vector for "abc".
  EXPECT_EQ(sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Util, DeriveSeedIsStableAndTagSensitive) {
  EXPECT_EQ(derive_seed(7, "x"), derive_seed(7, "x"));
  EXPECT_NE(derive_seed(7, "x"), derive_seed(7, "y"));
  EXPECT_NE(derive_seed(7, "x"), derive_seed(8, "x"));
}

TEST(Util, SampleIndicesDistinctAndDeterministic) {
  SeededRng a(11), b(11);
  const auto xs = a.sample_indices(50, 10);
  EXPECT_EQ(xs, b.sample_indices(50, 10));
  EXPECT_EQ(std::set<std::size_t>(xs.begin(), xs.end()).size(), 10u);
  for (auto x : xs) EXPECT_LT(x, 50u);
}

TEST(Util, JsonlRoundTripAndBadLine) {
  TempDir dir;
  write_jsonl(dir / "a.jsonl", {json{{"x", 1}}, json{{"y", "z"}}});
  const auto back = read_jsonl(dir / "a.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1]["y"], "z");

  write_text_file(dir / "bad.jsonl", "{\"x\": 1}\n{oops\n");
  try {
    read_jsonl(dir / "bad.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::schema);
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos);
  }
}

TEST(Util, ParallelForCoversEveryIndexAndRethrows) {
  std::vector<int> hits(100, 0);
  parallel_for(hits.size(), 8, [&](std::size_t i) { hits[i]++; });
  for (int h : hits) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_for(10, 3,
                            [](std::size_t i) {
                              if (i == 5) throw Error(ErrorCode::io, "boom");
                            }),
               Error);
}

// ---------------------------------------------------------------------------

TEST(ValidateTrace, WellFormedSolvedAtTwo) {
  RolloutTrace t{"t1", {turn(1, FeedbackValue::incorrect), turn(2, FeedbackValue::correct)},
                 {reflection()}, TraceStatus::solved_at(2)};
  EXPECT_TRUE(validate_trace(t).empty());
}

TEST(ValidateTrace, NonContiguousIndices) {
  RolloutTrace t{"t1", {turn(1, FeedbackValue::incorrect), turn(3, FeedbackValue::incorrect)},
                 {reflection()}, TraceStatus::unsolved()};
  EXPECT_EQ(validate_trace(t), std::vector<std::string>{"non-contiguous turn indices"});
}

TEST(ValidateTrace, SolvedTurnNotCorrect) {
  RolloutTrace t{"t1", {turn(1, FeedbackValue::incorrect)}, {}, TraceStatus::solved_at(1)};
  EXPECT_EQ(validate_trace(t), std::vector<std::string>{"solved turn not Correct"});
}

TEST(ValidateTrace, OtherViolations) {
  RolloutTrace missing{"t1", {turn(1, FeedbackValue::incorrect), turn(2, FeedbackValue::incorrect)},
                       {}, TraceStatus::unsolved()};
  EXPECT_EQ(validate_trace(missing),
            std::vector<std::string>{"reflection count does not match turn count"});

  RolloutTrace after{"t1", {turn(1, FeedbackValue::correct), turn(2, FeedbackValue::correct)},
                     {reflection()}, TraceStatus::solved_at(1)};
  EXPECT_EQ(validate_trace(after), std::vector<std::string>{"turns follow the solved turn"});

  auto bad_turn = turn(1, FeedbackValue::incorrect);
  bad_turn.scratchpad = "Thought: no action here";
  RolloutTrace extracted{"t1", {bad_turn}, {}, TraceStatus::unsolved()};
  EXPECT_EQ(validate_trace(extracted),
            std::vector<std::string>{"answer extracted without a terminal action"});

  // Aborted traces may stop anywhere.
  RolloutTrace aborted{"t1", {turn(1, FeedbackValue::incorrect)}, {reflection()},
                       TraceStatus::aborted("transport")};
  EXPECT_TRUE(validate_trace(aborted).empty());
}

TEST(Model, CandidateJsonRoundTrip) {
  auto s = make_sample("t1", "1-1+2-1+3-1", 2, true, "look again");
  const json j = s;
  EXPECT_EQ(j.get<CandidateSample>(), s);
  EXPECT_EQ(j["first_feedback"]["value"], "Incorrect");
  EXPECT_TRUE(validate_candidate(s).empty());

  s.first_feedback.value = FeedbackValue::correct;
  EXPECT_FALSE(validate_candidate(s).empty());
}

TEST(Model, PreferencePairJsonRoundTrip) {
  const auto pos = make_sample("t1", "1-1+2-1+3-1", 1, true, "a");
  const auto neg = make_sample("t1", "1-1+2-1+3-1", 2, false, "b");
  PreferencePair p{PairContext{pos.task_id, pos.source_dataset, pos.task_category, pos.question,
                               pos.gold_answer, pos.first_scratchpad, pos.first_answer,
                               pos.first_feedback},
                   PairMember{pos.reflection, pos.corrected_scratchpad, pos.corrected_answer,
                              pos.outcome},
                   PairMember{neg.reflection, neg.corrected_scratchpad, neg.corrected_answer,
                              neg.outcome},
                   PairKind::judged_pref, JudgeVotes{true, "A", "B"}};
  EXPECT_EQ(json(p).get<PreferencePair>(), p);
}

TEST(Model, TraceJsonRoundTrip) {
  RolloutTrace t{"t1", {turn(1, FeedbackValue::incorrect), turn(2, FeedbackValue::correct)},
                 {reflection()}, TraceStatus::solved_at(2)};
  EXPECT_EQ(json(t).get<RolloutTrace>(), t);
}

TEST(Model, TaskValidation) {
  std::vector<TaskItem> ok = {make_task("a", "q", "B"), make_task("b", "q", "C")};
  EXPECT_NO_THROW(validate_tasks(ok));

  auto dup = ok;
  dup[1].id = "a";
  EXPECT_THROW(validate_tasks(dup), Error);

  auto empty_gold = ok;
  empty_gold[0].gold_answer = "  ";
  EXPECT_THROW(validate_tasks(empty_gold), Error);

  auto unknown = ok;
  unknown[0].source_dataset = "gsm9k";
  try {
    validate_tasks(unknown);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::config);
    EXPECT_NE(std::string(e.what()).find("unknown dataset name"), std::string::npos);
  }
  EXPECT_TRUE(is_known_dataset("bigbench/date_understanding"));
  EXPECT_FALSE(is_known_dataset("bigbench/"));
}

TEST(Model, PolicyValidation) {
  GenerationPolicy p;
  EXPECT_NO_THROW(p.validate());
  p.m = 33;
  EXPECT_THROW(p.validate(), Error);
  p.m = 5;
  p.k = 0;
  EXPECT_THROW(p.validate(), Error);
  p.k = 2;
  p.max_turns = 0;
  EXPECT_THROW(p.validate(), Error);
}
