// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "reflectevo/curation.hpp"
#include "reflectevo/error.hpp"
#include "reflectevo/export.hpp"
#include "reflectevo/instruction_pool.hpp"
#include "reflectevo/rollout.hpp"
#include "reflectevo/util.hpp"
#include "support.hpp"

using namespace reflectevo;
using namespace reflectevo::testing;

namespace {

const InstructionPool& pool() {
  static const InstructionPool p(prompts());
  return p;
}

PreferencePair pair_of(const CandidateSample& chosen, const CandidateSample& rejected,
                       PairKind kind) {
  return PreferencePair{context_of(chosen), member_of(chosen), member_of(rejected), kind,
                        kind == PairKind::judged_pref ? std::optional(JudgeVotes{true, "A", "B"})
                                                      : std::nullopt};
}

}  // namespace

TEST(Export, SettingOneTargetJoinsReflectionAndCorrection) {
  const auto s = make_sample("t1", "1-1+2-1+3-1", 2, true, "I flipped the sign.");
  Exporter ex(prompts(), nullptr);
  const auto recs = ex.setting1({s});
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].target, "I flipped the sign.\n\n" + s.corrected_scratchpad);
  EXPECT_EQ(classify(recs[0].prompt), PromptKind::one_stage);
  EXPECT_NE(recs[0].prompt.find(s.question), std::string::npos);
  EXPECT_NE(recs[0].prompt.find(s.first_scratchpad + "\nObservation: Answer is INCORRECT"),
            std::string::npos);
  EXPECT_EQ(recs[0].meta["setting"], "1");
  EXPECT_EQ(recs[0].meta["task_id"], "t1");
  EXPECT_EQ(recs[0].meta["sample_index"], 2);
  EXPECT_EQ(recs[0].meta["dataset"], "logiqa");
}

TEST(Export, SettingTwoHalvesLineUp) {
  std::vector<CandidateSample> d_plus = {make_sample("t1", "1-1+2-1+3-1", 1, true, "r one"),
                                         make_sample("t2", "1-2+2-5+3-1", 1, true, "r two")};
  Exporter ex(prompts(), nullptr);
  const auto [reflect, correct] = ex.setting2(d_plus);
  ASSERT_EQ(reflect.size(), 2u);
  ASSERT_EQ(correct.size(), 2u);
  for (std::size_t i = 0; i < d_plus.size(); ++i) {
    const auto& s = d_plus[i];
    EXPECT_EQ(reflect[i].target, s.reflection.text);
    EXPECT_EQ(classify(reflect[i].prompt), PromptKind::plain_reflection);
    EXPECT_EQ(correct[i].target, s.corrected_scratchpad);
    EXPECT_EQ(classify(correct[i].prompt), PromptKind::correction);
    // The 2.2 prompt carries exactly the reflection that 2.1 learns to emit.
    EXPECT_NE(correct[i].prompt.find(reflect[i].target), std::string::npos);
    EXPECT_EQ(reflect[i].meta["task_id"], correct[i].meta["task_id"]);
    EXPECT_EQ(reflect[i].meta["setting"], "2.1");
    EXPECT_EQ(correct[i].meta["setting"], "2.2");
  }
}

TEST(Export, InstructionPromptOption) {
  const auto s = make_sample("t1", "1-2+2-5+3-1", 1, true, "r");
  ExportOptions o;
  o.use_instruction_prompt = true;
  Exporter ex(prompts(), &pool(), o);
  const auto [reflect, correct] = ex.setting2({s});
  EXPECT_EQ(classify(reflect[0].prompt), PromptKind::instruction_reflection);
  EXPECT_NE(reflect[0].prompt.find(prompts().stage_variants().at("2-5")), std::string::npos);
  EXPECT_THROW(Exporter(prompts(), nullptr, o), Error);
}

TEST(Export, DpoOutcomePairs) {
  const auto c = make_sample("t1", "1-1+2-1+3-1", 1, true, "good");
  const auto w = make_sample("t1", "1-1+2-2+3-1", 1, false, "bad");
  Exporter ex(prompts(), nullptr);
  const auto recs = ex.dpo({pair_of(c, w, PairKind::outcome_pm)}, DpoSetting::outcome);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].chosen, "good");
  EXPECT_EQ(recs[0].rejected, "bad");
  EXPECT_EQ(classify(recs[0].prompt), PromptKind::plain_reflection);
  EXPECT_EQ(recs[0].meta["setting"], "3");
  EXPECT_EQ(recs[0].meta["kind"], "outcome_pm");
  EXPECT_EQ(recs[0].meta["completion"], "reflection");
  EXPECT_EQ(recs[0].meta["rejected_instruction_id"], "1-1+2-2+3-1");

  ExportOptions o;
  o.dpo_with_answer = true;
  const auto with = Exporter(prompts(), nullptr, o).dpo({pair_of(c, w, PairKind::outcome_pm)},
                                                        DpoSetting::outcome);
  EXPECT_EQ(with[0].chosen, "good\n\n" + c.corrected_scratchpad);
  EXPECT_EQ(with[0].meta["completion"], "reflection+answer");
}

TEST(Export, DpoKindMismatch) {
  const auto a = make_sample("t1", "1-1+2-1+3-1", 1, true, "x");
  const auto b = make_sample("t1", "1-1+2-1+3-1", 2, true, "y");
  Exporter ex(prompts(), nullptr);
  try {
    ex.dpo({pair_of(a, b, PairKind::judged_pref)}, DpoSetting::outcome);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kind_mismatch);
  }
  EXPECT_EQ(ex.dpo({pair_of(a, b, PairKind::judged_pref)}, DpoSetting::judged)[0].meta["setting"],
            "4");
  EXPECT_THROW(ex.dpo({pair_of(a, b, PairKind::outcome_pm)}, DpoSetting::judged), Error);
}

TEST(Export, DpoIdenticalCompletionsRejected) {
  const auto a = make_sample("t1", "1-1+2-1+3-1", 1, true, "same");
  const auto b = make_sample("t1", "1-1+2-1+3-1", 2, false, "same");
  Exporter ex(prompts(), nullptr);
  EXPECT_THROW(ex.dpo({pair_of(a, b, PairKind::outcome_pm)}, DpoSetting::outcome), Error);
}

TEST(Export, RecordsRoundTripAndValidate) {
  const SftRecord s{"p", "t", json{{"setting", "1"}}};
  EXPECT_EQ(json(s).get<SftRecord>(), s);
  const DpoRecord d{"p", "c", "r", json{{"setting", "3"}}};
  EXPECT_EQ(json(d).get<DpoRecord>(), d);
  EXPECT_THROW((json{{"prompt", "p"}, {"target", ""}, {"meta", json::object()}}.get<SftRecord>()),
               Error);
  EXPECT_THROW((json{{"prompt", "p"}, {"chosen", "x"}, {"rejected", "x"}, {"meta", json::object()}}
                    .get<DpoRecord>()),
               Error);
  EXPECT_THROW((json{{"prompt", "p"}}.get<DpoRecord>()), Error);
}

TEST(Export, FilesSplitByDataset) {
  auto a = make_sample("t1", "1-1+2-1+3-1", 1, true, "r");
  auto b = make_sample("t2", "1-1+2-1+3-1", 1, true, "r");
  b.source_dataset = "bigbench/date_understanding";
  Exporter ex(prompts(), nullptr);
  TempDir dir;
  const auto paths = write_export(dir.path(), "setting1", ex.setting1({a, b}));
  ASSERT_EQ(paths.size(), 2u);
  EXPECT_EQ(paths[0], dir / "setting1" / "bigbench_date_understanding.jsonl");
  EXPECT_EQ(paths[1], dir / "setting1" / "logiqa.jsonl");
  const auto lines = read_jsonl(paths[1]);
  ASSERT_EQ(lines.size(), 1u);
  EXPECT_EQ(lines[0].get<SftRecord>().meta["task_id"], "t1");
  EXPECT_TRUE(lines[0].contains("prompt"));
  EXPECT_TRUE(lines[0].contains("target"));
}

// ---------------------------------------------------------------------------

TEST(Stats, PercentCorrect) {
  std::vector<CandidateSample> pool;
  for (int i = 0; i < 100; ++i) {
    pool.push_back(make_sample("t" + std::to_string(i), "1-1+2-1+3-1", 1, i < 14, "r"));
  }
  const auto stats = compute_stats(pool, build_d_plus(pool));
  ASSERT_EQ(stats.categories.size(), 1u);
  EXPECT_DOUBLE_EQ(stats.categories[0].pct_correct, 14.0);
  EXPECT_EQ(stats.categories[0].d_plus, 14u);
  EXPECT_EQ(stats.overall.samples, 100u);
}

TEST(Stats, AverageReflectionLength) {
  auto ten = make_sample("a", "1-1+2-1+3-1", 1, true, "w w w w w w w w w w");
  auto twenty = make_sample("b", "1-1+2-1+3-1", 1, false,
                            "w w w w w w w w w w w w w w w w w w w w");
  const auto stats = compute_stats({ten, twenty}, {});
  EXPECT_DOUBLE_EQ(stats.overall.avg_reflection_tokens, 15.0);
  EXPECT_DOUBLE_EQ(stats.overall.pct_correct, 50.0);
}

TEST(Stats, EmptyCategoryOmitted) {
  auto a = make_sample("a", "1-1+2-1+3-1", 1, true, "r");
  auto b = make_sample("b", "1-1+2-1+3-1", 1, true, "r");
  b.task_category = "mathematics";
  const auto stats = compute_stats({a}, {b});
  ASSERT_EQ(stats.categories.size(), 1u);
  EXPECT_EQ(stats.categories[0].category, "logical_reasoning");
  const auto j = stats_to_json(stats);
  EXPECT_EQ(j["categories"].size(), 1u);
  EXPECT_NE(stats_to_table(stats).find("logical_reasoning"), std::string::npos);
  EXPECT_EQ(stats_to_table(stats).find("mathematics"), std::string::npos);
}

TEST(Stats, CustomCounter) {
  const auto s = make_sample("a", "1-1+2-1+3-1", 1, true, "abcdef");
  const auto stats = compute_stats({s}, {}, [](std::string_view t) { return t.size(); });
  EXPECT_DOUBLE_EQ(stats.overall.avg_reflection_tokens, 6.0);
}
