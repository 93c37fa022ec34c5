// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <set>

#include "reflectevo/error.hpp"
#include "reflectevo/instruction_pool.hpp"
#include "reflectevo/prompts.hpp"
#include "reflectevo/util.hpp"
#include "support.hpp"

using namespace reflectevo;
using namespace reflectevo::testing;

TEST(PromptTemplate, SinglePassSubstitution) {
  PromptTemplate t("t", "Q: {Question} / {Question}");
  EXPECT_EQ(t.render({{"Question", "\\frac{1}{2} {Scratchpad}"}}),
            "Q: \\frac{1}{2} {Scratchpad} / \\frac{1}{2} {Scratchpad}");
  EXPECT_EQ(t.placeholders(), (std::vector<std::string>{"Question", "Question"}));
}

TEST(PromptTemplate, MissingBindingThrows) {
  PromptTemplate t("t", "{Question} {Answer}");
  try {
    t.render({{"Question", "q"}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::unresolved_placeholder);
  }
}

TEST(PromptTemplate, FindPlaceholdersIgnoresNonNames) {
  EXPECT_EQ(find_placeholders("a {Name} {1x} {} {two words} {x_y}"),
            (std::vector<std::string>{"Name", "two words", "x_y"}));
}

TEST(PromptLibrary, MissingDirectoryIsTemplateMissing) {
  TempDir dir;
  try {
    PromptLibrary::load(dir.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::template_missing);
  }
}

TEST(PromptLibrary, LoadsAllVariants) {
  const auto& lib = prompts();
  EXPECT_EQ(lib.stage_variants().size(), 12u);
  EXPECT_NE(lib.correction().text().find("(BEGIN)"), std::string::npos);
  EXPECT_NE(lib.generator().text().find("(END OF EXAMPLES)"), std::string::npos);
}

// ---------------------------------------------------------------------------

TEST(InstructionPool, ThirtyTwoUniqueIds) {
  InstructionPool pool(prompts());
  const auto& all = pool.enumerate();
  ASSERT_EQ(all.size(), static_cast<std::size_t>(kPoolSize));
  std::set<std::string> ids;
  for (const auto& s : all) ids.insert(s.id);
  EXPECT_EQ(ids.size(), 32u);
  EXPECT_EQ(all.front().id, "1-1+2-1+3-1");
  EXPECT_EQ(all.back().id, "1-2+2-8+3-2");
}

TEST(InstructionPool, GoldenIdHash) {
  // Frozen at first build: newline-joined ids in enumeration order.
  InstructionPool pool(prompts());
  std::vector<std::string> ids;
  for (const auto& s : pool.enumerate()) ids.push_back(s.id);
  EXPECT_EQ(sha256_hex(join(ids, "\n")),
            "bd4253b4b29f99dfb5763e2f7e72c0d6aeb1f2de61004391824096a846bdb271");
}

TEST(InstructionPool, RenderContainsEachStageVerbatim) {
  const auto& lib = prompts();
  InstructionPool pool(lib);
  const auto& spec = pool.find("1-2+2-5+3-1");
  const auto text = pool.render_reflection_prompt(spec, "What is 2+2?", "Action: Finish[5]");
  for (const char* v : {"1-2", "2-5", "3-1"}) {
    EXPECT_NE(text.find(lib.stage_variants().at(v)), std::string::npos) << v;
  }
  EXPECT_NE(text.find("What is 2+2?"), std::string::npos);
  EXPECT_NE(text.find("Action: Finish[5]"), std::string::npos);
  EXPECT_TRUE(find_placeholders(text).empty());
}

TEST(InstructionPool, RenderIsPure) {
  InstructionPool pool(prompts());
  const auto& spec = pool.find("1-1+2-3+3-2");
  EXPECT_EQ(pool.render_reflection_prompt(spec, "q", "s"),
            pool.render_reflection_prompt(spec, "q", "s"));
}

TEST(InstructionPool, NoPromptLeavesPlaceholders) {
  InstructionPool pool(prompts());
  for (const auto& spec : pool.enumerate()) {
    const auto text = pool.render_reflection_prompt(spec, "q {x}", "s");
    EXPECT_EQ(find_placeholders(text), std::vector<std::string>{"x"}) << spec.id;
  }
}

TEST(InstructionPool, SelectIsDeterministicAndDistinct) {
  InstructionPool pool(prompts());
  const auto a = pool.select(5, 42);
  EXPECT_EQ(a, pool.select(5, 42));
  std::set<std::string> ids;
  for (const auto& s : a) ids.insert(s.id);
  EXPECT_EQ(ids.size(), 5u);
  EXPECT_NE(a, pool.select(5, 43));
}

TEST(InstructionPool, SelectAllGivesWholePool) {
  InstructionPool pool(prompts());
  const auto all = pool.select(32, 7);
  std::set<std::string> ids;
  for (const auto& s : all) ids.insert(s.id);
  EXPECT_EQ(ids.size(), 32u);
  EXPECT_THROW(pool.select(33, 7), Error);
  EXPECT_THROW(pool.select(0, 7), Error);
}

TEST(InstructionPool, UnknownIdThrows) {
  InstructionPool pool(prompts());
  EXPECT_FALSE(pool.has("1-3+2-1+3-1"));
  EXPECT_THROW(pool.find("1-3+2-1+3-1"), Error);
}
