// SPDX-License-Identifier: Apache-2.0
//
// The reflection instruction pool: one variant from each of the three
// stages (verify / locate and diagnose / plan), 2 x 8 x 2 = 32 combinations.
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "reflectevo/prompts.hpp"

namespace reflectevo {

struct StageVariant {
  int stage = 1;
  std::string variant_id;  // "2-5"
  std::string text;

  friend bool operator==(const StageVariant&, const StageVariant&) = default;
};

struct InstructionSpec {
  std::string id;  // "1-2+2-5+3-1"
  std::array<StageVariant, 3> parts;

  friend bool operator==(const InstructionSpec&, const InstructionSpec&) = default;
};

inline constexpr int kPoolSize = 32;

class InstructionPool {
public:
  /// Throws Error(template_missing) unless the library holds exactly 2, 8
  /// and 2 variants for stages 1, 2 and 3.
  explicit InstructionPool(const PromptLibrary& library);

  /// All 32 specs, ordered lexicographically by (stage1, stage2, stage3).
  const std::vector<InstructionSpec>& enumerate() const { return pool_; }

  /// m distinct specs chosen by a seeded shuffle-then-take.
  std::vector<InstructionSpec> select(int m, std::uint64_t seed) const;

  /// Throws Error(invalid_argument) for ids outside the pool.
  const InstructionSpec& find(std::string_view id) const;
  bool has(std::string_view id) const;

  /// Reflection-generation prompt for a failed attempt.
  std::string render_reflection_prompt(const InstructionSpec& spec, std::string_view question,
                                       std::string_view scratchpad) const;

private:
  PromptTemplate frame_;
  std::vector<InstructionSpec> pool_;
};

}  // namespace reflectevo
