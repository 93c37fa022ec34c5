// SPDX-License-Identifier: Apache-2.0
#include "reflectevo/instruction_pool.hpp"

#include <algorithm>

#include "reflectevo/error.hpp"
#include "reflectevo/util.hpp"

namespace reflectevo {

namespace {
constexpr std::array<std::size_t, 3> kVariantsPerStage{2, 8, 2};
}

InstructionPool::InstructionPool(const PromptLibrary& library)
    : frame_(library.reflection_frame()) {
  std::array<std::vector<StageVariant>, 3> stages;
  for (const auto& [id, text] : library.stage_variants()) {
    const int stage = id[0] - '0';
    stages[static_cast<std::size_t>(stage - 1)].push_back({stage, id, text});
  }
  for (std::size_t s = 0; s < 3; ++s) {
    if (stages[s].size() != kVariantsPerStage[s]) {
      throw Error(ErrorCode::template_missing,
                  "stage " + std::to_string(s + 1) + " needs " +
                      std::to_string(kVariantsPerStage[s]) + " variants, found " +
                      std::to_string(stages[s].size()));
    }
    std::sort(stages[s].begin(), stages[s].end(),
              [](const auto& a, const auto& b) { return a.variant_id < b.variant_id; });
  }
  for (const auto& a : stages[0]) {
    for (const auto& b : stages[1]) {
      for (const auto& c : stages[2]) {
        pool_.push_back({a.variant_id + "+" + b.variant_id + "+" + c.variant_id, {a, b, c}});
      }
    }
  }
  for (const char* key : {"Question", "Scratchpad", "Stage1", "Stage2", "Stage3"}) {
    const auto& ph = frame_.placeholders();
    if (std::count(ph.begin(), ph.end(), key) != 1) {
      throw Error(ErrorCode::template_missing,
                  std::string("reflection frame must contain {") + key + "} exactly once");
    }
  }
}

std::vector<InstructionSpec> InstructionPool::select(int m, std::uint64_t seed) const {
  if (m < 1 || m > static_cast<int>(pool_.size())) {
    throw Error(ErrorCode::out_of_range, "instruction count m=" + std::to_string(m) +
                                             " outside [1, " + std::to_string(pool_.size()) + "]");
  }
  auto shuffled = pool_;
  SeededRng rng(seed);
  rng.shuffle(shuffled);
  shuffled.resize(static_cast<std::size_t>(m));
  return shuffled;
}

bool InstructionPool::has(std::string_view id) const {
  return std::any_of(pool_.begin(), pool_.end(), [&](const auto& s) { return s.id == id; });
}

const InstructionSpec& InstructionPool::find(std::string_view id) const {
  for (const auto& s : pool_) {
    if (s.id == id) return s;
  }
  throw Error(ErrorCode::invalid_argument, "instruction id '" + std::string(id) + "' not in pool");
}

std::string InstructionPool::render_reflection_prompt(const InstructionSpec& spec,
                                                      std::string_view question,
                                                      std::string_view scratchpad) const {
  if (trim(question).empty() || trim(scratchpad).empty()) {
    throw Error(ErrorCode::invalid_argument, "reflection prompt needs a question and a scratchpad");
  }
  return frame_.render({{"Question", std::string(question)},
                        {"Scratchpad", std::string(scratchpad)},
                        {"Stage1", spec.parts[0].text},
                        {"Stage2", spec.parts[1].text},
                        {"Stage3", spec.parts[2].text}});
}

}  // namespace reflectevo
