// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace reflectevo {

using Bindings = std::map<std::string, std::string, std::less<>>;

/// A text template with `{Name}` placeholders. Substitution is single-pass,
/// so braces inside substituted values (LaTeX, code) are never re-expanded.
class PromptTemplate {
public:
  PromptTemplate() = default;
  PromptTemplate(std::string name, std::string text);

  /// Throws Error(unresolved_placeholder) when a placeholder has no binding.
  std::string render(const Bindings& bindings) const;

  const std::string& name() const { return name_; }
  const std::string& text() const { return text_; }
  const std::vector<std::string>& placeholders() const { return placeholders_; }

private:
  struct Segment {
    bool is_placeholder;
    std::string value;
  };
  std::string name_;
  std::string text_;
  std::vector<Segment> segments_;
  std::vector<std::string> placeholders_;
};

/// Every `{Name}`-shaped token in `text` (Name starts with a letter and holds
/// letters, digits, spaces or underscores).
std::vector<std::string> find_placeholders(std::string_view text);

/// Loaded prompt directory. Layout:
///   generator.txt, reflexion.txt, correction.txt, one_stage.txt,
///   direct_qa.txt, judge.txt, error_tagging.txt, self_judgment.txt,
///   reflection/frame.txt, reflection/s{stage}-{variant}.txt
class PromptLibrary {
public:
  static PromptLibrary load(const std::filesystem::path& dir);

  /// $REFLECTEVO_PROMPTS if set, else the directory shipped with the sources.
  static std::filesystem::path default_dir();

  const PromptTemplate& generator() const { return generator_; }
  const PromptTemplate& reflexion() const { return reflexion_; }
  const PromptTemplate& correction() const { return correction_; }
  const PromptTemplate& one_stage() const { return one_stage_; }
  const PromptTemplate& direct_qa() const { return direct_qa_; }
  const PromptTemplate& judge() const { return judge_; }
  const PromptTemplate& error_tagging() const { return error_tagging_; }
  const PromptTemplate& self_judgment() const { return self_judgment_; }
  const PromptTemplate& reflection_frame() const { return reflection_frame_; }

  /// variant id ("2-5") -> verbatim variant text.
  const std::map<std::string, std::string>& stage_variants() const { return stage_variants_; }

  const std::filesystem::path& dir() const { return dir_; }

private:
  std::filesystem::path dir_;
  PromptTemplate generator_, reflexion_, correction_, one_stage_, direct_qa_, judge_,
      error_tagging_, self_judgment_, reflection_frame_;
  std::map<std::string, std::string> stage_variants_;
};

}  // namespace reflectevo
