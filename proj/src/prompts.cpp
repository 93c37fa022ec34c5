// SPDX-License-Identifier: Apache-2.0
#include "reflectevo/prompts.hpp"

#include <cctype>
#include <cstdlib>
#include <regex>

#include "reflectevo/error.hpp"
#include "reflectevo/util.hpp"

#ifndef REFLECTEVO_DEFAULT_PROMPT_DIR
#define REFLECTEVO_DEFAULT_PROMPT_DIR "prompts"
#endif

namespace reflectevo {

namespace {

bool is_name_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_name_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_' || c == ' ';
}

/// Length of the placeholder starting at text[pos] == '{', or 0.
std::size_t placeholder_length(std::string_view text, std::size_t pos) {
  if (pos + 2 >= text.size() || text[pos] != '{' || !is_name_start(text[pos + 1])) return 0;
  std::size_t i = pos + 2;
  while (i < text.size() && is_name_char(text[i])) ++i;
  if (i < text.size() && text[i] == '}') return i - pos + 1;
  return 0;
}

std::string strip_final_newline(std::string s) {
  if (!s.empty() && s.back() == '\n') s.pop_back();
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

PromptTemplate load_template(const std::filesystem::path& dir, const std::string& file) {
  const auto path = dir / file;
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::template_missing, "prompt template missing: " + path.string());
  }
  return PromptTemplate(file, strip_final_newline(read_text_file(path)));
}

}  // namespace

std::vector<std::string> find_placeholders(std::string_view text) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (const auto n = placeholder_length(text, i); n > 0) {
      out.emplace_back(text.substr(i + 1, n - 2));
      i += n - 1;
    }
  }
  return out;
}

PromptTemplate::PromptTemplate(std::string name, std::string text)
    : name_(std::move(name)), text_(std::move(text)) {
  std::string literal;
  for (std::size_t i = 0; i < text_.size(); ++i) {
    if (const auto n = placeholder_length(text_, i); n > 0) {
      if (!literal.empty()) segments_.push_back({false, std::move(literal)});
      literal.clear();
      std::string key = text_.substr(i + 1, n - 2);
      placeholders_.push_back(key);
      segments_.push_back({true, std::move(key)});
      i += n - 1;
    } else {
      literal.push_back(text_[i]);
    }
  }
  if (!literal.empty()) segments_.push_back({false, std::move(literal)});
}

std::string PromptTemplate::render(const Bindings& bindings) const {
  std::string out;
  out.reserve(text_.size() * 2);
  for (const auto& seg : segments_) {
    if (!seg.is_placeholder) {
      out += seg.value;
      continue;
    }
    auto it = bindings.find(seg.value);
    if (it == bindings.end()) {
      throw Error(ErrorCode::unresolved_placeholder,
                  "template '" + name_ + "': no value for {" + seg.value + "}");
    }
    out += it->second;
  }
  return out;
}

std::filesystem::path PromptLibrary::default_dir() {
  if (const char* env = std::getenv("REFLECTEVO_PROMPTS"); env && *env) return env;
  return REFLECTEVO_DEFAULT_PROMPT_DIR;
}

PromptLibrary PromptLibrary::load(const std::filesystem::path& dir) {
  PromptLibrary lib;
  lib.dir_ = dir;
  lib.generator_ = load_template(dir, "generator.txt");
  lib.reflexion_ = load_template(dir, "reflexion.txt");
  lib.correction_ = load_template(dir, "correction.txt");
  lib.one_stage_ = load_template(dir, "one_stage.txt");
  lib.direct_qa_ = load_template(dir, "direct_qa.txt");
  lib.judge_ = load_template(dir, "judge.txt");
  lib.error_tagging_ = load_template(dir, "error_tagging.txt");
  lib.self_judgment_ = load_template(dir, "self_judgment.txt");
  lib.reflection_frame_ = load_template(dir, "reflection/frame.txt");

  const auto variant_dir = dir / "reflection";
  static const std::regex variant_name(R"(s([1-3]-[0-9]+)\.txt)");
  for (const auto& entry : std::filesystem::directory_iterator(variant_dir)) {
    const auto fname = entry.path().filename().string();
    std::smatch m;
    if (!std::regex_match(fname, m, variant_name)) continue;
    auto text = trim(read_text_file(entry.path()));
    if (text.empty()) {
      throw Error(ErrorCode::template_missing, "empty stage variant " + entry.path().string());
    }
    lib.stage_variants_.emplace(m[1].str(), std::move(text));
  }
  return lib;
}

}  // namespace reflectevo
