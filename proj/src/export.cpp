// SPDX-License-Identifier: Apache-2.0
#include "reflectevo/export.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include <spdlog/spdlog.h>

#include "reflectevo/error.hpp"
#include "reflectevo/instruction_pool.hpp"
#include "reflectevo/json_fields.hpp"
#include "reflectevo/prompts.hpp"
#include "reflectevo/rollout.hpp"

namespace reflectevo {

using fields::required;

void to_json(json& j, const SftRecord& v) {
  j = json{{"prompt", v.prompt}, {"target", v.target}, {"meta", v.meta}};
}

void from_json(const json& j, SftRecord& v) {
  v.prompt = required<std::string>(j, "prompt");
  v.target = required<std::string>(j, "target");
  v.meta = required<json>(j, "meta");
  if (v.prompt.empty() || v.target.empty()) {
    throw Error(ErrorCode::schema, "SFT record with empty prompt or target");
  }
}

void to_json(json& j, const DpoRecord& v) {
  j = json{{"prompt", v.prompt}, {"chosen", v.chosen}, {"rejected", v.rejected}, {"meta", v.meta}};
}

void from_json(const json& j, DpoRecord& v) {
  v.prompt = required<std::string>(j, "prompt");
  v.chosen = required<std::string>(j, "chosen");
  v.rejected = required<std::string>(j, "rejected");
  v.meta = required<json>(j, "meta");
  if (v.chosen == v.rejected) throw Error(ErrorCode::schema, "DPO record with chosen == rejected");
}

std::string join_reflection_and_correction(const std::string& reflection,
                                           const std::string& corrected_scratchpad) {
  return reflection + "\n\n" + corrected_scratchpad;
}

Exporter::Exporter(const PromptLibrary& prompts, const InstructionPool* pool, ExportOptions options)
    : prompts_(prompts), pool_(pool), options_(std::move(options)) {
  if (options_.use_instruction_prompt && !pool_) {
    throw Error(ErrorCode::config, "instruction prompts for export need an instruction pool");
  }
}

std::string Exporter::reflection_prompt(const std::string& question,
                                        const std::string& failed_scratchpad,
                                        const std::string& instruction_id) const {
  if (options_.use_instruction_prompt && pool_->has(instruction_id)) {
    return pool_->render_reflection_prompt(pool_->find(instruction_id), question,
                                           render_failed_attempt(failed_scratchpad));
  }
  return render_plain_reflection_prompt(prompts_, question, failed_scratchpad);
}

namespace {

json sample_meta(const CandidateSample& s, const char* setting) {
  return json{{"setting", setting},
              {"task_id", s.task_id},
              {"instruction_id", s.reflection.instruction_id},
              {"sample_index", s.reflection.sampling.sample_index},
              {"dataset", s.source_dataset}};
}

void warn_if_empty(const std::vector<CandidateSample>& d_plus, const char* setting) {
  if (d_plus.empty()) spdlog::warn("setting {} export: D+ is empty, writing no records", setting);
}

}  // namespace

std::vector<SftRecord> Exporter::setting1(const std::vector<CandidateSample>& d_plus) const {
  warn_if_empty(d_plus, "1");
  std::vector<SftRecord> out;
  out.reserve(d_plus.size());
  for (const auto& s : d_plus) {
    out.push_back(SftRecord{render_one_stage_prompt(prompts_, s.question, s.first_scratchpad),
                            join_reflection_and_correction(s.reflection.text, s.corrected_scratchpad),
                            sample_meta(s, "1")});
  }
  return out;
}

std::pair<std::vector<SftRecord>, std::vector<SftRecord>> Exporter::setting2(
    const std::vector<CandidateSample>& d_plus) const {
  warn_if_empty(d_plus, "2");
  std::vector<SftRecord> reflect, correct;
  reflect.reserve(d_plus.size());
  correct.reserve(d_plus.size());
  for (const auto& s : d_plus) {
    reflect.push_back(SftRecord{
        reflection_prompt(s.question, s.first_scratchpad, s.reflection.instruction_id),
        s.reflection.text, sample_meta(s, "2.1")});

    TaskItem task;
    task.id = s.task_id;
    task.question = s.question;
    if (auto it = options_.fewshot.find(s.task_id); it != options_.fewshot.end()) {
      task.fewshot = it->second;
    }
    correct.push_back(SftRecord{render_correction_prompt(prompts_, task, s.reflection.text,
                                                         render_failed_attempt(s.first_scratchpad)),
                                s.corrected_scratchpad, sample_meta(s, "2.2")});
  }
  return {std::move(reflect), std::move(correct)};
}

std::vector<DpoRecord> Exporter::dpo(const std::vector<PreferencePair>& pairs,
                                     DpoSetting setting) const {
  const PairKind expected =
      setting == DpoSetting::outcome ? PairKind::outcome_pm : PairKind::judged_pref;
  const char* name = setting == DpoSetting::outcome ? "3" : "4";
  for (const auto& p : pairs) {
    if (p.kind != expected) {
      throw Error(ErrorCode::kind_mismatch, "setting " + std::string(name) + " takes " +
                                                std::string(to_string(expected)) + " pairs, got " +
                                                std::string(to_string(p.kind)) + " (task '" +
                                                p.context.task_id + "')");
    }
  }
  auto completion = [&](const PairMember& m) {
    return options_.dpo_with_answer
               ? join_reflection_and_correction(m.reflection.text, m.corrected_scratchpad)
               : m.reflection.text;
  };
  std::vector<DpoRecord> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    DpoRecord r{reflection_prompt(p.context.question, p.context.first_scratchpad,
                                  p.chosen.reflection.instruction_id),
                completion(p.chosen), completion(p.rejected),
                json{{"setting", name},
                     {"kind", to_string(p.kind)},
                     {"task_id", p.context.task_id},
                     {"chosen_instruction_id", p.chosen.reflection.instruction_id},
                     {"rejected_instruction_id", p.rejected.reflection.instruction_id},
                     {"completion", options_.dpo_with_answer ? "reflection+answer" : "reflection"},
                     {"dataset", p.context.source_dataset}}};
    if (r.chosen == r.rejected) {
      throw Error(ErrorCode::schema, "pair for task '" + p.context.task_id +
                                         "' has identical chosen and rejected completions");
    }
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string dataset_file_stem(std::string_view dataset) {
  std::string stem(dataset.empty() ? "all" : dataset);
  std::replace(stem.begin(), stem.end(), '/', '_');
  return stem;
}

namespace {

template <typename R>
std::vector<std::filesystem::path> write_grouped(const std::filesystem::path& dir,
                                                 std::string_view setting,
                                                 const std::vector<R>& records) {
  std::map<std::string, std::vector<json>> by_dataset;
  for (const auto& r : records) {
    by_dataset[dataset_file_stem(r.meta.value("dataset", ""))].emplace_back(r);
  }
  std::vector<std::filesystem::path> paths;
  for (const auto& [stem, lines] : by_dataset) {
    auto path = dir / std::string(setting) / (stem + ".jsonl");
    write_jsonl(path, lines);
    paths.push_back(std::move(path));
  }
  return paths;
}

}  // namespace

std::vector<std::filesystem::path> write_export(const std::filesystem::path& dir,
                                                std::string_view setting,
                                                const std::vector<SftRecord>& records) {
  return write_grouped(dir, setting, records);
}

std::vector<std::filesystem::path> write_export(const std::filesystem::path& dir,
                                                std::string_view setting,
                                                const std::vector<DpoRecord>& records) {
  return write_grouped(dir, setting, records);
}

// ---------------------------------------------------------------------------

TokenCounter whitespace_token_counter() {
  return [](std::string_view s) { return count_whitespace_pieces(s); };
}

namespace {

struct Accum {
  std::size_t samples = 0, correct = 0, d_plus = 0;
  double question = 0, first = 0, second = 0, reflection = 0;

  void add(const CandidateSample& s, const TokenCounter& counter) {
    ++samples;
    if (s.outcome == Outcome::correct) ++correct;
    question += static_cast<double>(counter(s.question));
    first += static_cast<double>(counter(s.first_scratchpad));
    second += static_cast<double>(counter(s.corrected_scratchpad));
    reflection += static_cast<double>(counter(s.reflection.text));
  }

  CategoryStats finish(std::string name) const {
    CategoryStats c;
    c.category = std::move(name);
    c.samples = samples;
    c.correct = correct;
    c.d_plus = d_plus;
    if (samples > 0) {
      const auto n = static_cast<double>(samples);
      c.pct_correct = 100.0 * static_cast<double>(correct) / n;
      c.avg_question_tokens = question / n;
      c.avg_first_answer_tokens = first / n;
      c.avg_second_answer_tokens = second / n;
      c.avg_reflection_tokens = reflection / n;
    }
    return c;
  }
};

std::string category_of(const CandidateSample& s) {
  return s.task_category.empty() ? "uncategorized" : s.task_category;
}

}  // namespace

DatasetStats compute_stats(const std::vector<CandidateSample>& pool,
                           const std::vector<CandidateSample>& d_plus,
                           const TokenCounter& counter) {
  std::map<std::string, Accum> by_category;
  Accum all;
  for (const auto& s : pool) {
    by_category[category_of(s)].add(s, counter);
    all.add(s, counter);
  }
  for (const auto& s : d_plus) {
    ++by_category[category_of(s)].d_plus;
    ++all.d_plus;
  }
  DatasetStats stats;
  for (const auto& [name, acc] : by_category) {
    if (acc.samples == 0) continue;
    stats.categories.push_back(acc.finish(name));
  }
  stats.overall = all.finish("overall");
  return stats;
}

namespace {

json category_json(const CategoryStats& c) {
  return json{{"category", c.category},
              {"samples", c.samples},
              {"correct", c.correct},
              {"d_plus", c.d_plus},
              {"pct_correct", c.pct_correct},
              {"avg_question_tokens", c.avg_question_tokens},
              {"avg_first_answer_tokens", c.avg_first_answer_tokens},
              {"avg_second_answer_tokens", c.avg_second_answer_tokens},
              {"avg_reflection_tokens", c.avg_reflection_tokens}};
}

std::string fixed(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

}  // namespace

json stats_to_json(const DatasetStats& stats) {
  json cats = json::array();
  for (const auto& c : stats.categories) cats.push_back(category_json(c));
  return json{{"categories", cats},
              {"overall", category_json(stats.overall)},
              {"token_counter", "whitespace"}};
}

std::string stats_to_table(const DatasetStats& stats) {
  const std::vector<std::string> header = {"category", "samples", "correct", "% correct", "D+",
                                           "avg q",    "avg a1",  "avg a2",  "avg r"};
  std::vector<std::vector<std::string>> rows;
  auto row = [](const CategoryStats& c) {
    return std::vector<std::string>{c.category,
                                    std::to_string(c.samples),
                                    std::to_string(c.correct),
                                    fixed(c.pct_correct, 2),
                                    std::to_string(c.d_plus),
                                    fixed(c.avg_question_tokens, 1),
                                    fixed(c.avg_first_answer_tokens, 1),
                                    fixed(c.avg_second_answer_tokens, 1),
                                    fixed(c.avg_reflection_tokens, 1)};
  };
  for (const auto& c : stats.categories) rows.push_back(row(c));
  rows.push_back(row(stats.overall));

  std::vector<std::size_t> width(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) {
    width[i] = header[i].size();
    for (const auto& r : rows) width[i] = std::max(width[i], r[i].size());
  }
  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i > 0) out << "  ";
      // first column left-aligned, numbers right-aligned
      const auto pad = std::string(width[i] - cells[i].size(), ' ');
      out << (i == 0 ? cells[i] + pad : pad + cells[i]);
    }
    out << '\n';
  };
  emit(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out << std::string(total + 2 * (width.size() - 1), '-') << '\n';
  for (const auto& r : rows) emit(r);
  return out.str();
}

}  // namespace reflectevo
