// SPDX-License-Identifier: Apache-2.0
#include "reflectevo/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <regex>
#include <sstream>

#include "reflectevo/error.hpp"
#include "reflectevo/gateway.hpp"
#include "reflectevo/json_fields.hpp"
#include "reflectevo/prompts.hpp"
#include "reflectevo/rollout.hpp"
#include "reflectevo/verify.hpp"

namespace reflectevo {

using fields::optional_or;
using fields::required;

double EvalReport::acc(int t) const {
  if (t < 1 || t > turns) {
    throw Error(ErrorCode::out_of_range,
                "turn " + std::to_string(t) + " outside 1.." + std::to_string(turns));
  }
  return accuracy[static_cast<std::size_t>(t - 1)];
}

std::vector<double> accuracy_by_turn(const std::vector<ItemResult>& items, int turns) {
  std::vector<double> acc(static_cast<std::size_t>(turns), 0.0);
  if (items.empty()) return acc;
  for (int t = 0; t < turns; ++t) {
    std::size_t solved = 0;
    for (const auto& item : items) {
      if (!item.aborted && static_cast<std::size_t>(t) < item.correct_at.size() &&
          item.correct_at[static_cast<std::size_t>(t)]) {
        ++solved;
      }
    }
    acc[static_cast<std::size_t>(t)] =
        static_cast<double>(solved) / static_cast<double>(items.size());
  }
  return acc;
}

EvalReport make_report(std::vector<ItemResult> items, int turns) {
  if (turns < 1) throw Error(ErrorCode::invalid_argument, "evaluation needs T >= 1");
  std::sort(items.begin(), items.end(),
            [](const auto& a, const auto& b) { return a.task_id < b.task_id; });
  EvalReport report;
  report.turns = turns;
  report.accuracy = accuracy_by_turn(items, turns);
  for (const auto& item : items) {
    if (item.aborted) report.aborted.push_back(item.task_id);
  }
  report.items = std::move(items);
  return report;
}

EvalReport report_from_solved_turns(const std::vector<std::optional<int>>& solved, int turns) {
  std::vector<ItemResult> items;
  items.reserve(solved.size());
  char id[32];
  for (std::size_t i = 0; i < solved.size(); ++i) {
    std::snprintf(id, sizeof id, "item-%06zu", i);
    ItemResult item;
    item.task_id = id;
    for (int t = 1; t <= turns; ++t) item.correct_at.push_back(solved[i] && *solved[i] <= t);
    items.push_back(std::move(item));
  }
  return make_report(std::move(items), turns);
}

ItemResult score_trace(const TaskItem& task, const RolloutTrace& trace, int turns,
                       Verifier* truth) {
  ItemResult item;
  item.task_id = task.id;
  item.source_dataset = task.source_dataset;
  item.correct_at.assign(static_cast<std::size_t>(turns), false);
  if (trace.status.kind == TraceStatus::Kind::aborted) {
    item.aborted = true;
    item.abort_reason = trace.status.abort_reason;
    return item;
  }
  // The answer standing after turn t is the last one given at or before t.
  bool standing = false;
  for (int t = 1; t <= turns; ++t) {
    if (static_cast<std::size_t>(t) <= trace.turns.size()) {
      const auto& turn = trace.turns[static_cast<std::size_t>(t - 1)];
      standing = truth ? truth->verify(task, turn).is_correct() : turn.feedback.is_correct();
    }
    item.correct_at[static_cast<std::size_t>(t - 1)] = standing;
  }
  return item;
}

EvalRun evaluate(const std::vector<TaskItem>& tasks, const RolloutEngine& engine,
                 Verifier& verifier, Verifier* truth, std::size_t workers) {
  const int turns = engine.config().policy.max_turns;
  std::vector<const TaskItem*> order;
  for (const auto& t : tasks) order.push_back(&t);
  std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) { return a->id < b->id; });

  std::vector<RolloutTrace> traces(order.size());
  std::vector<ItemResult> items(order.size());
  parallel_for(order.size(), workers, [&](std::size_t i) {
    traces[i] = engine.run_rollout(*order[i], verifier);
    items[i] = score_trace(*order[i], traces[i], turns, truth);
  });
  return EvalRun{make_report(std::move(items), turns), std::move(traces)};
}

std::string format_percent(double fraction, bool sign) {
  char buf[32];
  // Round half away from zero on the tenth of a percent.
  const double pct = std::round(fraction * 1000.0) / 10.0;
  std::snprintf(buf, sizeof buf, sign ? "%+.1f%%" : "%.1f%%", pct == 0.0 ? 0.0 : pct);
  return buf;
}

std::string format_summary(const EvalReport& report, int t1, int t2) {
  return format_percent(report.acc(t1)) + " / " + format_percent(report.acc(t2)) + " / " +
         format_percent(report.delta(t1, t2), true);
}

json report_to_json(const EvalReport& report) {
  json items = json::array();
  for (const auto& item : report.items) {
    json j{{"task_id", item.task_id},
           {"source_dataset", item.source_dataset},
           {"correct_at", item.correct_at},
           {"aborted", item.aborted}};
    if (item.aborted) j["abort_reason"] = item.abort_reason;
    items.push_back(std::move(j));
  }
  json out{{"turns", report.turns},
           {"n", report.items.size()},
           {"accuracy", report.accuracy},
           {"aborted", report.aborted},
           {"items", items}};
  if (report.turns >= 2) out["delta_1_2"] = report.delta(1, 2);
  return out;
}

void from_json(const json& j, ItemResult& v) {
  v.task_id = required<std::string>(j, "task_id");
  v.source_dataset = optional_or<std::string>(j, "source_dataset", "");
  v.correct_at = required<std::vector<bool>>(j, "correct_at");
  v.aborted = optional_or<bool>(j, "aborted", false);
  v.abort_reason = optional_or<std::string>(j, "abort_reason", "");
}

std::string report_to_table(const EvalReport& report) {
  std::ostringstream out;
  out << "items    " << report.items.size() << '\n';
  out << "aborted  " << report.aborted.size() << '\n';
  for (int t = 1; t <= report.turns; ++t) {
    out << "Acc@" << t << (t < 10 ? "    " : "   ") << format_percent(report.acc(t)) << '\n';
  }
  if (report.turns >= 2) out << "delta    " << format_percent(report.delta(1, 2), true) << '\n';
  return out.str();
}

std::string curve_to_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "turn,accuracy\n";
  char buf[32];
  for (int t = 1; t <= report.turns; ++t) {
    std::snprintf(buf, sizeof buf, "%.6f", report.acc(t));
    out << t << ',' << buf << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------

const std::array<ErrorType, 9> kErrorTaxonomy = {{
    {"1-1", "Mathematical Errors", "Calculation Error"},
    {"1-2", "Mathematical Errors", "Algorithm Error"},
    {"2-1", "Logic and Reasoning Errors", "Flawed Rationale Error"},
    {"2-2", "Logic and Reasoning Errors", "Internal Inconsistency"},
    {"3-1", "Instruction Violation", "Context Misinterpretation"},
    {"3-2", "Instruction Violation", "Incomplete or Irrelevant Response"},
    {"3-3", "Instruction Violation", "Format Discrepancy"},
    {"4-1", "Factual Errors", "Factual Errors"},
    {"5-1", "No Errors", "No Errors Detected"},
}};

const ErrorType* find_error_type(std::string_view code) {
  for (const auto& e : kErrorTaxonomy) {
    if (e.code == code) return &e;
  }
  return nullptr;
}

namespace {

std::optional<std::string> label_from_token(std::string token) {
  token = trim(token);
  while (!token.empty() && (token.front() == '"' || token.front() == '\'' || token.front() == '*')) {
    token.erase(token.begin());
  }
  static const std::regex code_re(R"(^([0-9])\s*-\s*([0-9])(?![0-9]))");
  std::smatch m;
  if (std::regex_search(token, m, code_re)) {
    const std::string code = m[1].str() + "-" + m[2].str();
    if (find_error_type(code)) return code;
    return std::nullopt;
  }
  const auto lowered = to_lower(trim(token));
  for (const auto& e : kErrorTaxonomy) {
    if (lowered == to_lower(e.fine)) return std::string(e.code);
  }
  return std::nullopt;
}

}  // namespace

std::optional<std::vector<std::string>> parse_error_labels(std::string_view reply) {
  std::string text(reply);
  std::string list;
  static const std::regex labels_line(R"(Labels?\s*:\s*([^\n]*))", std::regex::icase);
  static const std::regex bracketed(R"(\[([^\]]*)\])");
  std::smatch m;
  if (std::regex_search(text, m, labels_line)) {
    list = m[1].str();
    std::smatch b;
    if (std::regex_search(list, b, bracketed)) list = b[1].str();
  } else if (std::regex_search(text, m, bracketed)) {
    list = m[1].str();
  } else {
    return std::nullopt;
  }

  std::vector<std::string> labels;
  std::stringstream ss(list);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (trim(token).empty()) continue;
    auto code = label_from_token(token);
    if (!code) return std::nullopt;
    if (std::find(labels.begin(), labels.end(), *code) == labels.end()) labels.push_back(*code);
  }
  if (labels.empty()) return std::nullopt;
  return labels;
}

void to_json(json& j, const ErrorTag& v) {
  j = json{{"task_id", v.task_id},
           {"labels", v.labels},
           {"unlabeled", v.unlabeled},
           {"attempts", v.attempts}};
}

void from_json(const json& j, ErrorTag& v) {
  v.task_id = required<std::string>(j, "task_id");
  v.labels = required<std::vector<std::string>>(j, "labels");
  v.unlabeled = optional_or<bool>(j, "unlabeled", false);
  v.attempts = optional_or<int>(j, "attempts", 0);
  for (const auto& l : v.labels) {
    if (!find_error_type(l)) throw Error(ErrorCode::schema, "unknown error label '" + l + "'");
  }
}

ErrorTagger::ErrorTagger(std::shared_ptr<Gateway> gateway, const PromptLibrary& prompts,
                         std::string model)
    : gateway_(std::move(gateway)), prompts_(prompts), model_(std::move(model)) {
  if (!gateway_) throw Error(ErrorCode::config, "error tagger needs a gateway");
}

ErrorTag ErrorTagger::tag(std::string_view task_id, std::string_view question,
                          std::string_view thought, std::string_view reflection) const {
  const auto prompt = prompts_.error_tagging().render({{"question", std::string(question)},
                                                       {"thought", std::string(thought)},
                                                       {"reflection", std::string(reflection)}});
  ErrorTag tag;
  tag.task_id = std::string(task_id);
  for (int attempt = 0; attempt < 2; ++attempt) {
    ++tag.attempts;
    auto request = CompletionRequest::user(prompt, 0.0, static_cast<std::uint64_t>(attempt));
    request.model = model_;
    try {
      if (auto labels = parse_error_labels(gateway_->complete(request).text)) {
        tag.labels = std::move(*labels);
        return tag;
      }
    } catch (const Error&) {
      break;
    }
  }
  tag.unlabeled = true;
  return tag;
}

json tag_histogram(const std::vector<ErrorTag>& tags) {
  json fine = json::object();
  json coarse = json::object();
  for (const auto& e : kErrorTaxonomy) fine[std::string(e.code)] = 0;
  std::size_t unlabeled = 0, total = 0;
  for (const auto& t : tags) {
    if (t.unlabeled) {
      ++unlabeled;
      continue;
    }
    for (const auto& l : t.labels) {
      fine[l] = fine[l].get<std::size_t>() + 1;
      const std::string c(find_error_type(l)->coarse);
      coarse[c] = coarse.value(c, std::size_t{0}) + 1;
      ++total;
    }
  }
  return json{{"items", tags.size()},
              {"labels", total},
              {"unlabeled", unlabeled},
              {"fine", fine},
              {"coarse", coarse}};
}

// ---------------------------------------------------------------------------

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::invalid_argument, "embedding dimensions differ");
  }
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw Error(ErrorCode::invalid_argument, "pearson: length mismatch");
  if (x.size() < 2) return std::nullopt;
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  // Relative threshold: sums of identical doubles can leave rounding residue.
  const double eps = 1e-12;
  if (sxx <= eps * std::max(1.0, mx * mx) * n || syy <= eps * std::max(1.0, my * my) * n) {
    return std::nullopt;
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<SimilarityBin> bin_by_similarity(const std::vector<double>& similarity,
                                             const std::vector<double>& correctness,
                                             std::size_t bins) {
  if (bins == 0) throw Error(ErrorCode::invalid_argument, "need at least one bin");
  std::vector<SimilarityBin> out(bins);
  if (similarity.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(similarity.begin(), similarity.end());
  const double lo = *lo_it, hi = *hi_it;
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    out[b].lo = lo + width * static_cast<double>(b);
    out[b].hi = b + 1 == bins ? hi : lo + width * static_cast<double>(b + 1);
  }
  std::vector<double> sums(bins, 0.0);
  for (std::size_t i = 0; i < similarity.size(); ++i) {
    std::size_t b = 0;
    if (width > 0) {
      b = static_cast<std::size_t>((similarity[i] - lo) / width);
      b = std::min(b, bins - 1);
    }
    ++out[b].count;
    sums[b] += correctness[i];
  }
  for (std::size_t b = 0; b < bins; ++b) {
    if (out[b].count > 0) out[b].mean_accuracy = sums[b] / static_cast<double>(out[b].count);
  }
  return out;
}

CorrelationResult correlate(const std::vector<CorrelationItem>& items, Embedder& embedder,
                            std::size_t bins) {
  if (items.size() < 3) {
    throw Error(ErrorCode::invalid_argument,
                "correlation needs at least 3 items, got " + std::to_string(items.size()));
  }
  std::vector<std::string> texts;
  texts.reserve(items.size() * 2);
  for (const auto& item : items) {
    texts.push_back(item.reflection);
    texts.push_back(item.thought);
  }
  const auto vectors = embedder.embed(texts);
  if (vectors.size() != texts.size()) {
    throw Error(ErrorCode::protocol, "embedder returned " + std::to_string(vectors.size()) +
                                         " vectors for " + std::to_string(texts.size()) + " texts");
  }
  CorrelationResult result;
  for (std::size_t i = 0; i < items.size(); ++i) {
    result.similarities.push_back(cosine_similarity(vectors[2 * i], vectors[2 * i + 1]));
    result.correctness.push_back(items[i].correct ? 1.0 : 0.0);
  }
  result.r = pearson(result.similarities, result.correctness);
  result.bins = bin_by_similarity(result.similarities, result.correctness, bins);
  return result;
}

json correlation_to_json(const CorrelationResult& result) {
  json bins = json::array();
  for (const auto& b : result.bins) {
    json j{{"lo", b.lo}, {"hi", b.hi}, {"count", b.count}};
    j["mean_accuracy"] = b.mean_accuracy ? json(*b.mean_accuracy) : json(nullptr);
    bins.push_back(std::move(j));
  }
  return json{{"n", result.similarities.size()},
              {"pearson_r", result.r ? json(*result.r) : json(nullptr)},
              {"pearson_defined", result.r.has_value()},
              {"similarities", result.similarities},
              {"bins", bins}};
}

}  // namespace reflectevo
