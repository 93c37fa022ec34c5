// SPDX-License-Identifier: Apache-2.0
#include "reflectevo/config.hpp"

#include <set>
#include <sstream>

#include <toml.hpp>

#include "reflectevo/error.hpp"

namespace reflectevo {

namespace {

class TableReader {
public:
  TableReader(const toml::table* table, std::string name, std::set<std::string> allowed)
      : table_(table), name_(std::move(name)) {
    if (!table_) return;
    for (const auto& [key, node] : *table_) {
      const std::string k(key.str());
      if (!allowed.count(k)) {
        throw Error(ErrorCode::config, "unknown key '" + k + "' in [" + name_ + "]");
      }
    }
  }

  template <typename T>
  void read(const char* key, T& out) const {
    if (!table_) return;
    const auto* node = table_->get(key);
    if (!node) return;
    if constexpr (std::is_same_v<T, bool>) {
      if (auto v = node->value_exact<bool>()) {
        out = *v;
        return;
      }
      fail(key, "a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (auto v = node->value_exact<std::string>()) {
        out = *v;
        return;
      }
      fail(key, "a string");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (auto v = node->value<double>()) {
        out = static_cast<T>(*v);
        return;
      }
      fail(key, "a number");
    } else {
      if (auto v = node->value_exact<std::int64_t>()) {
        if (*v < 0 && std::is_unsigned_v<T>) fail(key, "a non-negative integer");
        out = static_cast<T>(*v);
        return;
      }
      fail(key, "an integer");
    }
  }

  const toml::table* sub(const char* key) const {
    if (!table_) return nullptr;
    const auto* node = table_->get(key);
    if (!node) return nullptr;
    if (!node->is_table()) fail(key, "a table");
    return node->as_table();
  }

private:
  [[noreturn]] void fail(const char* key, const char* expected) const {
    throw Error(ErrorCode::config,
                "[" + name_ + "] " + key + " must be " + expected);
  }

  const toml::table* table_;
  std::string name_;
};

const toml::table* table_of(const toml::table& root, const char* name) {
  const auto* node = root.get(name);
  if (!node) return nullptr;
  if (!node->is_table()) throw Error(ErrorCode::config, std::string("'") + name + "' must be a table");
  return node->as_table();
}

void read_endpoint(const toml::table& root, const char* name, EndpointConfig& e) {
  TableReader r(table_of(root, name), name, {"base_url", "model", "timeout_s"});
  r.read("base_url", e.base_url);
  r.read("model", e.model);
  r.read("timeout_s", e.timeout_s);
}

}  // namespace

void PipelineConfig::validate() const {
  policy.validate();
  curation.validate();
  if (max_in_flight < 1) throw Error(ErrorCode::config, "[run] max_in_flight must be >= 1");
  if (max_retries < 0) throw Error(ErrorCode::config, "[run] max_retries must be >= 0");
  if (backoff_ms < 0) throw Error(ErrorCode::config, "[run] backoff_ms must be >= 0");
  if (eval.bins < 1) throw Error(ErrorCode::config, "[eval] bins must be >= 1");
  if (eval.verifier != "oracle" && eval.verifier != "self_judgment") {
    throw Error(ErrorCode::config, "[eval] verifier must be \"oracle\" or \"self_judgment\", got \"" +
                                       eval.verifier + "\"");
  }
  for (const auto* e : {&endpoint, &judge, &embedder}) {
    if (e->timeout_s < 1) throw Error(ErrorCode::config, "endpoint timeout_s must be >= 1");
  }
  if (runner.timeout_s < 1) throw Error(ErrorCode::config, "[verifier] timeout_s must be >= 1");
  if (!runner.command.empty() && runner.command.find("{file}") == std::string::npos) {
    throw Error(ErrorCode::config, "[verifier] command must contain {file}");
  }
  for (const auto& [dataset, cap] : policy.per_dataset_caps) {
    if (!is_known_dataset(dataset)) {
      throw Error(ErrorCode::config, "[policy.caps] unknown dataset name '" + dataset +
                                         "' (expected logiqa, math, mbpp or bigbench/<subset>)");
    }
  }
}

PipelineConfig default_config() { return PipelineConfig{}; }

PipelineConfig parse_config(std::string_view toml_text, std::string_view source) {
  toml::table root;
  try {
    root = toml::parse(toml_text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << source << ":" << e.source().begin.line << ":" << e.source().begin.column << ": "
        << e.description();
    throw Error(ErrorCode::config, msg.str());
  }
  static const std::set<std::string> tables = {"endpoint", "judge",  "embedder", "policy", "curation",
                                               "export",   "eval",   "verifier", "run"};
  for (const auto& [key, node] : root) {
    if (!tables.count(std::string(key.str()))) {
      throw Error(ErrorCode::config, "unknown table [" + std::string(key.str()) + "]");
    }
  }

  PipelineConfig c;
  read_endpoint(root, "endpoint", c.endpoint);
  c.judge.timeout_s = 0;  // 0 = inherit, resolved below
  read_endpoint(root, "judge", c.judge);
  if (c.judge.timeout_s == 0) c.judge.timeout_s = c.endpoint.timeout_s;
  read_endpoint(root, "embedder", c.embedder);

  {
    TableReader r(table_of(root, "policy"), "policy",
                  {"k", "m", "max_turns", "step_budget", "sample_temperature", "eval_temperature",
                   "max_new_tokens", "seed", "selection", "caps"});
    auto& p = c.policy;
    r.read("k", p.k);
    r.read("m", p.m);
    r.read("max_turns", p.max_turns);
    r.read("step_budget", p.step_budget);
    r.read("sample_temperature", p.sample_temperature);
    r.read("eval_temperature", p.eval_temperature);
    r.read("max_new_tokens", p.max_new_tokens);
    std::int64_t seed = 0;
    r.read("seed", seed);
    p.seed = static_cast<std::uint64_t>(seed);
    std::string selection(to_string(p.selection));
    r.read("selection", selection);
    p.selection = parse_selection_mode(selection);
    if (const auto* caps = r.sub("caps")) {
      for (const auto& [dataset, node] : *caps) {
        const auto v = node.value_exact<std::int64_t>();
        if (!v || *v < 0) {
          throw Error(ErrorCode::config, "[policy.caps] " + std::string(dataset.str()) +
                                             " must be a non-negative integer");
        }
        p.per_dataset_caps[std::string(dataset.str())] = static_cast<std::size_t>(*v);
      }
    }
  }
  {
    TableReader r(table_of(root, "curation"), "curation", {"pairing", "cap", "seed", "debias"});
    std::string mode(to_string(c.curation.mode));
    r.read("pairing", mode);
    c.curation.mode = parse_pairing_mode(mode);
    r.read("cap", c.curation.cap);
    std::int64_t seed = 0;
    r.read("seed", seed);
    c.curation.seed = static_cast<std::uint64_t>(seed);
    r.read("debias", c.curation.debias);
  }
  {
    TableReader r(table_of(root, "export"), "export", {"instruction_prompt", "dpo_with_answer"});
    r.read("instruction_prompt", c.export_instruction_prompt);
    r.read("dpo_with_answer", c.dpo_with_answer);
  }
  {
    TableReader r(table_of(root, "eval"), "eval",
                  {"turns", "style", "instruction_id", "verifier", "bins"});
    int turns = c.policy.max_turns;
    r.read("turns", turns);
    c.policy.max_turns = turns;
    std::string style(to_string(c.eval.style));
    r.read("style", style);
    c.eval.style = parse_reflection_style(style);
    r.read("instruction_id", c.eval.instruction_id);
    r.read("verifier", c.eval.verifier);
    r.read("bins", c.eval.bins);
  }
  {
    TableReader r(table_of(root, "verifier"), "verifier", {"command", "timeout_s", "suffix"});
    r.read("command", c.runner.command);
    r.read("timeout_s", c.runner.timeout_s);
    r.read("suffix", c.runner.suffix);
  }
  {
    TableReader r(table_of(root, "run"), "run",
                  {"prompts_dir", "max_in_flight", "max_retries", "backoff_ms"});
    r.read("prompts_dir", c.prompts_dir);
    r.read("max_in_flight", c.max_in_flight);
    r.read("max_retries", c.max_retries);
    r.read("backoff_ms", c.backoff_ms);
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_text_file(path), path.string());
}

EndpointConfig resolved_judge(const PipelineConfig& config) {
  EndpointConfig j = config.judge;
  if (j.base_url.empty()) j.base_url = config.endpoint.base_url;
  if (j.model.empty()) j.model = config.endpoint.model;
  return j;
}

json config_to_json(const PipelineConfig& c) {
  auto endpoint = [](const EndpointConfig& e) {
    return json{{"base_url", e.base_url}, {"model", e.model}, {"timeout_s", e.timeout_s}};
  };
  json caps = json::object();
  for (const auto& [d, n] : c.policy.per_dataset_caps) caps[d] = n;
  const auto& p = c.policy;
  return json{
      {"endpoint", endpoint(c.endpoint)},
      {"judge", endpoint(resolved_judge(c))},
      {"embedder", endpoint(c.embedder)},
      {"policy",
       {{"k", p.k},
        {"m", p.m},
        {"max_turns", p.max_turns},
        {"step_budget", p.step_budget},
        {"sample_temperature", p.sample_temperature},
        {"eval_temperature", p.eval_temperature},
        {"max_new_tokens", p.max_new_tokens},
        {"seed", p.seed},
        {"selection", to_string(p.selection)},
        {"caps", caps}}},
      {"curation",
       {{"pairing", to_string(c.curation.mode)},
        {"cap", c.curation.cap},
        {"seed", c.curation.seed},
        {"debias", c.curation.debias}}},
      {"export",
       {{"instruction_prompt", c.export_instruction_prompt},
        {"dpo_with_answer", c.dpo_with_answer}}},
      {"eval",
       {{"style", to_string(c.eval.style)},
        {"instruction_id", c.eval.instruction_id},
        {"verifier", c.eval.verifier},
        {"bins", c.eval.bins}}},
      {"verifier",
       {{"command", c.runner.command}, {"timeout_s", c.runner.timeout_s}, {"suffix", c.runner.suffix}}},
      {"run",
       {{"prompts_dir", c.prompts_dir},
        {"max_in_flight", c.max_in_flight},
        {"max_retries", c.max_retries},
        {"backoff_ms", c.backoff_ms}}},
  };
}

std::string config_hash(const PipelineConfig& config) {
  return sha256_hex(config_to_json(config).dump());
}

}  // namespace reflectevo
