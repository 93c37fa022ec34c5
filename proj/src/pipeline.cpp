// SPDX-License-Identifier: Apache-2.0
#include "reflectevo/pipeline.hpp"

#include <cstdlib>

#include "reflectevo/error.hpp"

namespace reflectevo {

std::string BackendChoice::describe() const {
  switch (kind) {
    case Kind::http: return "http";
    case Kind::scripted: return "scripted:" + file.string();
    case Kind::echo: return "echo";
    case Kind::replay: return "replay:" + file.string();
  }
  return "http";
}

std::shared_ptr<ChatBackend> make_backend(const BackendChoice& choice,
                                          const EndpointConfig& endpoint) {
  switch (choice.kind) {
    case BackendChoice::Kind::scripted:
      return ScriptedBackend::from_file(choice.file);
    case BackendChoice::Kind::echo:
      return std::make_shared<EchoBackend>();
    case BackendChoice::Kind::replay:
      return std::make_shared<ReplayBackend>(choice.file);
    case BackendChoice::Kind::http:
      break;
  }
  if (endpoint.base_url.empty()) {
    throw Error(ErrorCode::config,
                "no endpoint configured: set base_url under [endpoint] in the config, "
                "or pass --mock <script.json> / --echo for an offline run");
  }
  if (endpoint.model.empty()) {
    throw Error(ErrorCode::config, "no model configured: set model under [endpoint]");
  }
  HttpEndpoint http;
  http.base_url = endpoint.base_url;
  if (const char* key = std::getenv(std::string(kApiKeyEnv).c_str())) http.api_key = key;
  http.timeout = std::chrono::seconds(endpoint.timeout_s);
  return std::make_shared<HttpBackend>(std::move(http));
}

std::shared_ptr<Gateway> make_gateway(std::shared_ptr<ChatBackend> backend,
                                      const PipelineConfig& config, bool replaying,
                                      std::optional<std::filesystem::path> log_path) {
  GatewayOptions options;
  options.max_retries = config.max_retries;
  options.backoff_base = std::chrono::milliseconds(replaying ? 0 : config.backoff_ms);
  options.max_in_flight = config.max_in_flight;
  options.replay_log = std::move(log_path);
  return std::make_shared<Gateway>(std::move(backend), std::move(options));
}

std::optional<ExternalRunner> make_runner(const PipelineConfig& config) {
  if (config.runner.command.empty()) return std::nullopt;
  return ExternalRunner{config.runner.command, std::chrono::seconds(config.runner.timeout_s),
                        config.runner.suffix};
}

std::unique_ptr<Verifier> make_verifier(const PipelineConfig& config, std::string_view name,
                                        std::shared_ptr<Gateway> gateway,
                                        const PromptLibrary& prompts) {
  if (name == "oracle") return std::make_unique<OracleVerifier>(make_runner(config));
  if (name == "self_judgment") {
    return std::make_unique<SelfJudgmentVerifier>(std::move(gateway), prompts,
                                                  config.endpoint.model);
  }
  throw Error(ErrorCode::config, "unknown verifier '" + std::string(name) +
                                     "' (expected oracle or self_judgment)");
}

json run_generate(const std::vector<TaskItem>& tasks, const PipelineConfig& config,
                  const PromptLibrary& prompts, std::shared_ptr<Gateway> gateway,
                  const std::filesystem::path& out) {
  validate_tasks(tasks);
  const InstructionPool pool(prompts);
  RolloutConfig rc;
  rc.policy = config.policy;
  rc.model = config.endpoint.model;
  const RolloutEngine engine(gateway, prompts, pool, rc);
  OracleVerifier verifier(make_runner(config));
  const auto result = generate_pool(tasks, engine, pool, verifier, config.max_in_flight);

  write_records(out / "candidates.jsonl", result.samples);
  write_records(out / "aborts.jsonl", result.aborts);
  write_records(out / "first_turns.jsonl", result.first_turns);

  json selected = json::object();
  for (const auto& [key, ids] : result.selected_instructions) selected[key] = ids;
  write_text_file(out / "instructions.json", selected.dump(2) + "\n");

  std::size_t correct = 0;
  for (const auto& s : result.samples) correct += s.outcome == Outcome::correct;
  return json{{"tasks", tasks.size()},
              {"failed_first_turns", result.failed_tasks},
              {"first_turn_aborts", result.first_turn_aborts},
              {"candidates", result.samples.size()},
              {"correct_candidates", correct},
              {"aborts", result.aborts.size()},
              {"expected_slots", result.expected_candidates(config.policy)}};
}

json run_curate(const std::vector<CandidateSample>& pool, const PipelineConfig& config,
                const PromptLibrary& prompts, std::shared_ptr<Gateway> judge_gateway,
                const std::filesystem::path& out) {
  for (const auto& s : pool) {
    if (auto problems = validate_candidate(s); !problems.empty()) {
      throw Error(ErrorCode::schema, "candidate for task '" + s.task_id + "': " + problems.front());
    }
  }
  const auto d_plus = build_d_plus(pool);
  const auto d_pm = build_d_pm(pool, config.curation);
  const PreferenceJudge judge(std::move(judge_gateway), prompts, resolved_judge(config).model);
  const auto pref = build_d_pref(d_plus, config.curation, judge, config.max_in_flight);

  if (auto problems = check_curation(pool, d_plus, d_pm, pref.pairs); !problems.empty()) {
    throw Error(ErrorCode::schema, "curation invariant violated: " + problems.front());
  }
  write_records(out / "d_plus.jsonl", d_plus);
  write_records(out / "d_pm.jsonl", d_pm);
  write_records(out / "d_pref.jsonl", pref.pairs);
  json counts{{"pool", pool.size()},
              {"d_plus", d_plus.size()},
              {"d_pm", d_pm.size()},
              {"d_pref", pref.pairs.size()},
              {"judge_candidate_pairs", pref.candidate_pairs},
              {"judge_ties", pref.ties},
              {"pairing", to_string(config.curation.mode)},
              {"debias", config.curation.debias}};
  write_text_file(out / "curation.json", counts.dump(2) + "\n");
  return counts;
}

json run_export(const std::filesystem::path& curated, const PipelineConfig& config,
                const PromptLibrary& prompts, const std::vector<TaskItem>& tasks,
                const std::filesystem::path& out) {
  const auto d_plus = read_records<CandidateSample>(curated / "d_plus.jsonl");
  const auto d_pm = read_records<PreferencePair>(curated / "d_pm.jsonl");
  const auto d_pref = read_records<PreferencePair>(curated / "d_pref.jsonl");

  ExportOptions options;
  options.use_instruction_prompt = config.export_instruction_prompt;
  options.dpo_with_answer = config.dpo_with_answer;
  for (const auto& t : tasks) {
    if (!t.fewshot.empty()) options.fewshot[t.id] = t.fewshot;
  }
  const InstructionPool pool(prompts);
  const Exporter exporter(prompts, &pool, std::move(options));

  const auto s1 = exporter.setting1(d_plus);
  const auto [s21, s22] = exporter.setting2(d_plus);
  const auto s3 = exporter.dpo(d_pm, DpoSetting::outcome);
  const auto s4 = exporter.dpo(d_pref, DpoSetting::judged);

  json files = json::array();
  auto record = [&](const std::vector<std::filesystem::path>& paths) {
    for (const auto& p : paths) files.push_back(std::filesystem::relative(p, out).generic_string());
  };
  record(write_export(out, "setting1", s1));
  record(write_export(out, "setting2.1", s21));
  record(write_export(out, "setting2.2", s22));
  record(write_export(out, "setting3", s3));
  record(write_export(out, "setting4", s4));
  return json{{"setting1", s1.size()}, {"setting2.1", s21.size()}, {"setting2.2", s22.size()},
              {"setting3", s3.size()}, {"setting4", s4.size()},    {"files", files}};
}

}  // namespace reflectevo
