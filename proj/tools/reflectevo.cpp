// SPDX-License-Identifier: Apache-2.0
//
// reflectevo: command-line driver for the reflection data pipeline.
//
// Every command writes into a run directory (--out) holding its outputs,
// manifest.json, copies of its inputs under inputs/, and replay.jsonl with
// every model request and response. `replay --manifest RUN/manifest.json`
// re-executes a run offline from those files.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "reflectevo/config.hpp"
#include "reflectevo/error.hpp"
#include "reflectevo/eval.hpp"
#include "reflectevo/pipeline.hpp"

namespace fs = std::filesystem;
using namespace reflectevo;

namespace {

constexpr const char* kVersion = "0.1.0";

// Flags shared by all commands; each command registers the subset it uses.
struct Options {
  std::string command;
  std::string config;
  std::string out;
  std::string mock;
  bool echo = false;
  std::string replay_log;  // set by `replay`, never by users

  std::string tasks;
  std::string pool;
  std::string curated;
  std::string traces;
  std::string d_plus;

  std::optional<int> turns, m, k;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> style, verifier, instruction, pairing, selection;
  std::optional<std::size_t> cap, bins, workers;
  bool no_debias = false;
  bool dpo_with_answer = false;
  bool instruction_prompt = false;
};

// Options that name input files or directories; copied into RUN/inputs/.
const std::vector<std::pair<const char*, std::string Options::*>> kInputs = {
    {"config", &Options::config}, {"mock", &Options::mock},       {"tasks", &Options::tasks},
    {"pool", &Options::pool},     {"curated", &Options::curated}, {"traces", &Options::traces},
    {"d_plus", &Options::d_plus},
};

json options_to_json(const Options& o) {
  json j{{"command", o.command}};
  auto put_str = [&](const char* k, const std::string& v) {
    if (!v.empty()) j[k] = v;
  };
  for (const auto& [name, member] : kInputs) put_str(name, o.*member);
  if (o.echo) j["echo"] = true;
  auto put_opt = [&](const char* k, const auto& v) {
    if (v) j[k] = *v;
  };
  put_opt("turns", o.turns);
  put_opt("m", o.m);
  put_opt("k", o.k);
  put_opt("seed", o.seed);
  put_opt("style", o.style);
  put_opt("verifier", o.verifier);
  put_opt("instruction", o.instruction);
  put_opt("pairing", o.pairing);
  put_opt("selection", o.selection);
  put_opt("cap", o.cap);
  put_opt("bins", o.bins);
  put_opt("workers", o.workers);
  if (o.no_debias) j["no_debias"] = true;
  if (o.dpo_with_answer) j["dpo_with_answer"] = true;
  if (o.instruction_prompt) j["instruction_prompt"] = true;
  return j;
}

Options options_from_json(const json& j) {
  Options o;
  o.command = j.at("command").get<std::string>();
  for (const auto& [name, member] : kInputs) o.*member = j.value(name, "");
  o.echo = j.value("echo", false);
  auto get_opt = [&](const char* k, auto& v) {
    if (j.contains(k)) v = j[k].get<typename std::decay_t<decltype(v)>::value_type>();
  };
  get_opt("turns", o.turns);
  get_opt("m", o.m);
  get_opt("k", o.k);
  get_opt("seed", o.seed);
  get_opt("style", o.style);
  get_opt("verifier", o.verifier);
  get_opt("instruction", o.instruction);
  get_opt("pairing", o.pairing);
  get_opt("selection", o.selection);
  get_opt("cap", o.cap);
  get_opt("bins", o.bins);
  get_opt("workers", o.workers);
  o.no_debias = j.value("no_debias", false);
  o.dpo_with_answer = j.value("dpo_with_answer", false);
  o.instruction_prompt = j.value("instruction_prompt", false);
  return o;
}

PipelineConfig resolve_config(const Options& o) {
  auto c = o.config.empty() ? default_config() : load_config(o.config);
  if (o.turns) c.policy.max_turns = *o.turns;
  if (o.m) c.policy.m = *o.m;
  if (o.k) c.policy.k = *o.k;
  if (o.seed) {
    c.policy.seed = *o.seed;
    c.curation.seed = *o.seed;
  }
  if (o.selection) c.policy.selection = parse_selection_mode(*o.selection);
  if (o.style) c.eval.style = parse_reflection_style(*o.style);
  if (o.verifier) c.eval.verifier = *o.verifier;
  if (o.instruction) c.eval.instruction_id = *o.instruction;
  if (o.pairing) c.curation.mode = parse_pairing_mode(*o.pairing);
  if (o.cap) c.curation.cap = *o.cap;
  if (o.no_debias) c.curation.debias = false;
  if (o.dpo_with_answer) c.dpo_with_answer = true;
  if (o.instruction_prompt) c.export_instruction_prompt = true;
  if (o.bins) c.eval.bins = *o.bins;
  if (o.workers) c.max_in_flight = *o.workers;
  c.validate();
  return c;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void require(const std::string& value, const char* flag, const std::string& command) {
  if (value.empty()) {
    throw Error(ErrorCode::invalid_argument, command + " needs --" + std::string(flag));
  }
}

std::string hash_path(const fs::path& p) {
  if (fs::is_directory(p)) {
    std::string acc;
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(p)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      acc += fs::relative(f, p).generic_string() + ":" + sha256_hex(read_text_file(f)) + "\n";
    }
    return sha256_hex(acc);
  }
  return sha256_hex(read_text_file(p));
}

/// Copies each input into RUN/inputs/ and records where it came from.
json copy_inputs(const Options& o, const fs::path& run) {
  json inputs = json::object();
  for (const auto& [name, member] : kInputs) {
    const std::string& src = o.*member;
    if (src.empty()) continue;
    if (!fs::exists(src)) throw Error(ErrorCode::io, "--" + std::string(name) + ": no such path " + src);
    const fs::path dest = run / "inputs" / name;
    fs::create_directories(dest.parent_path());
    if (fs::absolute(src) != fs::absolute(dest)) {
      fs::remove_all(dest);
      if (fs::is_directory(src)) {
        fs::copy(src, dest, fs::copy_options::recursive);
      } else {
        fs::copy_file(src, dest);
      }
    }
    inputs[name] = json{{"source", src}, {"copy", fs::path("inputs") / name}, {"sha256", hash_path(dest)}};
  }
  return inputs;
}

struct Context {
  Options opts;
  PipelineConfig config;
  fs::path run;
  std::unique_ptr<PromptLibrary> prompts;
  BackendChoice backend;

  bool replaying() const { return backend.kind == BackendChoice::Kind::replay; }

  std::shared_ptr<Gateway> gateway(const EndpointConfig& endpoint) const {
    return make_gateway(make_backend(backend, endpoint), config, replaying(), run / "replay.jsonl");
  }
};

std::vector<TaskItem> tasks_or_empty(const Options& o) {
  return o.tasks.empty() ? std::vector<TaskItem>{} : load_tasks(o.tasks);
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

json cmd_generate(Context& ctx) {
  require(ctx.opts.tasks, "tasks", "generate");
  const auto tasks = load_tasks(ctx.opts.tasks);
  return run_generate(tasks, ctx.config, *ctx.prompts, ctx.gateway(ctx.config.endpoint), ctx.run);
}

json cmd_curate(Context& ctx) {
  require(ctx.opts.pool, "pool", "curate");
  const auto pool = read_records<CandidateSample>(ctx.opts.pool);
  return run_curate(pool, ctx.config, *ctx.prompts, ctx.gateway(resolved_judge(ctx.config)), ctx.run);
}

json cmd_export(Context& ctx) {
  require(ctx.opts.curated, "curated", "export");
  return run_export(ctx.opts.curated, ctx.config, *ctx.prompts, tasks_or_empty(ctx.opts),
                    ctx.run / "exports");
}

json cmd_stats(Context& ctx) {
  require(ctx.opts.pool, "pool", "stats");
  const auto pool = read_records<CandidateSample>(ctx.opts.pool);
  const auto d_plus =
      ctx.opts.d_plus.empty() ? build_d_plus(pool) : read_records<CandidateSample>(ctx.opts.d_plus);
  const auto stats = compute_stats(pool, d_plus);
  const auto table = stats_to_table(stats);
  write_text_file(ctx.run / "stats.json", stats_to_json(stats).dump(2) + "\n");
  write_text_file(ctx.run / "stats.txt", table);
  std::cout << table;
  return json{{"pool", pool.size()}, {"d_plus", d_plus.size()}, {"categories", stats.categories.size()}};
}

json cmd_eval(Context& ctx) {
  require(ctx.opts.tasks, "tasks", "eval");
  const auto tasks = load_tasks(ctx.opts.tasks);
  validate_tasks(tasks);
  const InstructionPool pool(*ctx.prompts);
  RolloutConfig rc;
  rc.policy = ctx.config.policy;
  rc.model = ctx.config.endpoint.model;
  rc.style = ctx.config.eval.style;
  rc.instruction_id = ctx.config.eval.instruction_id;
  auto gateway = ctx.gateway(ctx.config.endpoint);
  const RolloutEngine engine(gateway, *ctx.prompts, pool, rc);

  auto verifier = make_verifier(ctx.config, ctx.config.eval.verifier, gateway, *ctx.prompts);
  std::unique_ptr<Verifier> truth;
  if (verifier->kind() != VerifierKind::oracle) {
    truth = make_verifier(ctx.config, "oracle", gateway, *ctx.prompts);
  }
  const auto run = evaluate(tasks, engine, *verifier, truth.get(), ctx.config.max_in_flight);

  write_records(ctx.run / "traces.jsonl", run.traces);
  auto report = report_to_json(run.report);
  report["verifier"] = ctx.config.eval.verifier;
  report["style"] = to_string(ctx.config.eval.style);
  write_text_file(ctx.run / "report.json", report.dump(2) + "\n");
  write_text_file(ctx.run / "report.txt", report_to_table(run.report));
  write_text_file(ctx.run / "curve.csv", curve_to_csv(run.report));
  std::cout << report_to_table(run.report);
  if (run.report.turns >= 2) std::cout << format_summary(run.report) << '\n';
  return json{{"tasks", tasks.size()},
              {"turns", run.report.turns},
              {"aborted", run.report.aborted.size()},
              {"accuracy", run.report.accuracy}};
}

struct TextTriple {
  std::string task_id, question, thought, reflection;
};

/// (question, first thought, reflection) triples from a pool or from traces.
std::vector<TextTriple> load_triples(const Options& o) {
  std::vector<TextTriple> out;
  if (!o.pool.empty()) {
    for (const auto& s : read_records<CandidateSample>(o.pool)) {
      out.push_back({s.task_id, s.question, s.first_scratchpad, s.reflection.text});
    }
    return out;
  }
  if (o.traces.empty() || o.tasks.empty()) {
    throw Error(ErrorCode::invalid_argument, "needs --pool, or --traces together with --tasks");
  }
  std::map<std::string, TaskItem> by_id;
  for (auto& t : load_tasks(o.tasks)) by_id[t.id] = std::move(t);
  for (const auto& trace : read_records<RolloutTrace>(o.traces)) {
    if (trace.reflections.empty()) continue;
    auto it = by_id.find(trace.task_id);
    if (it == by_id.end()) {
      throw Error(ErrorCode::invalid_argument, "trace for unknown task '" + trace.task_id + "'");
    }
    out.push_back({trace.task_id, it->second.question, trace.turns.front().scratchpad,
                   trace.reflections.front().text});
  }
  return out;
}

json cmd_tag_errors(Context& ctx) {
  const auto triples = load_triples(ctx.opts);
  const ErrorTagger tagger(ctx.gateway(resolved_judge(ctx.config)), *ctx.prompts,
                           resolved_judge(ctx.config).model);
  std::vector<ErrorTag> tags(triples.size());
  parallel_for(triples.size(), ctx.config.max_in_flight, [&](std::size_t i) {
    const auto& t = triples[i];
    tags[i] = tagger.tag(t.task_id, t.question, t.thought, t.reflection);
  });
  const auto histogram = tag_histogram(tags);
  write_records(ctx.run / "tags.jsonl", tags);
  write_text_file(ctx.run / "histogram.json", histogram.dump(2) + "\n");
  std::cout << histogram.dump(2) << '\n';
  return json{{"items", tags.size()}, {"unlabeled", histogram["unlabeled"]}};
}

json cmd_correlate(Context& ctx) {
  std::vector<CorrelationItem> items;
  const auto& o = ctx.opts;
  if (!o.pool.empty()) {
    for (const auto& s : read_records<CandidateSample>(o.pool)) {
      items.push_back({s.task_id, s.reflection.text, s.corrected_scratchpad,
                       s.outcome == Outcome::correct});
    }
  } else {
    if (o.traces.empty() || o.tasks.empty()) {
      throw Error(ErrorCode::invalid_argument, "correlate needs --pool, or --traces with --tasks");
    }
    std::map<std::string, TaskItem> by_id;
    for (auto& t : load_tasks(o.tasks)) by_id[t.id] = std::move(t);
    OracleVerifier oracle(make_runner(ctx.config));
    for (const auto& trace : read_records<RolloutTrace>(o.traces)) {
      if (trace.turns.size() < 2 || trace.reflections.empty()) continue;
      auto it = by_id.find(trace.task_id);
      if (it == by_id.end()) {
        throw Error(ErrorCode::invalid_argument, "trace for unknown task '" + trace.task_id + "'");
      }
      items.push_back({trace.task_id, trace.reflections.front().text, trace.turns[1].scratchpad,
                       oracle.verify(it->second, trace.turns[1]).is_correct()});
    }
  }
  std::unique_ptr<Embedder> embedder;
  if (ctx.config.embedder.base_url.empty()) {
    embedder = std::make_unique<HashingEmbedder>();
  } else {
    HttpEndpoint endpoint;
    endpoint.base_url = ctx.config.embedder.base_url;
    if (const char* key = std::getenv(std::string(kApiKeyEnv).c_str())) endpoint.api_key = key;
    endpoint.timeout = std::chrono::seconds(ctx.config.embedder.timeout_s);
    embedder = std::make_unique<HttpEmbedder>(endpoint, ctx.config.embedder.model);
  }
  const auto result = correlate(items, *embedder, ctx.config.eval.bins);
  auto out = correlation_to_json(result);
  out["embedder"] = ctx.config.embedder.base_url.empty() ? "hashing" : "http";
  write_text_file(ctx.run / "correlation.json", out.dump(2) + "\n");
  std::cout << "n = " << items.size() << ", pearson r = "
            << (result.r ? std::to_string(*result.r) : std::string("undefined (zero variance)"))
            << '\n';
  return json{{"items", items.size()}, {"pearson_defined", result.r.has_value()}};
}

json dispatch(Context& ctx) {
  const auto& c = ctx.opts.command;
  if (c == "generate") return cmd_generate(ctx);
  if (c == "curate") return cmd_curate(ctx);
  if (c == "export") return cmd_export(ctx);
  if (c == "stats") return cmd_stats(ctx);
  if (c == "eval") return cmd_eval(ctx);
  if (c == "tag-errors") return cmd_tag_errors(ctx);
  if (c == "correlate") return cmd_correlate(ctx);
  throw Error(ErrorCode::invalid_argument, "unknown command '" + c + "'");
}

void execute(Options opts, const std::vector<std::string>& argv) {
  require(opts.out, "out", opts.command);
  const auto started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();

  Context ctx;
  ctx.run = opts.out;
  fs::create_directories(ctx.run);
  const auto inputs = copy_inputs(opts, ctx.run);
  if (!opts.replay_log.empty()) {
    ctx.backend = {BackendChoice::Kind::replay, opts.replay_log};
  } else if (!opts.mock.empty()) {
    ctx.backend = {BackendChoice::Kind::scripted, opts.mock};
  } else if (opts.echo) {
    ctx.backend = {BackendChoice::Kind::echo, {}};
  }
  // A fresh log per run; replay runs write their own.
  fs::remove(ctx.run / "replay.jsonl");

  ctx.opts = opts;
  ctx.config = resolve_config(opts);
  ctx.prompts = std::make_unique<PromptLibrary>(PromptLibrary::load(
      ctx.config.prompts_dir.empty() ? PromptLibrary::default_dir() : fs::path(ctx.config.prompts_dir)));

  const auto counts = dispatch(ctx);

  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json manifest{
      {"tool", "reflectevo"},
      {"version", kVersion},
      {"command", opts.command},
      {"argv", argv},
      {"args", options_to_json(opts)},
      {"config", config_to_json(ctx.config)},
      {"config_hash", config_hash(ctx.config)},
      {"seeds", {{"policy", ctx.config.policy.seed}, {"curation", ctx.config.curation.seed}}},
      {"backend", ctx.backend.describe()},
      {"inputs", inputs},
      {"counts", counts},
      {"timings", {{"started", started}, {"finished", utc_now()}, {"elapsed_s", elapsed}}},
  };
  if (fs::exists(ctx.run / "replay.jsonl")) manifest["replay_log"] = "replay.jsonl";
  write_text_file(ctx.run / "manifest.json", manifest.dump(2) + "\n");
  spdlog::info("{}: done in {:.2f}s, outputs in {}", opts.command, elapsed, ctx.run.string());
}

/// Re-runs a recorded command from its run directory without any network.
void replay(const fs::path& manifest_path, const std::string& out,
            const std::vector<std::string>& argv) {
  const auto manifest = json::parse(read_text_file(manifest_path));
  const fs::path run = manifest_path.parent_path();
  auto opts = options_from_json(manifest.at("args"));
  for (const auto& [name, member] : kInputs) {
    if (!(opts.*member).empty()) opts.*member = (run / "inputs" / name).string();
  }
  opts.mock.clear();
  opts.echo = false;
  const auto log = run / "replay.jsonl";
  if (fs::exists(log)) {
    opts.replay_log = log.string();
  } else {
    // No model traffic was recorded; a replay backend with an empty log
    // turns any unexpected request into an error.
    opts.replay_log = (fs::path(out) / "empty_replay.jsonl").string();
    write_text_file(opts.replay_log, "");
  }
  if (fs::absolute(out) == fs::absolute(run)) {
    throw Error(ErrorCode::invalid_argument, "replay --out must differ from the recorded run");
  }
  opts.out = out;
  execute(opts, argv);
}

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "TOML config file")->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out, "run directory for outputs")->required();
  cmd->add_option("--workers", o.workers, "parallel requests (overrides [run] max_in_flight)");
}

void add_model(CLI::App* cmd, Options& o) {
  auto* mock = cmd->add_option("--mock", o.mock, "scripted mock backend (JSON rules)")
                   ->check(CLI::ExistingFile);
  cmd->add_flag("--echo", o.echo, "echo backend: replies with the prompt")->excludes(mock);
  cmd->add_option("--seed", o.seed, "base seed (overrides [policy] and [curation] seed)");
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("reflectevo"));
  spdlog::set_pattern("%^%l%$: %v");

  std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"Self-reflection data pipeline: generate, curate, export, evaluate."};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");

  Options o;
  std::string manifest;

  auto* generate = app.add_subcommand("generate", "first turn + reflection sampling -> candidates.jsonl");
  add_common(generate, o);
  add_model(generate, o);
  generate->add_option("--tasks", o.tasks, "tasks JSONL")->required()->check(CLI::ExistingFile);
  generate->add_option("-m", o.m, "instructions per dataset or question");
  generate->add_option("-k", o.k, "samples per instruction");
  generate->add_option("--selection", o.selection, "per_dataset | per_question");

  auto* curate = app.add_subcommand("curate", "candidates -> d_plus / d_pm / d_pref");
  add_common(curate, o);
  add_model(curate, o);
  curate->add_option("--pool", o.pool, "candidates.jsonl")->required()->check(CLI::ExistingFile);
  curate->add_option("--pairing", o.pairing, "cross_product | one_per_question | capped_cross");
  curate->add_option("--cap", o.cap, "pairs per group for capped_cross");
  curate->add_flag("--no-debias", o.no_debias, "single judge pass, no position swap");

  auto* exp = app.add_subcommand("export", "curated sets -> exports/{setting}/{dataset}.jsonl");
  add_common(exp, o);
  exp->add_option("--curated", o.curated, "directory written by curate")->required()->check(CLI::ExistingDirectory);
  exp->add_option("--tasks", o.tasks, "tasks JSONL, for few-shot examples")->check(CLI::ExistingFile);
  exp->add_flag("--dpo-with-answer", o.dpo_with_answer, "DPO completions include the corrected attempt");
  exp->add_flag("--instruction-prompt", o.instruction_prompt, "use each sample's instruction prompt");

  auto* stats = app.add_subcommand("stats", "per-category dataset statistics");
  add_common(stats, o);
  stats->add_option("--pool", o.pool, "candidates.jsonl")->required()->check(CLI::ExistingFile);
  stats->add_option("--d-plus", o.d_plus, "d_plus.jsonl (default: derived from the pool)")->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "multi-turn rollouts -> accuracy by turn");
  add_common(eval, o);
  add_model(eval, o);
  eval->add_option("--tasks", o.tasks, "tasks JSONL")->required()->check(CLI::ExistingFile);
  eval->add_option("--turns", o.turns, "maximum turns T");
  eval->add_option("--style", o.style, "plain | instruction | one_stage");
  eval->add_option("--instruction", o.instruction, "pool instruction id for --style instruction");
  eval->add_option("--verifier", o.verifier, "oracle | self_judgment");

  auto* tag = app.add_subcommand("tag-errors", "error-type tags for failed attempts");
  add_common(tag, o);
  add_model(tag, o);
  tag->add_option("--pool", o.pool, "candidates.jsonl")->check(CLI::ExistingFile);
  tag->add_option("--traces", o.traces, "traces.jsonl from eval")->check(CLI::ExistingFile);
  tag->add_option("--tasks", o.tasks, "tasks JSONL (with --traces)")->check(CLI::ExistingFile);

  auto* corr = app.add_subcommand("correlate", "reflection/thought similarity vs correctness");
  add_common(corr, o);
  corr->add_option("--pool", o.pool, "candidates.jsonl")->check(CLI::ExistingFile);
  corr->add_option("--traces", o.traces, "traces.jsonl from eval")->check(CLI::ExistingFile);
  corr->add_option("--tasks", o.tasks, "tasks JSONL (with --traces)")->check(CLI::ExistingFile);
  corr->add_option("--bins", o.bins, "similarity bins");

  auto* rep = app.add_subcommand("replay", "re-run a recorded run offline from its replay log");
  rep->add_option("--manifest", manifest, "RUN/manifest.json")->required()->check(CLI::ExistingFile);
  rep->add_option("--out", o.out, "new run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  if (verbose) spdlog::set_level(spdlog::level::debug);

  try {
    if (rep->parsed()) {
      replay(manifest, o.out, args);
    } else {
      o.command = app.get_subcommands().front()->get_name();
      execute(o, args);
    }
    return 0;
  } catch (const Error& e) {
    spdlog::error("{} ({})", e.what(), to_string(e.code()));
    const bool user_side = e.is_user_error() || e.code() == ErrorCode::transport ||
                           e.code() == ErrorCode::protocol;
    return user_side ? 1 : 2;
  } catch (const fs::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const json::exception& e) {
    spdlog::error("malformed JSON: {}", e.what());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("internal error: {}", e.what());
    return 2;
  }
}
