// SPDX-License-Identifier: Apache-2.0
#include "reflectevo/gateway.hpp"

#include <algorithm>
#include <cctype>
#include <ctime>
#include <iomanip>
#include <sstream>
#include <thread>

#include "reflectevo/error.hpp"

namespace reflectevo {

namespace {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

CompletionResult text_result(std::string text) {
  CompletionResult r;
  r.usage.completion = static_cast<int>(count_whitespace_pieces(text));
  r.text = std::move(text);
  r.finish_reason = "stop";
  return r;
}

std::vector<std::string> string_or_list(const json& j) {
  if (j.is_string()) return {j.get<std::string>()};
  if (j.is_array()) return j.get<std::vector<std::string>>();
  throw Error(ErrorCode::schema, "expected a string or a list of strings");
}

}  // namespace

// ---------------------------------------------------------------------------

CompletionRequest CompletionRequest::user(std::string content, double temperature,
                                          std::optional<std::uint64_t> seed) {
  CompletionRequest r;
  r.messages.push_back({"user", std::move(content)});
  r.temperature = temperature;
  r.seed = seed;
  return r;
}

void CompletionRequest::validate() const {
  if (messages.empty()) throw Error(ErrorCode::invalid_argument, "completion request has no messages");
  if (max_new_tokens <= 0) throw Error(ErrorCode::invalid_argument, "max_new_tokens must be > 0");
}

std::string CompletionRequest::joined_content() const {
  std::string out;
  for (const auto& m : messages) {
    if (!out.empty()) out += '\n';
    out += m.content;
  }
  return out;
}

std::string CompletionRequest::hash() const { return sha256_hex(dump_line(json(*this))); }

CompletionResult CompletionResult::failure(std::string message, int attempts, std::string kind) {
  CompletionResult r;
  r.finish_reason = "error";
  r.error = std::move(message);
  r.error_kind = std::move(kind);
  r.attempts = attempts;
  return r;
}

void to_json(json& j, const ChatMessage& v) { j = json{{"role", v.role}, {"content", v.content}}; }

void from_json(const json& j, ChatMessage& v) {
  v.role = j.at("role").get<std::string>();
  v.content = j.at("content").get<std::string>();
}

void to_json(json& j, const CompletionRequest& v) {
  j = json{{"model", v.model},
           {"messages", v.messages},
           {"temperature", v.temperature},
           {"max_tokens", v.max_new_tokens},
           {"stop", v.stop}};
  j["seed"] = v.seed ? json(*v.seed) : json(nullptr);
}

void from_json(const json& j, CompletionRequest& v) {
  v.model = j.value("model", "");
  v.messages = j.at("messages").get<std::vector<ChatMessage>>();
  v.temperature = j.value("temperature", 0.0);
  v.max_new_tokens = j.value("max_tokens", 512);
  v.stop = j.value("stop", std::vector<std::string>{});
  if (j.contains("seed") && !j["seed"].is_null()) v.seed = j["seed"].get<std::uint64_t>();
}

void to_json(json& j, const CompletionResult& v) {
  j = json{{"text", v.text},
           {"finish_reason", v.finish_reason},
           {"usage", {{"prompt", v.usage.prompt}, {"completion", v.usage.completion}}},
           {"latency_ms", v.latency_ms},
           {"attempts", v.attempts}};
  if (!v.error.empty()) j["error"] = v.error;
  if (!v.error_kind.empty()) j["error_kind"] = v.error_kind;
}

void from_json(const json& j, CompletionResult& v) {
  v.text = j.value("text", "");
  v.finish_reason = j.at("finish_reason").get<std::string>();
  if (j.contains("usage")) {
    v.usage.prompt = j["usage"].value("prompt", 0);
    v.usage.completion = j["usage"].value("completion", 0);
  }
  v.latency_ms = j.value("latency_ms", 0.0);
  v.attempts = j.value("attempts", 0);
  v.error = j.value("error", "");
  v.error_kind = j.value("error_kind", "");
}

// ---------------------------------------------------------------------------

CompletionResult EchoBackend::send(const CompletionRequest& request) {
  return text_result(request.messages.back().content);
}

CompletionResult CallbackBackend::send(const CompletionRequest& request) {
  return text_result(fn_(request));
}

ScriptedBackend::ScriptedBackend(const json& script) {
  if (!script.is_object()) throw Error(ErrorCode::schema, "mock script must be a JSON object");
  for (const auto& r : script.value("rules", json::array())) {
    Rule rule;
    if (r.contains("match")) rule.match = string_or_list(r["match"]);
    if (r.contains("not")) rule.exclude = string_or_list(r["not"]);
    if (r.contains("reply")) rule.replies.push_back(r["reply"].get<std::string>());
    if (r.contains("replies")) rule.replies = r["replies"].get<std::vector<std::string>>();
    rule.fail = r.value("fail", "");
    rule.fail_times = r.value("fail_times", 0);
    if (rule.replies.empty() && rule.fail.empty()) {
      throw Error(ErrorCode::schema, "mock rule needs 'reply', 'replies' or 'fail'");
    }
    if (!rule.fail.empty() && rule.fail != "transport" && rule.fail != "protocol") {
      throw Error(ErrorCode::schema, "mock rule 'fail' must be transport or protocol");
    }
    rules_.push_back(std::move(rule));
  }
  if (script.contains("default")) default_reply_ = script["default"].get<std::string>();
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::filesystem::path& path) {
  try {
    return std::make_shared<ScriptedBackend>(json::parse(read_text_file(path)));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::schema, path.string() + ": " + e.what());
  }
}

CompletionResult ScriptedBackend::send(const CompletionRequest& request) {
  const auto content = request.joined_content();
  for (const auto& rule : rules_) {
    const bool hit =
        std::all_of(rule.match.begin(), rule.match.end(),
                    [&](const auto& s) { return contains(content, s); }) &&
        std::none_of(rule.exclude.begin(), rule.exclude.end(),
                     [&](const auto& s) { return contains(content, s); });
    if (!hit) continue;

    if (rule.fail_times > 0) {
      std::lock_guard lock(mu_);
      int& seen = failures_seen_[request.hash()];
      if (seen < rule.fail_times) {
        ++seen;
        throw Error(ErrorCode::transport, "scripted transient failure");
      }
    }
    if (rule.replies.empty()) {
      if (rule.fail == "protocol") throw Error(ErrorCode::protocol, "scripted protocol failure");
      throw Error(ErrorCode::transport, "scripted transport failure");
    }
    const std::size_t pick =
        request.seed ? static_cast<std::size_t>(*request.seed % rule.replies.size()) : 0;
    return text_result(rule.replies[pick]);
  }
  if (default_reply_) return text_result(*default_reply_);
  throw Error(ErrorCode::protocol, "scripted mock has no reply for this request");
}

ReplayBackend::ReplayBackend(const std::filesystem::path& log_path) {
  for (const auto& entry : read_jsonl(log_path)) {
    try {
      responses_[entry.at("request_hash").get<std::string>()] =
          entry.at("response").get<CompletionResult>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::schema, log_path.string() + ": bad replay entry: " + e.what());
    }
  }
}

CompletionResult ReplayBackend::send(const CompletionRequest& request) {
  auto it = responses_.find(request.hash());
  if (it == responses_.end()) {
    throw Error(ErrorCode::protocol, "request " + request.hash().substr(0, 12) +
                                         " not present in replay log");
  }
  if (!it->second.ok()) {
    const auto code =
        it->second.error_kind == "protocol" ? ErrorCode::protocol : ErrorCode::transport;
    throw Error(code, "replayed failure: " + it->second.error);
  }
  return it->second;
}

// ---------------------------------------------------------------------------

Gateway::Gateway(std::shared_ptr<ChatBackend> backend, GatewayOptions options)
    : backend_(std::move(backend)), options_(std::move(options)) {
  if (!backend_) throw Error(ErrorCode::config, "gateway needs a backend");
  if (options_.max_in_flight == 0) throw Error(ErrorCode::config, "max_in_flight must be >= 1");
  if (options_.replay_log) {
    if (options_.replay_log->has_parent_path()) {
      std::filesystem::create_directories(options_.replay_log->parent_path());
    }
    log_.open(*options_.replay_log, std::ios::app | std::ios::binary);
    if (!log_) throw Error(ErrorCode::io, "cannot open replay log " + options_.replay_log->string());
  }
}

std::size_t Gateway::requests_sent() const {
  std::lock_guard lock(log_mu_);
  return sent_;
}

void Gateway::log(const CompletionRequest& request, const CompletionResult& result) {
  std::lock_guard lock(log_mu_);
  ++sent_;
  if (!log_.is_open()) return;
  json entry{{"request_hash", request.hash()},
             {"request", request},
             {"response", result},
             {"ts", utc_timestamp()}};
  log_ << dump_line(entry) << '\n';
  log_.flush();
}

CompletionResult Gateway::attempt_with_retries(const CompletionRequest& request) {
  const auto start = std::chrono::steady_clock::now();
  std::string last_error;
  for (int attempt = 1; attempt <= options_.max_retries + 1; ++attempt) {
    try {
      auto result = backend_->send(request);
      result.attempts = attempt;
      result.latency_ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - start)
                              .count();
      return result;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::transport) throw;
      last_error = e.what();
    }
    if (attempt <= options_.max_retries && options_.backoff_base.count() > 0) {
      std::this_thread::sleep_for(options_.backoff_base * (1 << (attempt - 1)));
    }
  }
  throw Error(ErrorCode::transport, "retries exhausted after " +
                                        std::to_string(options_.max_retries + 1) +
                                        " attempts: " + last_error);
}

CompletionResult Gateway::complete(const CompletionRequest& request) {
  request.validate();
  {
    std::unique_lock lock(slot_mu_);
    slot_cv_.wait(lock, [&] { return in_flight_ < options_.max_in_flight; });
    ++in_flight_;
  }
  struct Release {
    Gateway& g;
    ~Release() {
      {
        std::lock_guard lock(g.slot_mu_);
        --g.in_flight_;
      }
      g.slot_cv_.notify_one();
    }
  } release{*this};

  try {
    auto result = attempt_with_retries(request);
    log(request, result);
    return result;
  } catch (const Error& e) {
    log(request, CompletionResult::failure(e.what(), options_.max_retries + 1,
                                           std::string(to_string(e.code()))));
    throw;
  }
}

std::vector<CompletionResult> Gateway::complete_many(const std::vector<CompletionRequest>& requests,
                                                     std::size_t max_in_flight) {
  if (max_in_flight == 0) throw Error(ErrorCode::invalid_argument, "max_in_flight must be >= 1");
  std::vector<CompletionResult> results(requests.size());
  parallel_for(requests.size(), max_in_flight, [&](std::size_t i) {
    try {
      results[i] = complete(requests[i]);
    } catch (const Error& e) {
      results[i] = CompletionResult::failure(e.what(), options_.max_retries + 1,
                                             std::string(to_string(e.code())));
    }
  });
  return results;
}

// ---------------------------------------------------------------------------

std::vector<std::vector<double>> HashingEmbedder::embed(const std::vector<std::string>& texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    std::vector<double> v(dims_, 0.0);
    std::string word;
    auto flush = [&] {
      if (word.empty()) return;
      v[derive_seed(0, word) % dims_] += 1.0;
      word.clear();
    };
    for (char c : text) {
      if (std::isalnum(static_cast<unsigned char>(c))) {
        word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      } else {
        flush();
      }
    }
    flush();
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace reflectevo
