// SPDX-License-Identifier: Apache-2.0
//
// Uniform chat-completion client. A Gateway wraps one ChatBackend (HTTP
// server, scripted mock, echo, or a replay log) and adds retries with
// exponential backoff, an in-flight cap and an append-only replay log.
#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "reflectevo/util.hpp"

namespace reflectevo {

struct ChatMessage {
  std::string role;  // "system", "user", "assistant"
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct CompletionRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_new_tokens = 512;
  std::vector<std::string> stop;
  std::optional<std::uint64_t> seed;

  static CompletionRequest user(std::string content, double temperature = 0.0,
                                std::optional<std::uint64_t> seed = std::nullopt);

  /// Throws Error(invalid_argument) for an empty message list or max_new_tokens <= 0.
  void validate() const;

  /// Concatenated message contents; what scripted mocks match against.
  std::string joined_content() const;

  /// Stable SHA-256 of the canonical request JSON.
  std::string hash() const;

  friend bool operator==(const CompletionRequest&, const CompletionRequest&) = default;
};

struct TokenUsage {
  int prompt = 0;
  int completion = 0;

  friend bool operator==(const TokenUsage&, const TokenUsage&) = default;
};

struct CompletionResult {
  std::string text;
  std::string finish_reason;  // "stop", "length", ... or "error"
  TokenUsage usage;
  double latency_ms = 0.0;
  int attempts = 0;
  std::string error;       // set iff finish_reason == "error"
  std::string error_kind;  // "transport" or "protocol" when failed

  bool ok() const { return finish_reason != "error"; }

  static CompletionResult failure(std::string message, int attempts,
                                  std::string kind = "transport");
};

void to_json(json& j, const ChatMessage& v);
void from_json(const json& j, ChatMessage& v);
void to_json(json& j, const CompletionRequest& v);
void from_json(const json& j, CompletionRequest& v);
void to_json(json& j, const CompletionResult& v);
void from_json(const json& j, CompletionResult& v);

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

/// Backends throw Error(transport) for failures worth retrying and
/// Error(protocol) for malformed replies.
class ChatBackend {
public:
  virtual ~ChatBackend() = default;
  virtual CompletionResult send(const CompletionRequest& request) = 0;
  virtual std::string name() const = 0;
};

/// Replies with the content of the last message.
class EchoBackend final : public ChatBackend {
public:
  CompletionResult send(const CompletionRequest& request) override;
  std::string name() const override { return "echo"; }
};

/// Replies computed by a callable; used heavily in tests.
class CallbackBackend final : public ChatBackend {
public:
  using Fn = std::function<std::string(const CompletionRequest&)>;
  explicit CallbackBackend(Fn fn) : fn_(std::move(fn)) {}
  CompletionResult send(const CompletionRequest& request) override;
  std::string name() const override { return "callback"; }

private:
  Fn fn_;
};

/// Table-driven mock loaded from JSON:
///
///   {"rules": [{"match": "substring" | ["all", "of", "these"],
///               "not": ["none", "of", "these"],
///               "reply": "text" | "replies": ["a", "b"],
///               "fail": "transport" | "protocol",
///               "fail_times": 2}],
///    "default": "text"}
///
/// Rules are tried in order against the joined message content. With
/// "replies", the pick is request.seed mod count, so the choice depends only
/// on the request and never on call order. "fail_times" makes the first N
/// attempts of each distinct request fail transiently.
class ScriptedBackend final : public ChatBackend {
public:
  explicit ScriptedBackend(const json& script);
  static std::shared_ptr<ScriptedBackend> from_file(const std::filesystem::path& path);

  CompletionResult send(const CompletionRequest& request) override;
  std::string name() const override { return "scripted"; }

private:
  struct Rule {
    std::vector<std::string> match;
    std::vector<std::string> exclude;
    std::vector<std::string> replies;
    std::string fail;
    int fail_times = 0;
  };
  std::vector<Rule> rules_;
  std::optional<std::string> default_reply_;
  std::mutex mu_;
  std::map<std::string, int> failures_seen_;
};

/// Serves responses from a replay log by request hash; never touches the network.
class ReplayBackend final : public ChatBackend {
public:
  explicit ReplayBackend(const std::filesystem::path& log_path);
  CompletionResult send(const CompletionRequest& request) override;
  std::string name() const override { return "replay"; }
  std::size_t size() const { return responses_.size(); }

private:
  std::map<std::string, CompletionResult> responses_;
};

struct HttpEndpoint {
  std::string base_url;  // e.g. "http://localhost:8000/v1"
  std::string api_key;   // sent as a bearer token when non-empty
  std::chrono::seconds timeout{120};
};

/// OpenAI-style `POST {base_url}/chat/completions`.
class HttpBackend final : public ChatBackend {
public:
  explicit HttpBackend(HttpEndpoint endpoint);
  CompletionResult send(const CompletionRequest& request) override;
  std::string name() const override { return "http"; }

  /// Wire body for a request (exposed for tests).
  static json wire_body(const CompletionRequest& request);
  /// Parses a chat-completions reply body; throws Error(protocol) when malformed.
  static CompletionResult parse_reply(const std::string& body);

private:
  HttpEndpoint endpoint_;
};

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

struct GatewayOptions {
  int max_retries = 3;
  std::chrono::milliseconds backoff_base{500};
  std::size_t max_in_flight = 4;
  std::optional<std::filesystem::path> replay_log;
};

class Gateway {
public:
  Gateway(std::shared_ptr<ChatBackend> backend, GatewayOptions options = {});

  /// One request, retried on transient failures. Throws Error(transport)
  /// once retries are exhausted and Error(protocol) on malformed replies.
  CompletionResult complete(const CompletionRequest& request);

  /// Results aligned with `requests`; failures are reported per slot as
  /// CompletionResult::failure and never abort the batch.
  std::vector<CompletionResult> complete_many(const std::vector<CompletionRequest>& requests,
                                              std::size_t max_in_flight);

  const GatewayOptions& options() const { return options_; }
  std::string backend_name() const { return backend_->name(); }
  std::size_t requests_sent() const;

private:
  void log(const CompletionRequest& request, const CompletionResult& result);
  CompletionResult attempt_with_retries(const CompletionRequest& request);

  std::shared_ptr<ChatBackend> backend_;
  GatewayOptions options_;

  mutable std::mutex log_mu_;
  std::ofstream log_;
  std::size_t sent_ = 0;

  std::mutex slot_mu_;
  std::condition_variable slot_cv_;
  std::size_t in_flight_ = 0;
};

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

class Embedder {
public:
  virtual ~Embedder() = default;
  virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
};

/// OpenAI-style `POST {base_url}/embeddings`.
class HttpEmbedder final : public Embedder {
public:
  HttpEmbedder(HttpEndpoint endpoint, std::string model);
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;

private:
  HttpEndpoint endpoint_;
  std::string model_;
};

/// Hashed bag-of-words vectors. Deterministic and offline; good enough for
/// smoke runs and tests, not a semantic model.
class HashingEmbedder final : public Embedder {
public:
  explicit HashingEmbedder(std::size_t dims = 256) : dims_(dims) {}
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;

private:
  std::size_t dims_;
};

}  // namespace reflectevo
