// SPDX-License-Identifier: Apache-2.0
#include <httplib.h>

#include "reflectevo/error.hpp"
#include "reflectevo/gateway.hpp"

namespace reflectevo {

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // "/v1" (no trailing slash)
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::config, "endpoint URL needs a scheme: '" + url + "'");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  SplitUrl out;
  out.origin = url.substr(0, path_start);
  out.path = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

json post_json(const HttpEndpoint& endpoint, const std::string& route, const json& body) {
  const auto url = split_url(endpoint.base_url);
  httplib::Client client(url.origin);
  client.set_connection_timeout(endpoint.timeout);
  client.set_read_timeout(endpoint.timeout);
  client.set_write_timeout(endpoint.timeout);
  httplib::Headers headers;
  if (!endpoint.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint.api_key);

  auto res = client.Post(url.path + route, headers, body.dump(), "application/json");
  if (!res) {
    throw Error(ErrorCode::transport, "HTTP request failed: " + httplib::to_string(res.error()));
  }
  if (res->status == 429 || res->status >= 500) {
    throw Error(ErrorCode::transport, "HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) {
    throw Error(ErrorCode::protocol,
                "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
  }
  try {
    return json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::protocol, std::string("reply is not JSON: ") + e.what());
  }
}

}  // namespace

HttpBackend::HttpBackend(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {
  if (endpoint_.base_url.empty()) throw Error(ErrorCode::config, "missing endpoint URL");
  split_url(endpoint_.base_url);
}

json HttpBackend::wire_body(const CompletionRequest& request) {
  json body{{"model", request.model},
            {"messages", request.messages},
            {"temperature", request.temperature},
            {"max_tokens", request.max_new_tokens},
            {"n", 1}};
  if (!request.stop.empty()) body["stop"] = request.stop;
  if (request.seed) body["seed"] = *request.seed;
  return body;
}

CompletionResult HttpBackend::parse_reply(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::protocol, std::string("reply is not JSON: ") + e.what());
  }
  try {
    const auto& choice = j.at("choices").at(0);
    CompletionResult r;
    const auto& content = choice.at("message").at("content");
    r.text = content.is_null() ? "" : content.get<std::string>();
    r.finish_reason = choice.value("finish_reason", "stop");
    if (r.finish_reason == "error") r.finish_reason = "stop";
    if (j.contains("usage") && j["usage"].is_object()) {
      r.usage.prompt = j["usage"].value("prompt_tokens", 0);
      r.usage.completion = j["usage"].value("completion_tokens", 0);
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::protocol, std::string("malformed chat completion: ") + e.what());
  }
}

CompletionResult HttpBackend::send(const CompletionRequest& request) {
  return parse_reply(post_json(endpoint_, "/chat/completions", wire_body(request)).dump());
}

HttpEmbedder::HttpEmbedder(HttpEndpoint endpoint, std::string model)
    : endpoint_(std::move(endpoint)), model_(std::move(model)) {
  if (endpoint_.base_url.empty()) throw Error(ErrorCode::config, "missing embeddings endpoint URL");
}

std::vector<std::vector<double>> HttpEmbedder::embed(const std::vector<std::string>& texts) {
  const auto reply = post_json(endpoint_, "/embeddings", json{{"model", model_}, {"input", texts}});
  try {
    std::vector<std::vector<double>> out(texts.size());
    for (const auto& item : reply.at("data")) {
      const auto idx = item.value("index", std::size_t{0});
      if (idx >= out.size()) throw Error(ErrorCode::protocol, "embedding index out of range");
      out[idx] = item.at("embedding").get<std::vector<double>>();
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::protocol, std::string("malformed embeddings reply: ") + e.what());
  }
}

}  // namespace reflectevo
