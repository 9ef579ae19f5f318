#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "nl2sql/detail/strings.hpp"
#include "nl2sql/digest.hpp"
#include "nl2sql/errors.hpp"

namespace nl2sql {

struct GenerationRequest {
  std::string prompt;
  double temperature = 0.0;
  int max_tokens = 512;
  std::vector<std::string> stop = {"###"};
};

struct GenerationResult {
  std::string completion;
  std::string backend_id;
  std::int64_t latency_ms = 0;
};

struct SqlCandidate {
  std::string raw_completion;
  std::string sql;
  int round = 1;
};

// Completion source. Implementations must tolerate concurrent generate()
// calls.
class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;
  virtual GenerationResult generate(const GenerationRequest& request) = 0;
  virtual std::string id() const = 0;
};

namespace detail {

// Interior of the first fenced block, when one exists. A ```sql language tag
// on the opening fence is skipped.
inline std::optional<std::string> first_fenced_block(const std::string& text) {
  std::size_t open = text.find("```");
  if (open == std::string::npos) return std::nullopt;
  std::size_t body = open + 3;
  if (istarts_with(std::string_view(text).substr(body), "sql")) body += 3;
  if (body < text.size() && text[body] == '\n') ++body;
  std::size_t close = text.find("```", body);
  std::size_t end = close == std::string::npos ? text.size() : close;
  return text.substr(body, end - body);
}

// First semicolon outside of quoted strings.
inline std::size_t top_level_semicolon(std::string_view text) {
  char quote = '\0';
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (quote != '\0') {
      if (c == quote) quote = '\0';
      continue;
    }
    if (c == '\'' || c == '"' || c == '`') {
      quote = c;
    } else if (c == ';') {
      return i;
    }
  }
  return std::string_view::npos;
}

}  // namespace detail

// Pulls a single SQL query out of a raw completion: first fenced block if any,
// leading "SQL:"/"Answer:" labels stripped, truncated at the first top-level
// semicolon, whitespace-trimmed. Anything that does not start with SELECT or
// WITH is rejected.
inline SqlCandidate extract_sql(const std::string& completion, int round) {
  std::string body = detail::first_fenced_block(completion).value_or(completion);

  std::string_view view = detail::trim_view(body);
  for (std::string_view label : {std::string_view("SQL:"), std::string_view("Answer:")}) {
    if (detail::istarts_with(view, label)) {
      view.remove_prefix(label.size());
      view = detail::trim_view(view);
      break;
    }
  }

  std::size_t semicolon = detail::top_level_semicolon(view);
  if (semicolon != std::string_view::npos) view = view.substr(0, semicolon);
  view = detail::trim_view(view);

  if (view.empty() ||
      !(detail::istarts_with(view, "SELECT") || detail::istarts_with(view, "WITH"))) {
    throw NoSqlFound("completion does not contain a SELECT/WITH query");
  }
  SqlCandidate candidate;
  candidate.raw_completion = completion;
  candidate.sql = std::string(view);
  candidate.round = round;
  return candidate;
}

// Returns a queued completion per call, in order. Requests are kept for
// inspection so tests can assert on the prompts the pipeline actually sent.
class ScriptedBackend : public GenerationBackend {
 public:
  explicit ScriptedBackend(std::vector<std::string> completions)
      : queue_(completions.begin(), completions.end()) {}

  GenerationResult generate(const GenerationRequest& request) override {
    std::lock_guard<std::mutex> lock(mutex_);
    requests_.push_back(request);
    if (queue_.empty()) throw ScriptExhausted("scripted backend has no completions left");
    GenerationResult result;
    result.completion = queue_.front();
    queue_.pop_front();
    result.backend_id = id();
    return result;
  }

  std::string id() const override { return "script"; }

  std::vector<GenerationRequest> requests() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return requests_;
  }

 private:
  mutable std::mutex mutex_;
  std::deque<std::string> queue_;
  std::vector<GenerationRequest> requests_;
};

// Returns the task's gold SQL regardless of prompt; establishes the harness's
// 100% upper bound. Wired per item by the runner.
class EchoGoldBackend : public GenerationBackend {
 public:
  explicit EchoGoldBackend(std::string gold_sql) : gold_sql_(std::move(gold_sql)) {}

  GenerationResult generate(const GenerationRequest&) override {
    return {gold_sql_, id(), 0};
  }

  std::string id() const override { return "echo-gold"; }

 private:
  std::string gold_sql_;
};

// Replays completions recorded in a JSON Lines fixture keyed by the SHA-256
// of the exact prompt bytes.
class ReplayBackend : public GenerationBackend {
 public:
  explicit ReplayBackend(const std::string& fixture_path, bool strict = true)
      : strict_(strict) {
    std::ifstream in(fixture_path);
    if (!in) throw ConfigError("cannot open fixture file '" + fixture_path + "'");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (detail::trim_view(line).empty()) continue;
      nlohmann::json entry;
      try {
        entry = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("fixture '" + fixture_path + "' line " +
                          std::to_string(line_no) + ": " + e.what());
      }
      completions_[entry.at("digest").get<std::string>()] =
          entry.at("completion").get<std::string>();
    }
  }

  GenerationResult generate(const GenerationRequest& request) override {
    std::string digest = sha256_hex(request.prompt);
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = completions_.find(digest);
    if (it == completions_.end()) {
      if (strict_) {
        throw MissingFixture("no fixture entry for prompt digest " + digest, digest);
      }
      return {"", id(), 0};
    }
    return {it->second, id(), 0};
  }

  std::string id() const override { return "replay"; }

  std::size_t size() const { return completions_.size(); }

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::string> completions_;
  bool strict_;
};

struct HttpBackendConfig {
  std::string endpoint;                          // e.g. http://host:port/v1/completions
  std::string model;
  std::string completion_path = "choices[0].text";
  int timeout_ms = 30000;
  int retries = 2;      // additional attempts after the first
  int backoff_ms = 250;  // doubled per retry
};

namespace detail {

// Walks a dotted/indexed path like "choices[0].text" through a JSON value.
inline const nlohmann::json* resolve_json_path(const nlohmann::json& root,
                                               const std::string& path) {
  const nlohmann::json* node = &root;
  std::size_t i = 0;
  while (i < path.size()) {
    if (path[i] == '.') {
      ++i;
      continue;
    }
    if (path[i] == '[') {
      std::size_t close = path.find(']', i);
      if (close == std::string::npos) return nullptr;
      std::size_t index = std::stoul(path.substr(i + 1, close - i - 1));
      if (!node->is_array() || index >= node->size()) return nullptr;
      node = &(*node)[index];
      i = close + 1;
      continue;
    }
    std::size_t end = path.find_first_of(".[", i);
    std::string key = path.substr(i, end == std::string::npos ? end : end - i);
    if (!node->is_object() || !node->contains(key)) return nullptr;
    node = &node->at(key);
    i = end == std::string::npos ? path.size() : end;
  }
  return node;
}

struct SplitUrl {
  std::string host_part;  // scheme://host:port
  std::string path;
};

inline SplitUrl split_url(const std::string& url) {
  std::size_t scheme = url.find("://");
  std::size_t path_start =
      url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace detail

// Live completion backend: POSTs the single-string prompt contract and pulls
// the completion text out of the JSON response.
class HttpBackend : public GenerationBackend {
 public:
  explicit HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) throw ConfigError("http backend needs --endpoint");
  }

  GenerationResult generate(const GenerationRequest& request) override {
    nlohmann::json body = {{"model", config_.model},
                           {"prompt", request.prompt},
                           {"temperature", request.temperature},
                           {"max_tokens", request.max_tokens},
                           {"stop", request.stop}};
    std::string payload = body.dump();
    auto url = detail::split_url(config_.endpoint);

    std::string last_error;
    int backoff = config_.backoff_ms;
    auto start = std::chrono::steady_clock::now();
    for (int attempt = 0; attempt <= config_.retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
        backoff *= 2;
      }
      httplib::Client client(url.host_part);
      client.set_connection_timeout(0, config_.timeout_ms * 1000);
      client.set_read_timeout(config_.timeout_ms / 1000, (config_.timeout_ms % 1000) * 1000);
      auto response = client.Post(url.path, payload, "application/json");
      if (!response) {
        last_error = httplib::to_string(response.error());
        continue;
      }
      if (response->status == 429) {
        throw RateLimited("backend returned 429 for " + config_.endpoint);
      }
      if (response->status < 200 || response->status >= 300) {
        last_error = "http status " + std::to_string(response->status);
        continue;
      }
      nlohmann::json doc;
      try {
        doc = nlohmann::json::parse(response->body);
      } catch (const nlohmann::json::parse_error& e) {
        throw NetworkFailure(std::string("backend returned unparseable JSON: ") + e.what());
      }
      const nlohmann::json* completion = detail::resolve_json_path(doc, config_.completion_path);
      if (completion == nullptr || !completion->is_string()) {
        throw NetworkFailure("response has no string at '" + config_.completion_path + "'");
      }
      GenerationResult result;
      result.completion = completion->get<std::string>();
      result.backend_id = id();
      result.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::steady_clock::now() - start)
                              .count();
      return result;
    }
    throw NetworkFailure("request to " + config_.endpoint + " failed after " +
                         std::to_string(config_.retries + 1) + " attempts: " + last_error);
  }

  std::string id() const override { return "http"; }

 private:
  HttpBackendConfig config_;
};

// Append-serialized JSON Lines store for recorded completions.
class FixtureStore {
 public:
  explicit FixtureStore(std::string path) : path_(std::move(path)) {}

  void append(const std::string& digest, const std::string& completion,
              const GenerationRequest& request) {
    nlohmann::ordered_json entry;
    entry["digest"] = digest;
    entry["completion"] = completion;
    entry["temperature"] = request.temperature;
    entry["max_tokens"] = request.max_tokens;
    std::lock_guard<std::mutex> lock(mutex_);
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    if (!out) throw FixtureWriteFailure("cannot open fixture store '" + path_ + "'");
    out << entry.dump() << "\n";
    if (!out) throw FixtureWriteFailure("write to fixture store '" + path_ + "' failed");
  }

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::mutex mutex_;
};

// Forwards to a live backend and appends {digest, completion, decoding
// params} to the store so the run can later be replayed bit-for-bit.
inline GenerationResult record_fixture(GenerationBackend& live,
                                       const GenerationRequest& request,
                                       FixtureStore& store) {
  GenerationResult result = live.generate(request);
  store.append(sha256_hex(request.prompt), result.completion, request);
  return result;
}

class RecordingBackend : public GenerationBackend {
 public:
  RecordingBackend(GenerationBackend& inner, FixtureStore& store)
      : inner_(inner), store_(store) {}

  GenerationResult generate(const GenerationRequest& request) override {
    return record_fixture(inner_, request, store_);
  }

  std::string id() const override { return inner_.id(); }

 private:
  GenerationBackend& inner_;
  FixtureStore& store_;
};

}  // namespace nl2sql
