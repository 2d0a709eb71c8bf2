#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sparkles/json_text.hpp"

namespace sparkles {

// ---------------------------------------------------------------------------
// Request / response model

struct GenerationConfig {
  double temperature = 1.0;
  double top_p = 1.0;
  int max_tokens = 2048;
  double frequency_penalty = 0.0;
  double presence_penalty = 0.0;
  std::optional<int> beam_size;
  std::optional<double> repetition_penalty;
  std::optional<double> length_penalty;

  /// Throws ConfigError on temperature < 0, top_p outside (0, 1] or
  /// max_tokens < 1.
  void check() const;

  bool operator==(const GenerationConfig&) const = default;
};

enum class ClientRole { data_llm, judge, model_under_test };

/// Data LLM and judge: temperature 1.0, top_p 1.0, 2048 tokens, no
/// penalties. Model under test: temperature 1.0, top_p 0.9, 300 new
/// tokens, repetition/length penalty 1.0, beam 1.
GenerationConfig default_generation_config(ClientRole role);
/// Model-under-test profile used for qualitative demos (beam 2).
GenerationConfig demo_generation_config();

GenerationConfig generation_config_from_json(const Json& j, GenerationConfig base);

struct Endpoint {
  std::string base_url;     // e.g. https://api.openai.com/v1
  std::string model;        // opaque model name
  std::string api_key_env;  // env var holding the key
  std::string api_key;      // resolved secret; never serialized
};

struct ContentPart {
  enum class Kind { text, image };
  Kind kind = Kind::text;
  std::string value;  // text, or the image's media locator

  static ContentPart text(std::string t) { return {Kind::text, std::move(t)}; }
  static ContentPart image(std::string locator) { return {Kind::image, std::move(locator)}; }
  bool operator==(const ContentPart&) const = default;
};

struct ChatMessage {
  std::string role;  // "user" or "assistant"
  std::vector<ContentPart> parts;
};

struct ChatRequest {
  Endpoint endpoint;
  std::string system;
  std::vector<ChatMessage> messages;
  GenerationConfig config;

  /// Throws ProtocolError if a message has no parts.
  void check() const;
};

enum class FinishReason { stop, length, content_filter, other };

struct Usage {
  long prompt_tokens = 0;
  long completion_tokens = 0;
  long total_tokens = 0;
};

struct ChatResponse {
  std::string content;
  FinishReason finish_reason = FinishReason::stop;
  Usage usage;
  int attempts = 1;
};

/// OpenAI-style chat-completions body. Byte-stable for equal requests; the
/// API key is not part of it.
std::string serialize_request(const ChatRequest& req);
/// Fixture key: FNV-1a of the serialized body.
std::string request_hash(const ChatRequest& req);

/// Throws ProtocolError for bodies without choices[0].message.content.
ChatResponse parse_response_body(std::string_view body);

/// A chat-completions reply body carrying `content`.
std::string chat_completion_body(std::string_view content,
                                 std::string_view finish_reason = "stop",
                                 const Usage& usage = {});

// ---------------------------------------------------------------------------
// Transport

struct HttpRequest {
  std::string url;
  std::vector<std::pair<std::string, std::string>> headers;
  std::string body;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Throws TransportError when no HTTP response was obtained.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const HttpRequest& request) = 0;
};

/// Real network transport (cpp-httplib). Thread-safe: one connection per call.
class HttpTransport : public Transport {
 public:
  explicit HttpTransport(std::chrono::seconds timeout = std::chrono::seconds(120))
      : timeout_(timeout) {}
  HttpResponse post(const HttpRequest& request) override;

 private:
  std::chrono::seconds timeout_;
};

// ---------------------------------------------------------------------------
// Retry and rate limiting

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_delay{1000};
  double multiplier = 2.0;
  std::chrono::milliseconds max_delay{60000};

  /// Delay before retry number `retry` (1-based). Non-decreasing in `retry`.
  std::chrono::milliseconds delay_before_retry(int retry) const;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;
Sleeper real_sleeper();

/// Token bucket shared by all calls of one client.
class RateLimiter {
 public:
  /// `requests_per_minute` <= 0 disables limiting.
  explicit RateLimiter(double requests_per_minute, double burst = 1.0);
  void acquire(const Sleeper& sleep);

 private:
  double rate_per_ms_;
  double capacity_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
  std::mutex mu_;
};

class ChatClient {
 public:
  ChatClient(Endpoint endpoint, std::shared_ptr<Transport> transport,
             RetryPolicy retry = {}, Sleeper sleeper = real_sleeper(),
             double requests_per_minute = 0.0);

  /// Sends `req`, retrying transport failures, 408, 429 and 5xx with
  /// exponential backoff. Authentication failures (401/403) are never
  /// retried.
  ///
  /// Throws TransportError once attempts are exhausted, AuthError, or
  /// ProtocolError for malformed bodies and other 4xx statuses.
  ChatResponse complete_chat(ChatRequest req) const;

  /// Request pre-filled with this client's endpoint.
  ChatRequest make_request(std::string system, std::vector<ChatMessage> messages,
                           GenerationConfig config) const;

  const Endpoint& endpoint() const { return endpoint_; }
  const RetryPolicy& retry_policy() const { return retry_; }

 private:
  Endpoint endpoint_;
  std::shared_ptr<Transport> transport_;
  RetryPolicy retry_;
  Sleeper sleeper_;
  std::shared_ptr<RateLimiter> limiter_;
};

/// Extracts the text parts and image parts of a request's last user
/// message; convenient for mocks that answer based on the prompt.
std::string last_user_text(const Json& wire_body);

}  // namespace sparkles
