#include "sparkles/llm_client.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include <httplib.h>

#include "sparkles/error.hpp"

namespace sparkles {

void GenerationConfig::check() const {
  if (!(temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("top_p must be in (0, 1]");
  if (max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
  if (beam_size && *beam_size < 1) throw ConfigError("beam_size must be >= 1");
}

GenerationConfig default_generation_config(ClientRole role) {
  GenerationConfig c;
  switch (role) {
    case ClientRole::data_llm:
    case ClientRole::judge:
      c.temperature = 1.0;
      c.top_p = 1.0;
      c.max_tokens = 2048;
      c.frequency_penalty = 0.0;
      c.presence_penalty = 0.0;
      break;
    case ClientRole::model_under_test:
      c.temperature = 1.0;
      c.top_p = 0.9;
      c.max_tokens = 300;
      c.repetition_penalty = 1.0;
      c.length_penalty = 1.0;
      c.beam_size = 1;
      break;
  }
  return c;
}

GenerationConfig demo_generation_config() {
  GenerationConfig c = default_generation_config(ClientRole::model_under_test);
  c.beam_size = 2;
  return c;
}

GenerationConfig generation_config_from_json(const Json& j, GenerationConfig c) {
  if (!j.is_object()) throw ConfigError("generation config must be an object");
  if (j.contains("temperature")) c.temperature = j.at("temperature").get<double>();
  if (j.contains("top_p")) c.top_p = j.at("top_p").get<double>();
  if (j.contains("max_tokens")) c.max_tokens = j.at("max_tokens").get<int>();
  if (j.contains("max_new_tokens")) c.max_tokens = j.at("max_new_tokens").get<int>();
  if (j.contains("frequency_penalty"))
    c.frequency_penalty = j.at("frequency_penalty").get<double>();
  if (j.contains("presence_penalty"))
    c.presence_penalty = j.at("presence_penalty").get<double>();
  if (j.contains("beam_size")) c.beam_size = j.at("beam_size").get<int>();
  if (j.contains("repetition_penalty"))
    c.repetition_penalty = j.at("repetition_penalty").get<double>();
  if (j.contains("length_penalty")) c.length_penalty = j.at("length_penalty").get<double>();
  c.check();
  return c;
}

void ChatRequest::check() const {
  for (const ChatMessage& m : messages)
    if (m.parts.empty()) throw ProtocolError("chat message with no content parts");
}

namespace {

OrderedJson content_to_wire(const std::vector<ContentPart>& parts) {
  if (parts.size() == 1 && parts.front().kind == ContentPart::Kind::text)
    return parts.front().value;
  OrderedJson arr = OrderedJson::array();
  for (const ContentPart& p : parts) {
    OrderedJson o;
    if (p.kind == ContentPart::Kind::text) {
      o["type"] = "text";
      o["text"] = p.value;
    } else {
      o["type"] = "image_url";
      o["image_url"] = OrderedJson{{"url", p.value}};
    }
    arr.push_back(std::move(o));
  }
  return arr;
}

FinishReason finish_from_string(std::string_view s) {
  if (s == "stop") return FinishReason::stop;
  if (s == "length") return FinishReason::length;
  if (s == "content_filter") return FinishReason::content_filter;
  return FinishReason::other;
}

}  // namespace

std::string serialize_request(const ChatRequest& req) {
  OrderedJson body;
  body["model"] = req.endpoint.model;
  OrderedJson msgs = OrderedJson::array();
  msgs.push_back(OrderedJson{{"role", "system"}, {"content", req.system}});
  for (const ChatMessage& m : req.messages)
    msgs.push_back(OrderedJson{{"role", m.role}, {"content", content_to_wire(m.parts)}});
  body["messages"] = std::move(msgs);
  const GenerationConfig& c = req.config;
  body["temperature"] = c.temperature;
  body["top_p"] = c.top_p;
  body["max_tokens"] = c.max_tokens;
  body["frequency_penalty"] = c.frequency_penalty;
  body["presence_penalty"] = c.presence_penalty;
  if (c.beam_size) body["beam_size"] = *c.beam_size;
  if (c.repetition_penalty) body["repetition_penalty"] = *c.repetition_penalty;
  if (c.length_penalty) body["length_penalty"] = *c.length_penalty;
  return body.dump();
}

std::string request_hash(const ChatRequest& req) {
  return json_text::fnv1a_hex(serialize_request(req));
}

ChatResponse parse_response_body(std::string_view body) {
  Json doc = Json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded() || !doc.is_object())
    throw ProtocolError("response body is not a JSON object");
  if (!doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty())
    throw ProtocolError("response has no choices");
  const Json& choice = doc["choices"][0];
  if (!choice.is_object() || !choice.contains("message") || !choice["message"].is_object())
    throw ProtocolError("choice has no message");

  ChatResponse out;
  if (choice.contains("finish_reason") && choice["finish_reason"].is_string())
    out.finish_reason = finish_from_string(choice["finish_reason"].get<std::string>());
  const Json& msg = choice["message"];
  if (msg.contains("content") && msg["content"].is_string()) {
    out.content = msg["content"].get<std::string>();
  } else if (out.finish_reason == FinishReason::stop) {
    throw ProtocolError("message content missing on a normal finish");
  }
  if (doc.contains("usage") && doc["usage"].is_object()) {
    const Json& u = doc["usage"];
    out.usage.prompt_tokens = u.value("prompt_tokens", 0L);
    out.usage.completion_tokens = u.value("completion_tokens", 0L);
    out.usage.total_tokens = u.value("total_tokens", 0L);
  }
  return out;
}

std::string chat_completion_body(std::string_view content, std::string_view finish_reason,
                                 const Usage& usage) {
  OrderedJson msg{{"role", "assistant"}, {"content", std::string(content)}};
  OrderedJson choice{{"index", 0}, {"message", msg}, {"finish_reason", std::string(finish_reason)}};
  OrderedJson body;
  body["object"] = "chat.completion";
  body["choices"] = OrderedJson::array({choice});
  body["usage"] = OrderedJson{{"prompt_tokens", usage.prompt_tokens},
                              {"completion_tokens", usage.completion_tokens},
                              {"total_tokens", usage.total_tokens}};
  return body.dump();
}

std::string last_user_text(const Json& wire_body) {
  if (!wire_body.contains("messages")) return {};
  const Json& msgs = wire_body["messages"];
  for (auto it = msgs.rbegin(); it != msgs.rend(); ++it) {
    if ((*it).value("role", "") != "user") continue;
    const Json& content = (*it)["content"];
    if (content.is_string()) return content.get<std::string>();
    std::string text;
    for (const Json& part : content)
      if (part.value("type", "") == "text") text += part.value("text", "");
    return text;
  }
  return {};
}

// ---------------------------------------------------------------------------

HttpResponse HttpTransport::post(const HttpRequest& request) {
  const std::string& url = request.url;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw TransportError("malformed URL '" + url + "'");
  const auto path_start = url.find('/', scheme_end + 3);
  const std::string origin = url.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

  httplib::Client cli(origin);
  if (!cli.is_valid()) throw TransportError("unsupported URL '" + url + "'");
  cli.set_connection_timeout(std::chrono::seconds(10));
  cli.set_read_timeout(timeout_);
  cli.set_write_timeout(timeout_);
  httplib::Headers headers;
  for (const auto& [k, v] : request.headers) headers.emplace(k, v);
  auto res = cli.Post(path, headers, request.body, "application/json");
  if (!res) throw TransportError("POST " + url + " failed: " + httplib::to_string(res.error()));
  return {res->status, res->body};
}

// ---------------------------------------------------------------------------

std::chrono::milliseconds RetryPolicy::delay_before_retry(int retry) const {
  if (retry < 1) return std::chrono::milliseconds(0);
  const double scaled =
      static_cast<double>(base_delay.count()) * std::pow(multiplier, retry - 1);
  const double capped = std::min(scaled, static_cast<double>(max_delay.count()));
  return std::chrono::milliseconds(static_cast<long long>(capped));
}

Sleeper real_sleeper() {
  return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

RateLimiter::RateLimiter(double requests_per_minute, double burst)
    : rate_per_ms_(requests_per_minute > 0 ? requests_per_minute / 60000.0 : 0.0),
      capacity_(std::max(burst, 1.0)),
      tokens_(std::max(burst, 1.0)),
      last_(std::chrono::steady_clock::now()) {}

void RateLimiter::acquire(const Sleeper& sleep) {
  if (rate_per_ms_ <= 0) return;
  std::unique_lock lock(mu_);
  while (true) {
    const auto now = std::chrono::steady_clock::now();
    const double elapsed =
        std::chrono::duration<double, std::milli>(now - last_).count();
    tokens_ = std::min(capacity_, tokens_ + elapsed * rate_per_ms_);
    last_ = now;
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    const auto wait = std::chrono::milliseconds(
        static_cast<long long>(std::ceil((1.0 - tokens_) / rate_per_ms_)));
    lock.unlock();
    sleep(wait);
    lock.lock();
  }
}

ChatClient::ChatClient(Endpoint endpoint, std::shared_ptr<Transport> transport,
                       RetryPolicy retry, Sleeper sleeper, double requests_per_minute)
    : endpoint_(std::move(endpoint)),
      transport_(std::move(transport)),
      retry_(retry),
      sleeper_(std::move(sleeper)),
      limiter_(std::make_shared<RateLimiter>(requests_per_minute)) {
  if (!transport_) throw ConfigError("chat client needs a transport");
  if (retry_.max_attempts < 1) throw ConfigError("retry max_attempts must be >= 1");
}

ChatRequest ChatClient::make_request(std::string system, std::vector<ChatMessage> messages,
                                     GenerationConfig config) const {
  return ChatRequest{endpoint_, std::move(system), std::move(messages), config};
}

ChatResponse ChatClient::complete_chat(ChatRequest req) const {
  if (req.endpoint.base_url.empty() && req.endpoint.model.empty()) req.endpoint = endpoint_;
  req.check();
  req.config.check();

  HttpRequest http;
  std::string base = req.endpoint.base_url;
  while (!base.empty() && base.back() == '/') base.pop_back();
  http.url = base + "/chat/completions";
  http.body = serialize_request(req);
  http.headers.emplace_back("Content-Type", "application/json");
  if (!req.endpoint.api_key.empty())
    http.headers.emplace_back("Authorization", "Bearer " + req.endpoint.api_key);

  std::string last_error;
  for (int attempt = 1; attempt <= retry_.max_attempts; ++attempt) {
    if (attempt > 1) sleeper_(retry_.delay_before_retry(attempt - 1));
    limiter_->acquire(sleeper_);
    HttpResponse res;
    try {
      res = transport_->post(http);
    } catch (const TransportError& e) {
      last_error = e.what();
      continue;
    }
    if (res.status == 200) {
      ChatResponse out = parse_response_body(res.body);
      out.attempts = attempt;
      return out;
    }
    if (res.status == 401 || res.status == 403)
      throw AuthError("authentication rejected (HTTP " + std::to_string(res.status) + ")");
    if (res.status == 408 || res.status == 429 || res.status >= 500) {
      last_error = "HTTP " + std::to_string(res.status);
      continue;
    }
    throw ProtocolError("unexpected HTTP " + std::to_string(res.status) + ": " +
                        res.body.substr(0, 200));
  }
  throw TransportError("giving up after " + std::to_string(retry_.max_attempts) +
                       " attempts: " + last_error);
}

}  // namespace sparkles
