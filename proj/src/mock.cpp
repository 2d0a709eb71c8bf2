#include "sparkles/mock.hpp"

#include <algorithm>
#include <sstream>

#include <httplib.h>

#include "sparkles/error.hpp"
#include "sparkles/schema.hpp"

namespace sparkles {

std::vector<FixtureEntry> read_fixture(const std::filesystem::path& path) {
  std::vector<FixtureEntry> entries;
  std::istringstream lines(read_file(path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j;
    try {
      j = json_text::parse_strict(line);
    } catch (const SyntaxError& e) {
      throw SyntaxError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!j.contains("request_hash") || !j.contains("response_body"))
      throw SchemaError(path.string() + ":" + std::to_string(lineno) +
                        ": fixture lines need request_hash and response_body");
    FixtureEntry e;
    e.request_hash = j.at("request_hash").get<std::string>();
    const Json& body = j.at("response_body");
    e.response_body = body.is_string() ? body.get<std::string>() : body.dump();
    e.status = j.value("status", 200);
    entries.push_back(std::move(e));
  }
  return entries;
}

std::string fixture_to_jsonl(const std::vector<FixtureEntry>& entries) {
  std::string out;
  for (const FixtureEntry& e : entries) {
    OrderedJson j;
    j["request_hash"] = e.request_hash;
    j["response_body"] = e.response_body;
    j["status"] = e.status;
    out += j.dump();
    out += '\n';
  }
  return out;
}

ReplayTransport::ReplayTransport(std::vector<FixtureEntry> entries) {
  for (FixtureEntry& e : entries) by_hash_[e.request_hash].push_back(std::move(e));
}

std::shared_ptr<ReplayTransport> ReplayTransport::from_file(const std::filesystem::path& path) {
  return std::make_shared<ReplayTransport>(read_fixture(path));
}

HttpResponse ReplayTransport::post(const HttpRequest& request) {
  const std::string hash = json_text::fnv1a_hex(request.body);
  std::lock_guard lock(mu_);
  auto it = by_hash_.find(hash);
  std::string key = hash;
  if (it == by_hash_.end()) {
    it = by_hash_.find("*");
    key = "*";
  }
  if (it == by_hash_.end())
    throw FixtureMiss("no fixture entry for request " + hash);
  const int n = served_[key]++;
  const auto& seq = it->second;
  const FixtureEntry& e = seq[std::min<std::size_t>(static_cast<std::size_t>(n), seq.size() - 1)];
  return {e.status, e.response_body};
}

std::map<std::string, int> ReplayTransport::served() const {
  std::lock_guard lock(mu_);
  return served_;
}

HttpResponse CallbackTransport::post(const HttpRequest& request) {
  {
    std::lock_guard lock(mu_);
    ++calls_;
  }
  return handler_(request);
}

int CallbackTransport::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

HttpResponse RecordingTransport::post(const HttpRequest& request) {
  HttpResponse res = inner_->post(request);
  std::lock_guard lock(mu_);
  entries_.push_back({json_text::fnv1a_hex(request.body), res.body, res.status});
  return res;
}

std::vector<FixtureEntry> RecordingTransport::entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

MockServer::MockServer(std::shared_ptr<Transport> backend)
    : backend_(std::move(backend)), server_(std::make_unique<httplib::Server>()) {
  server_->Post(R"(.*/chat/completions)", [this](const httplib::Request& req,
                                                  httplib::Response& res) {
    try {
      HttpResponse out = backend_->post({req.path, {}, req.body});
      res.status = out.status;
      res.set_content(out.body, "application/json");
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(std::string("{\"error\":") + json_text::quote(e.what()) + "}",
                      "application/json");
    }
  });
  port_ = server_->bind_to_any_port("127.0.0.1");
  if (port_ <= 0) throw TransportError("mock server could not bind a port");
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

MockServer::~MockServer() {
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

std::string MockServer::base_url() const {
  return "http://127.0.0.1:" + std::to_string(port_) + "/v1";
}

}  // namespace sparkles
