#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "sparkles/llm_client.hpp"

namespace httplib {
class Server;
}

namespace sparkles {

/// One record/replay fixture line: {request_hash, response_body, status}.
struct FixtureEntry {
  std::string request_hash;  // "*" matches any request without its own entry
  std::string response_body;
  int status = 200;
};

std::vector<FixtureEntry> read_fixture(const std::filesystem::path& path);
std::string fixture_to_jsonl(const std::vector<FixtureEntry>& entries);

/// Replays recorded responses keyed by the FNV-1a hash of the request body.
/// Several entries under one hash are served in order and the last one
/// repeats. A request with no matching entry and no "*" entry throws
/// FixtureMiss, which the client does not retry.
class ReplayTransport : public Transport {
 public:
  explicit ReplayTransport(std::vector<FixtureEntry> entries);
  static std::shared_ptr<ReplayTransport> from_file(const std::filesystem::path& path);

  HttpResponse post(const HttpRequest& request) override;

  /// Requests served so far, by hash.
  std::map<std::string, int> served() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::vector<FixtureEntry>> by_hash_;
  std::map<std::string, int> served_;
};

/// Answers with a user-supplied function; the function may throw
/// TransportError to simulate connection failures.
class CallbackTransport : public Transport {
 public:
  using Handler = std::function<HttpResponse(const HttpRequest&)>;
  explicit CallbackTransport(Handler handler) : handler_(std::move(handler)) {}
  HttpResponse post(const HttpRequest& request) override;
  int calls() const;

 private:
  Handler handler_;
  mutable std::mutex mu_;
  int calls_ = 0;
};

/// Forwards to another transport and records every exchange as a fixture
/// entry.
class RecordingTransport : public Transport {
 public:
  explicit RecordingTransport(std::shared_ptr<Transport> inner) : inner_(std::move(inner)) {}
  HttpResponse post(const HttpRequest& request) override;
  std::vector<FixtureEntry> entries() const;

 private:
  std::shared_ptr<Transport> inner_;
  mutable std::mutex mu_;
  std::vector<FixtureEntry> entries_;
};

/// Local HTTP server that answers POST */chat/completions through a
/// backing transport, typically a ReplayTransport.
class MockServer {
 public:
  explicit MockServer(std::shared_ptr<Transport> backend);
  ~MockServer();
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  int port() const { return port_; }
  std::string base_url() const;

 private:
  std::shared_ptr<Transport> backend_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace sparkles
