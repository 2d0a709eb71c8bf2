#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "sparkles/cli.hpp"
#include "sparkles/gen_pipeline.hpp"
#include "sparkles/llm_client.hpp"
#include "sparkles/mock.hpp"
#include "sparkles/schema.hpp"

namespace sparkles::test {

inline std::filesystem::path data_dir() { return SPARKLES_TEST_DATA; }
inline std::string data(const std::string& rel) { return (data_dir() / rel).string(); }
inline std::string read_data(const std::string& rel) { return read_file(data_dir() / rel); }

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  static std::atomic<int> counter{0};
  const auto dir = std::filesystem::temp_directory_path() /
                   ("sparkles_test_" + name + "_" + std::to_string(::getpid()) + "_" +
                    std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Sleeper no_sleep() {
  return [](std::chrono::milliseconds) {};
}

inline RetryPolicy fast_retry(int attempts = 3) {
  RetryPolicy r;
  r.max_attempts = attempts;
  r.base_delay = std::chrono::milliseconds(1);
  r.max_delay = std::chrono::milliseconds(2);
  return r;
}

inline ChatClient client_for(std::shared_ptr<Transport> t, const std::string& model = "gpt-4",
                             RetryPolicy retry = {}) {
  return ChatClient(Endpoint{"http://mock.invalid/v1", model, "", ""}, std::move(t), retry,
                    no_sleep());
}

inline HttpResponse ok_reply(const std::string& content) {
  return {200, chat_completion_body(content)};
}

/// The single-dialogue sample reply, parsed.
inline Dialogue vg_sample_dialogue() {
  std::vector<Dialogue> ds =
      parse_dialogues(extract_json_block(read_data("appendix/vg_reply.txt")));
  Dialogue d = ds.at(0);
  d.dialogue_id = "vg-sample";
  return d;
}

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

inline CliResult run_cli(const std::vector<std::string>& args,
                         std::shared_ptr<Transport> transport = nullptr,
                         std::map<std::string, std::string> env = {}) {
  std::ostringstream out, err;
  CliIo io{out, err,
           [env](const std::string& k) -> std::optional<std::string> {
             auto it = env.find(k);
             if (it == env.end()) return std::nullopt;
             return it->second;
           },
           std::move(transport), no_sleep()};
  const int code = dispatch(args, io);
  return {code, out.str(), err.str()};
}

}  // namespace sparkles::test
