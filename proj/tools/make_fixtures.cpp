// Records the replay fixtures used by the tests: runs the CLI scenarios
// against a scripted backend and stores every exchange by request hash.
//
//   make_fixtures <tests/data dir> <output dir>

#include <filesystem>
#include <iostream>
#include <sstream>

#include "sparkles/cli.hpp"
#include "sparkles/error.hpp"
#include "sparkles/judge_eval.hpp"
#include "sparkles/mock.hpp"

using namespace sparkles;
namespace fs = std::filesystem;

namespace {

JudgeVerdict scripted_verdict() {
  JudgeVerdict v;
  v.ratings = {{{8, 7, 9}, {7, 8, 8}}};
  v.raw_overall = {8, 8};
  for (auto& turn : v.explanations) turn = {"Accurate.", "Consistent.", "Thorough."};
  return v;
}

HttpResponse ok(const std::string& content) { return {200, chat_completion_body(content)}; }

}  // namespace

int main(int argc, char** argv) {
  if (argc != 3) {
    std::cerr << "usage: make_fixtures <data dir> <output dir>\n";
    return 2;
  }
  const fs::path data = argv[1];
  const fs::path out = argv[2];
  const fs::path scratch = fs::temp_directory_path() / "sparkles_make_fixtures";
  fs::create_directories(out);
  fs::create_directories(scratch);

  const std::string vg_reply = read_file(data / "appendix" / "vg_reply.txt");
  const std::string cc_reply = read_file(data / "appendix" / "cc_reply.txt");
  const Json answers = Json::parse(read_file(data / "eval_answers.json"));

  auto script = std::make_shared<CallbackTransport>([&](const HttpRequest& req) {
    const Json body = Json::parse(req.body);
    const std::string prompt = last_user_text(body);
    if (body["model"] == "sparkleschat") {
      std::size_t users = 0;
      for (const Json& m : body["messages"]) users += m["role"] == "user";
      return ok(users == 1 ? answers["a1"].get<std::string>() : answers["a2"].get<std::string>());
    }
    if (prompt.find("impartial judge") != std::string::npos)
      return ok(render_judge_reply(scripted_verdict()));
    if (prompt.find("three illustrative dialogues") != std::string::npos) return ok(cc_reply);
    if (prompt.find("an illustrative dialogue") != std::string::npos) return ok(vg_reply);
    throw ProtocolError("scripted backend has no reply for this request");
  });
  auto recorder = std::make_shared<RecordingTransport>(script);

  const std::string d = data.string() + "/";
  const std::string s = scratch.string() + "/";
  const std::vector<std::vector<std::string>> runs = {
      {"--seed", "7", "generate", "--mode", "vg", "--count", "1", "--num-images", "2", "--pool",
       d + "vg_pool.json", "--demos", d + "vg_demos.jsonl", "--out", s + "vg.jsonl"},
      {"--seed", "7", "generate", "--mode", "cc", "--count", "1", "--pool", d + "cc_pool.json",
       "--demos", d + "cc_demos.jsonl", "--out", s + "cc.jsonl"},
      {"eval-sparkles", "--bench", d + "eval_item.jsonl", "--model-endpoint",
       "http://model.invalid/v1", "--out", s + "eval.json"},
  };
  for (const auto& args : runs) {
    std::ostringstream o, e;
    CliIo io{o, e, [](const std::string&) { return std::optional<std::string>(); }, recorder,
             [](std::chrono::milliseconds) {}};
    if (const int code = dispatch(args, io); code != 0) {
      std::cerr << "scenario " << args[2] << " failed (" << code << "): " << e.str();
      return 1;
    }
  }
  write_file(out / "pipeline.jsonl", fixture_to_jsonl(recorder->entries()));
  write_file(out / "always_prose.jsonl",
             fixture_to_jsonl({{"*",
                                chat_completion_body("I would be glad to help you imagine a "
                                                     "conversation about these pictures."),
                                200}}));
  fs::remove_all(scratch);
  std::cout << "wrote " << recorder->entries().size() << " entries to "
            << (out / "pipeline.jsonl").string() << "\n";
  return 0;
}
