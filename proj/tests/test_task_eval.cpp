#include <gtest/gtest.h>

#include "sparkles/error.hpp"
#include "sparkles/task_eval.hpp"
#include "support.hpp"
#include "task_cases.hpp"

using namespace sparkles;

namespace {

TaskExample example(TaskKind task, const std::string& text) {
  TaskExample ex;
  ex.task = task;
  ex.example_id = "e";
  ex.text = text;
  ex.gold = task_labels(task)[0];
  return ex;
}

std::set<std::size_t> first_n(std::size_t n) {
  std::set<std::size_t> s;
  for (std::size_t i = 0; i < n; ++i) s.insert(i);
  return s;
}

}  // namespace

TEST(TaskPrompt, MatchesGoldens) {
  const Json texts = Json::parse(test::read_data("task_texts.json"));
  EXPECT_EQ(build_task_prompt(example(TaskKind::nlvr2, texts["nlvr2"])),
            test::read_data("golden/task_prompt_nlvr2.txt"));
  EXPECT_EQ(build_task_prompt(example(TaskKind::bison, texts["bison"])),
            test::read_data("golden/task_prompt_bison.txt"));
}

TEST(Extract, UsesOnlyTheTailAfterLastTherefore) {
  const std::string head = "Let's think step by step. IMAGE#2 has a surfer. Therefore it is odd. ";
  EXPECT_EQ(extract_final_answer(head + "Therefore, the answer is IMAGE#1.", TaskKind::bison),
            "IMAGE#1");
  // Mutating text before the last "Therefore" never changes the answer.
  for (const std::string noise : {"IMAGE#1", "IMAGE#2", "TRUE", "FALSE", "both IMAGE#1 and IMAGE#2"}) {
    const std::string r = "Let's think step by step. " + noise + ". Therefore, the answer is IMAGE#2.";
    EXPECT_EQ(extract_final_answer(r, TaskKind::bison), "IMAGE#2") << noise;
  }
  // Mutating the tail does.
  EXPECT_EQ(extract_final_answer("Let's think step by step. x. Therefore, FALSE.", TaskKind::nlvr2),
            "FALSE");
  EXPECT_EQ(extract_final_answer("Let's think step by step. x. Therefore, TRUE.", TaskKind::nlvr2),
            "TRUE");
}

TEST(Extract, EchoedOptionListIsIgnored) {
  EXPECT_EQ(extract_final_answer(
                "Let's think step by step. Therefore, the answer (TRUE or FALSE) is false.",
                TaskKind::nlvr2),
            "FALSE");
  EXPECT_EQ(extract_final_answer(
                "Let's think step by step. Therefore, the answer (IMAGE#1 or IMAGE#2) is IMAGE#2",
                TaskKind::bison),
            "IMAGE#2");
}

TEST(Extract, FormatViolationsAndAmbiguity) {
  EXPECT_THROW(extract_final_answer("The answer is TRUE. Therefore TRUE.", TaskKind::nlvr2),
               FormatViolation);
  EXPECT_THROW(extract_final_answer("Let's think step by step. It is TRUE.", TaskKind::nlvr2),
               FormatViolation);
  EXPECT_THROW(extract_final_answer("Let's think step by step. Therefore, TRUE or FALSE.",
                                    TaskKind::nlvr2),
               Ambiguous);
  EXPECT_THROW(extract_final_answer("Let's think step by step. Therefore, unclear.",
                                    TaskKind::bison),
               Ambiguous);
  EXPECT_THROW(extract_final_answer("Let's think step by step. Therefore IMAGE#12.",
                                    TaskKind::bison),
               Ambiguous);
}

TEST(Run, AccuracyArithmetic) {
  const auto examples = test::bison_examples(150);
  auto t = test::scripted_task_model(examples, first_n(85));
  const TaskReport r = run_task_eval(examples, test::client_for(t, "m"));
  EXPECT_EQ(r.total, 150u);
  EXPECT_EQ(r.correct, 85u);
  EXPECT_DOUBLE_EQ(r.accuracy_percent(), 56.7);
}

TEST(Run, MalformedRepliesRegenerateExactlyMaxRegen) {
  for (int max_regen : {0, 1, 3}) {
    auto t = std::make_shared<CallbackTransport>(
        [](const HttpRequest&) { return test::ok_reply("I think it is the first one."); });
    TaskEvalOptions opts;
    opts.max_regen = max_regen;
    const TaskReport r =
        run_task_eval(test::bison_examples(1), test::client_for(t, "m"), opts);
    EXPECT_EQ(t->calls(), max_regen + 1);
    EXPECT_EQ(r.results[0].attempts, max_regen + 1);
    EXPECT_FALSE(r.results[0].extracted.has_value());
    EXPECT_EQ(r.correct, 0u);
    EXPECT_EQ(r.total, 1u);
  }
}

TEST(Run, RecoversAfterOneMalformedReply) {
  const auto examples = test::bison_examples(1);
  auto good = test::scripted_task_model(examples, {0});
  int calls = 0;
  auto t = std::make_shared<CallbackTransport>([&](const HttpRequest& r) {
    if (++calls == 1) return test::ok_reply("Therefore IMAGE#1");
    return good->post(r);
  });
  const TaskReport r = run_task_eval(examples, test::client_for(t, "m"));
  EXPECT_EQ(r.results[0].attempts, 2);
  EXPECT_EQ(r.correct, 1u);
}

TEST(Run, EmptyInputIsAConfigError) {
  auto t = test::scripted_task_model({}, {});
  EXPECT_THROW(run_task_eval({}, test::client_for(t, "m")), ConfigError);
}

TEST(Data, DedupAndSampling) {
  const auto examples = test::bison_examples(10);
  const DedupResult d = dedup_against_training(examples, {"L3", "R7"});
  EXPECT_EQ(d.removed, 2u);
  EXPECT_EQ(d.kept.size(), 8u);
  const auto s = sample_examples(examples, 4, 9);
  ASSERT_EQ(s.size(), 4u);
  auto index = [](const TaskExample& e) { return std::stoi(e.example_id.substr(6)); };
  for (std::size_t i = 1; i < s.size(); ++i) EXPECT_LT(index(s[i - 1]), index(s[i]));
  EXPECT_EQ(sample_examples(examples, 4, 9)[0].example_id, s[0].example_id);
  EXPECT_EQ(sample_examples(examples, 50, 9).size(), 10u);
}

TEST(Data, Loaders) {
  const auto dir = test::scratch_dir("task");
  write_file(dir / "bison.json",
             R"({"data": [{"bison_id": 5, "caption": "c", "true_image_id": 22,
                 "image_candidates": [{"image_id": 11, "image_filename": "a.jpg"},
                                      {"image_id": 22, "image_filename": "b.jpg"}]}]})");
  const auto b = load_bison(dir / "bison.json", "/imgs");
  ASSERT_EQ(b.size(), 1u);
  EXPECT_EQ(b[0].gold, "IMAGE#2");
  EXPECT_EQ(b[0].media.first, "/imgs/a.jpg");
  write_file(dir / "nlvr2.jsonl",
             "{\"identifier\": \"dev-850-0-1\", \"sentence\": \"s\", \"label\": \"True\"}\n");
  const auto n = load_nlvr2(dir / "nlvr2.jsonl", "/imgs");
  ASSERT_EQ(n.size(), 1u);
  EXPECT_EQ(n[0].gold, "TRUE");
  EXPECT_EQ(n[0].media.second, "/imgs/dev-850-0-img1.png");
  write_file(dir / "ids.txt", "1\n2\n\n3\n");
  EXPECT_EQ(read_id_registry(dir / "ids.txt"), (std::set<std::string>{"1", "2", "3"}));
  write_file(dir / "ids.json", "[\"4\", 5]");
  EXPECT_EQ(read_id_registry(dir / "ids.json"), (std::set<std::string>{"4", "5"}));
}
