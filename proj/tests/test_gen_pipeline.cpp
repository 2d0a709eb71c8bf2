#include <gtest/gtest.h>

#include <regex>

#include "sparkles/error.hpp"
#include "sparkles/gen_pipeline.hpp"
#include "support.hpp"

using namespace sparkles;

namespace {

std::vector<ImageDescription> synthetic_pool(int n) {
  std::vector<ImageDescription> pool;
  for (int i = 0; i < n; ++i)
    pool.push_back({std::to_string(1000 + i), "A photo numbered " + std::to_string(i) + ".", {}});
  return pool;
}

Dialogue demo(const std::string& id, int first_turn_images) {
  std::vector<ImageId> ids;
  std::string q = "Look at";
  for (int i = 0; i < first_turn_images; ++i) {
    ids.push_back(std::to_string(10 + i));
    q += " IMAGE#" + ids.back();
  }
  return {id,
          {{Role::user, ids, q + "."},
           {Role::assistant, {}, "They differ."},
           {Role::user, {"20"}, "And IMAGE#20?"},
           {Role::assistant, {}, "It fits."}}};
}

/// Data LLM stand-in that answers a single-dialogue prompt with a valid
/// dialogue over the offered candidates.
HttpResponse vg_echo(const HttpRequest& req) {
  const std::string prompt = last_user_text(Json::parse(req.body));
  static const std::regex id_re("'image_id': (\\d+)");
  std::vector<std::string> ids;
  for (std::sregex_iterator it(prompt.begin(), prompt.end(), id_re), end; it != end; ++it)
    ids.push_back((*it)[1]);
  const bool three = prompt.find("selects three highly") != std::string::npos;
  const std::size_t n = three ? 3 : 2;
  std::vector<ImageId> t1(ids.end() - 4, ids.end() - 4 + n);
  std::string q = "Compare";
  for (const auto& id : t1) q += " IMAGE#" + id;
  const ImageId t2 = *(ids.end() - 4 + n);
  Dialogue d{"", {{Role::user, t1, q + "."},
                  {Role::assistant, {}, "Sure."},
                  {Role::user, {t2}, "What about IMAGE#" + t2 + "?"},
                  {Role::assistant, {}, "It continues."}}};
  return test::ok_reply("```json\n" + dialogues_to_json_array({d}) + "\n```");
}

}  // namespace

TEST(PyRepr, QuotesLikePython) {
  EXPECT_EQ(py_repr("plain"), "'plain'");
  EXPECT_EQ(py_repr("it's"), "\"it's\"");
  EXPECT_EQ(py_repr("both ' and \""), "'both \\' and \"'");
  EXPECT_EQ(py_repr("new\nline\\"), "'new\\nline\\\\'");
}

TEST(Template, SinglePassSubstitution) {
  EXPECT_EQ(fill_template("a {X} b {Y}", {{"X", "{Y}"}, {"Y", "y"}}, {"X", "Y"}), "a {Y} b y");
  EXPECT_EQ(fill_template("keep {this}", {}, {}), "keep {this}");
  EXPECT_THROW(fill_template("{X}", {}, {"X"}), TemplateError);
}

TEST(Prompts, SingleDialogueMatchesGolden) {
  const auto demos = read_dialogues(test::data("vg_demos.jsonl"));
  const auto cands = read_image_pool(test::data("vg_pool.json"));
  EXPECT_EQ(build_single_dialogue_prompt(demos, cands, NumImages::two),
            test::read_data("golden/single_dialogue_prompt.txt"));
}

TEST(Prompts, MultiDialogueMatchesGolden) {
  const auto demos = read_dialogues(test::data("cc_demos.jsonl"));
  const auto cands = read_image_pool(test::data("cc_pool.json"));
  EXPECT_EQ(build_multi_dialogue_prompt(demos, cands),
            test::read_data("golden/multi_dialogue_prompt.txt"));
}

TEST(Prompts, ShapeIsEnforced) {
  const auto demos = read_dialogues(test::data("cc_demos.jsonl"));
  auto cands = read_image_pool(test::data("cc_pool.json"));
  EXPECT_THROW(build_multi_dialogue_prompt({demos[0], demos[1]}, cands), TemplateError);
  cands.pop_back();
  EXPECT_THROW(build_multi_dialogue_prompt(demos, cands), TemplateError);
  EXPECT_THROW(build_single_dialogue_prompt({}, synthetic_pool(4), NumImages::two), TemplateError);
  auto dup = synthetic_pool(4);
  dup[3].image_id = dup[0].image_id;
  EXPECT_THROW(build_single_dialogue_prompt({demo("d", 2)}, dup, NumImages::two), TemplateError);
}

TEST(Extract, FencedBlockWins) {
  EXPECT_EQ(extract_json_block("Here:\n```json\n[[1]]\n```\nand [2]"), "[[1]]");
}

TEST(Extract, FallsBackToBalancedBrackets) {
  EXPECT_EQ(extract_json_block("Sure [not json] then [[{'a': 1}]] end"), "[[{'a': 1}]]");
  EXPECT_THROW(extract_json_block("no brackets here"), NoJsonFound);
}

TEST(Extract, PublishedRepliesParse) {
  for (const char* name : {"appendix/vg_reply.txt", "appendix/cc_reply.txt"}) {
    const auto ds = parse_dialogues(extract_json_block(test::read_data(name)));
    EXPECT_FALSE(ds.empty()) << name;
  }
}

TEST(Pool, ExclusionAndExhaustion) {
  CandidatePool pool(synthetic_pool(8));
  Rng rng(1);
  const auto a = draw_candidates(pool, 4, true, rng);
  const auto b = draw_candidates(pool, 4, true, rng);
  std::set<ImageId> seen;
  for (const auto& x : a) seen.insert(x.image_id);
  for (const auto& x : b) EXPECT_FALSE(seen.count(x.image_id));
  EXPECT_EQ(pool.remaining(), 0u);
  EXPECT_THROW(draw_candidates(pool, 1, true, rng), PoolExhausted);
  EXPECT_EQ(draw_candidates(pool, 4, false, rng).size(), 4u);
}

TEST(Pool, StatePersists) {
  const auto dir = test::scratch_dir("pool");
  {
    CandidatePool pool(synthetic_pool(8));
    pool.persist_to(dir / "state.json");
    Rng rng(2);
    draw_candidates(pool, 4, true, rng);
  }
  const auto consumed = CandidatePool::load_state(dir / "state.json");
  EXPECT_EQ(consumed.size(), 4u);
  CandidatePool resumed(synthetic_pool(8), consumed);
  EXPECT_EQ(resumed.remaining(), 4u);
}

TEST(Demos, SamplingWithoutReplacement) {
  std::vector<Dialogue> pool = {demo("a", 2), demo("b", 2), demo("c", 3)};
  Rng rng(3);
  const auto s = sample_demonstrations(pool, 3, rng);
  std::set<std::string> ids;
  for (const auto& d : s) ids.insert(d.dialogue_id);
  EXPECT_EQ(ids.size(), 3u);
  EXPECT_THROW(sample_demonstrations(pool, 4, rng), PoolExhausted);
  EXPECT_EQ(DemonstrationPool{pool}.branch(2).size(), 2u);
}

TEST(Generate, FixtureYieldsPublishedDialogues) {
  auto replay = ReplayTransport::from_file(test::data("fixtures/pipeline.jsonl"));
  const ChatClient client = test::client_for(replay);

  DemonstrationPool vg_demos{read_dialogues(test::data("vg_demos.jsonl"))};
  CandidatePool vg_pool(read_image_pool(test::data("vg_pool.json")));
  GenerationContext vg{vg_demos, vg_pool, client};
  const BatchResult a = generate_batch(GenerationTask::single_vg(7, NumImages::two), vg, 1);
  ASSERT_EQ(a.dialogues.size(), 1u);
  EXPECT_EQ(a.dialogues[0].dialogue.question(1).image_ids.size(), 2u);

  DemonstrationPool cc_demos{read_dialogues(test::data("cc_demos.jsonl"))};
  CandidatePool cc_pool(read_image_pool(test::data("cc_pool.json")));
  GenerationContext cc{cc_demos, cc_pool, client};
  const BatchResult b = generate_batch(GenerationTask::multi_cc(7), cc, 1);
  ASSERT_EQ(b.dialogues.size(), 3u);
  std::multiset<std::size_t> counts;
  for (const auto& g : b.dialogues) counts.insert(g.dialogue.question(1).image_ids.size());
  EXPECT_EQ(counts, (std::multiset<std::size_t>{1, 2, 3}));
}

TEST(Generate, ProseRepliesExhaustAttempts) {
  auto replay = ReplayTransport::from_file(test::data("fixtures/always_prose.jsonl"));
  const ChatClient client = test::client_for(replay);
  DemonstrationPool demos{read_dialogues(test::data("vg_demos.jsonl"))};
  CandidatePool pool(synthetic_pool(40));
  GenerationContext ctx{demos, pool, client};
  try {
    generate_dialogues(GenerationTask::single_vg(1, NumImages::two), ctx, 3);
    FAIL() << "expected GenerationFailed";
  } catch (const GenerationFailed& e) {
    EXPECT_EQ(e.reasons().size(), 3u);
  }
  int served = 0;
  for (const auto& [_, n] : replay->served()) served += n;
  EXPECT_EQ(served, 3);
}

TEST(Generate, InvalidRepliesAreRetriedWithFreshCandidates) {
  int calls = 0;
  auto t = std::make_shared<CallbackTransport>([&](const HttpRequest& r) {
    if (++calls == 1) return test::ok_reply("[[{'role': 'user', 'image_ids': [1], 'content': 'x'}]]");
    return vg_echo(r);
  });
  const ChatClient client = test::client_for(t);
  DemonstrationPool demos{{demo("d2", 2), demo("d3", 3)}};
  CandidatePool pool(synthetic_pool(40));
  GenerationContext ctx{demos, pool, client};
  const BatchResult r = generate_batch(GenerationTask::single_vg(5), ctx, 1, 3);
  ASSERT_EQ(r.dialogues.size(), 1u);
  EXPECT_EQ(r.records[0].attempts, 2);
  EXPECT_EQ(r.dialogues[0].provenance.attempt, 2);
}

TEST(Generate, OutputIndependentOfParallelism) {
  auto run = [](std::size_t parallelism) {
    auto t = std::make_shared<CallbackTransport>(vg_echo);
    const ChatClient client = test::client_for(t);
    DemonstrationPool demos{{demo("d2", 2), demo("d3", 3)}};
    CandidatePool pool(synthetic_pool(64));
    GenerationContext ctx{demos, pool, client, default_generation_config(ClientRole::data_llm),
                          parallelism};
    const BatchResult r = generate_batch(GenerationTask::single_vg(11), ctx, 12);
    std::string out;
    for (const auto& g : r.dialogues) out += dialogue_to_jsonl(g.dialogue) + "\n";
    return std::make_pair(out, pool.consumed());
  };
  const auto serial = run(1);
  const auto parallel = run(8);
  EXPECT_EQ(serial.first, parallel.first);
  EXPECT_EQ(serial.second, parallel.second);
  EXPECT_EQ(std::count(serial.first.begin(), serial.first.end(), '\n'), 12);
}

TEST(Generate, DialogueIdsAreDeterministicAndDistinct) {
  EXPECT_EQ(make_dialogue_id(1, 2, 0), make_dialogue_id(1, 2, 0));
  EXPECT_NE(make_dialogue_id(1, 2, 0), make_dialogue_id(1, 2, 1));
  EXPECT_NE(make_dialogue_id(1, 2, 0), make_dialogue_id(2, 2, 0));
  EXPECT_EQ(make_dialogue_id(1, 2, 0).size(), 36u);
}

TEST(Generate, TaskShapeChecks) {
  GenerationTask t = GenerationTask::multi_cc(1);
  t.n_candidates = 4;
  EXPECT_THROW(t.check(), ConfigError);
  GenerationTask v = GenerationTask::single_vg(1);
  v.weight_two = v.weight_three = 0;
  EXPECT_THROW(v.check(), ConfigError);
}
