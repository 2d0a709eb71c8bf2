#include <gtest/gtest.h>

#include "sparkles/error.hpp"
#include "sparkles/schema.hpp"
#include "support.hpp"

using namespace sparkles;

namespace {

Message user(std::vector<ImageId> ids, std::string content) {
  return {Role::user, std::move(ids), std::move(content)};
}
Message assistant(std::string content) { return {Role::assistant, {}, std::move(content)}; }

Dialogue two_turn(std::vector<ImageId> t1, std::vector<ImageId> t2) {
  std::string q1 = "Compare", q2 = "Now";
  for (const auto& id : t1) q1 += " IMAGE#" + id;
  for (const auto& id : t2) q2 += " IMAGE#" + id;
  return {"d", {user(t1, q1 + "."), assistant("Sure."), user(t2, q2 + "?"), assistant("Yes.")}};
}

}  // namespace

TEST(Validate, AcceptsWellFormedVg) {
  const auto r = validate_dialogue(two_turn({"1", "2"}, {"3"}), builtin_spec("vg"));
  EXPECT_TRUE(r.valid()) << (r.violations.empty() ? "" : r.violations[0].message);
  EXPECT_EQ(r.verdict(), "valid");
}

TEST(Validate, ImageCountOutsideSpec) {
  const auto r = validate_dialogue(two_turn({"1"}, {"3"}), builtin_spec("vg"));
  EXPECT_TRUE(r.has_rule("image_count"));
}

TEST(Validate, ReintroducedImageViolatesDisjointness) {
  const auto r = validate_dialogue(two_turn({"1", "2"}, {"2"}), builtin_spec("vg"));
  EXPECT_TRUE(r.has_rule("disjoint"));
}

TEST(Validate, MentionOfUnintroducedImage) {
  Dialogue d = two_turn({"1", "2"}, {"3"});
  d.messages[0].content += " Also IMAGE#99.";
  EXPECT_TRUE(validate_dialogue(d, builtin_spec("vg")).has_rule("unknown_mention"));
}

TEST(Validate, StructureRules) {
  Dialogue d = two_turn({"1", "2"}, {"3"});
  d.messages.pop_back();
  EXPECT_FALSE(validate_dialogue(d, builtin_spec("vg")).valid());

  Dialogue swapped = two_turn({"1", "2"}, {"3"});
  std::swap(swapped.messages[0], swapped.messages[1]);
  EXPECT_FALSE(validate_dialogue(swapped, builtin_spec("vg")).valid());

  Dialogue bad_id = two_turn({"1", "x2"}, {"3"});
  EXPECT_TRUE(validate_dialogue(bad_id, builtin_spec("vg")).has_rule("image_id_format"));

  Dialogue empty = two_turn({"1", "2"}, {"3"});
  empty.messages[1].content.clear();
  EXPECT_TRUE(validate_dialogue(empty, builtin_spec("vg")).has_rule("empty_content"));
}

TEST(Validate, ReportsEveryViolation) {
  Dialogue d = two_turn({"1"}, {"1", "2"});
  const auto r = validate_dialogue(d, builtin_spec("vg"));
  EXPECT_TRUE(r.has_rule("image_count"));
  EXPECT_TRUE(r.has_rule("disjoint"));
  EXPECT_GE(r.violations.size(), 3u);
}

TEST(Validate, UnmentionedImageIsOnlyAWarning) {
  Dialogue d = two_turn({"1", "2"}, {"3"});
  d.messages[2].content = "And the last one?";
  const auto r = validate_dialogue(d, builtin_spec("vg"));
  EXPECT_TRUE(r.valid());
  EXPECT_FALSE(r.warnings.empty());
}

TEST(Specs, BuiltinsAreWellFormed) {
  for (const DatasetSpec& s : builtin_specs()) EXPECT_NO_THROW(check_spec(s)) << s.name;
  EXPECT_THROW(builtin_spec("nope"), ConfigError);
  EXPECT_THROW(check_spec({"bad", {{0}}, 1}), SchemaError);
  EXPECT_THROW(check_spec({"bad", {{}}, 1}), SchemaError);
}

TEST(Refs, ExtractsInFirstOccurrenceOrder) {
  EXPECT_EQ(extract_image_refs("IMAGE#12 and IMAGE#3, again IMAGE#12; IMAGE#x"),
            (std::vector<ImageId>{"12", "3"}));
}

TEST(Parse, PythonDialectAndNumericIds) {
  const auto ds = parse_dialogues(
      "[[{'role': 'user', 'image_ids': [7, 8], 'content': 'IMAGE#7 and IMAGE#8?'},"
      " {'role': 'assistant', 'content': 'Both.'}]]");
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds[0].messages[0].image_ids, (std::vector<ImageId>{"7", "8"}));
}

TEST(Parse, SchemaErrors) {
  EXPECT_THROW(parse_dialogues("[[{'role': 'user', 'content': 'x'}]]"), SchemaError);
  EXPECT_THROW(parse_dialogues("[[{'role': 'robot', 'content': 'x'}]]"), SchemaError);
  EXPECT_THROW(parse_dialogues("[[{'role': 'assistant', 'image_ids': [1], 'content': 'x'}]]"),
               SchemaError);
  EXPECT_THROW(parse_dialogues("[[ {"), SyntaxError);
}

TEST(Serialization, JsonlRoundTrip) {
  const Dialogue d = test::vg_sample_dialogue();
  const Dialogue back = dialogue_from_json(Json::parse(dialogue_to_jsonl(d)));
  EXPECT_EQ(back, d);
  const auto dir = test::scratch_dir("schema");
  write_dialogues_jsonl(dir / "d.jsonl", {d, d});
  EXPECT_EQ(read_dialogues(dir / "d.jsonl").size(), 2u);
  EXPECT_EQ(parse_dialogues(dialogues_to_json_array({d})).at(0).messages, d.messages);
}

TEST(Serialization, ReadsPoolsAndDemos) {
  EXPECT_EQ(read_image_pool(test::data("vg_pool.json")).size(), 4u);
  EXPECT_EQ(read_image_pool(test::data("cc_pool.json")).size(), 9u);
  EXPECT_EQ(read_dialogues(test::data("cc_demos.jsonl")).size(), 3u);
  EXPECT_THROW(image_from_json(Json{{"image_id", "12a"}, {"caption", "c"}}), SchemaError);
  EXPECT_THROW(image_from_json(Json{{"image_id", "12"}, {"caption", ""}}), SchemaError);
}
