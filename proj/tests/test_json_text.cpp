#include <gtest/gtest.h>

#include "sparkles/error.hpp"
#include "sparkles/json_text.hpp"

using namespace sparkles;
using json_text::parse_lenient;

TEST(Lenient, StrictJsonPassesThrough) {
  const Json j = parse_lenient(R"({"a": [1, 2.5, "x"], "b": null, "c": true})");
  EXPECT_EQ(j["a"][1], 2.5);
  EXPECT_TRUE(j["b"].is_null());
  EXPECT_EQ(j["c"], true);
}

TEST(Lenient, PythonLiterals) {
  const Json j = parse_lenient("{'role': 'user', 'image_ids': [1, 2], 'ok': True, 'x': None, 'f': False}");
  EXPECT_EQ(j["role"], "user");
  EXPECT_EQ(j["image_ids"], Json::array({1, 2}));
  EXPECT_EQ(j["ok"], true);
  EXPECT_EQ(j["f"], false);
  EXPECT_TRUE(j["x"].is_null());
}

TEST(Lenient, ApostropheInsideSingleQuotes) {
  const Json j = parse_lenient("[{'content': 'Boomer's bike, it's fast'}]");
  EXPECT_EQ(j[0]["content"], "Boomer's bike, it's fast");
}

TEST(Lenient, EscapesInSingleQuotes) {
  const Json j = parse_lenient(R"(['a\'b', 'line\nbreak', "dq\"x"])");
  EXPECT_EQ(j[0], "a'b");
  EXPECT_EQ(j[1], "line\nbreak");
  EXPECT_EQ(j[2], "dq\"x");
}

TEST(Lenient, TrailingCommas) {
  const Json j = parse_lenient("[1, 2, {'a': 3,},]");
  EXPECT_EQ(j.size(), 3u);
  EXPECT_EQ(j[2]["a"], 3);
}

TEST(Lenient, UnclosedContainersAtEnd) {
  const Json j = parse_lenient("[[{'role': 'user', 'content': 'hi'}]");
  ASSERT_EQ(j.size(), 1u);
  EXPECT_EQ(j[0][0]["content"], "hi");
}

TEST(Lenient, RejectsGarbage) {
  EXPECT_THROW(parse_lenient("not json at all"), SyntaxError);
  EXPECT_THROW(parse_lenient("[1, 2] trailing"), SyntaxError);
  EXPECT_THROW(parse_lenient(""), SyntaxError);
}

TEST(Strict, RejectsPythonDialect) {
  EXPECT_THROW(json_text::parse_strict("{'a': 1}"), SyntaxError);
  EXPECT_EQ(json_text::parse_strict("{\"a\": 1}")["a"], 1);
}

TEST(Fnv1a, KnownVectors) {
  // Reference values of 64-bit FNV-1a.
  EXPECT_EQ(json_text::fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(json_text::fnv1a_hex("a"), "af63dc4c8601ec8c");
  EXPECT_EQ(json_text::fnv1a_hex("foobar"), "85944171f73967e8");
}

TEST(Utf8, CodePointLength) {
  EXPECT_EQ(json_text::utf8_length("abc"), 3u);
  EXPECT_EQ(json_text::utf8_length("caf\xc3\xa9"), 4u);
  EXPECT_EQ(json_text::utf8_length("\xe2\x80\x94"), 1u);
  EXPECT_EQ(json_text::utf8_length("\xf0\x9f\x98\x80x"), 2u);
}

TEST(Quote, RoundTrips) {
  for (const std::string s : {"plain", "with \"quotes\"", "tab\tnew\nline", "back\\slash"})
    EXPECT_EQ(Json::parse(json_text::quote(s)).get<std::string>(), s);
}
