#pragma once

// Random judge replies in the required output format, rendered independently
// of the library's own renderer, plus mutations that must be rejected.

#include <array>
#include <string>
#include <vector>

#include "sparkles/random.hpp"

namespace sparkles::test {

struct JudgeCase {
  std::string text;
  std::array<std::array<int, 3>, 2> ratings{};
  std::array<int, 2> overall{};
};

inline std::string random_explanation(Rng& rng) {
  static const std::vector<std::string> words = {
      "The", "answer", "identifies", "IMAGE#2331159", "correctly,", "but", "misses",
      "the", "train", "in", "the", "second", "image.", "Coherent", "across", "turns;",
      "details", "(e.g.", "colors)", "are", "thorough", "[sic]", "rating", "5/10?", "ok"};
  std::string s;
  const std::size_t n = 3 + rng.below(12);
  for (std::size_t i = 0; i < n; ++i) s += (i ? " " : "") + words[rng.below(words.size())];
  return s;
}

inline JudgeCase random_judge_case(Rng& rng) {
  JudgeCase c;
  for (int t = 0; t < 2; ++t) {
    const std::string a = "A" + std::to_string(t + 1);
    if (t) c.text += "\n";
    c.text += "* Evaluating " + a + "\n";
    for (int k = 0; k < 3; ++k) {
      c.ratings[t][k] = 1 + static_cast<int>(rng.below(10));
      c.text += "- (C" + std::to_string(k + 1) + ") Explanation: \"" + random_explanation(rng) +
                "\" Rating: [[" + std::to_string(c.ratings[t][k]) + "]]\n";
    }
    c.overall[t] = 1 + static_cast<int>(rng.below(10));
    c.text += "Therefore, the overall rating of " + a + " is [[" + std::to_string(c.overall[t]) +
              "]]\n";
  }
  return c;
}

/// Positions of every "[[n]]" in `text`.
inline std::vector<std::pair<std::size_t, std::size_t>> rating_spans(const std::string& text) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t p = text.find("[["); p != std::string::npos; p = text.find("[[", p + 2))
    out.emplace_back(p, text.find("]]", p) + 2);
  return out;
}

/// One of: drop a rating, set one to 0, set one to 11, insert an extra one.
inline std::string mutate_judge_case(const JudgeCase& c, Rng& rng) {
  std::string text = c.text;
  const auto spans = rating_spans(text);
  const auto [b, e] = spans[rng.below(spans.size())];
  switch (rng.below(4)) {
    case 0:
      return text.erase(b, e - b);
    case 1:
      return text.replace(b, e - b, "[[0]]");
    case 2:
      return text.replace(b, e - b, "[[11]]");
    default: {
      const std::string extra = "[[" + std::to_string(1 + rng.below(10)) + "]]";
      const std::size_t at = spans[rng.below(spans.size())].second;
      return text.insert(at, " " + extra);
    }
  }
}

}  // namespace sparkles::test
