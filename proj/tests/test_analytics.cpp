#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "analytics_cases.hpp"
#include "sparkles/analytics.hpp"
#include "sparkles/error.hpp"
#include "support.hpp"

using namespace sparkles;

namespace {

VerbNounKey key(std::string v, std::optional<std::string> n = std::nullopt) {
  return {std::move(v), std::move(n)};
}

std::size_t oracle_words(const std::string& s) {
  std::istringstream in(s);
  std::size_t n = 0;
  for (std::string w; in >> w;) ++n;
  return n;
}

}  // namespace

TEST(Parser, ExtractsVerbAndHeadNoun) {
  EXPECT_EQ(extract_verb_noun("Can you write a short poem about IMAGE#1?"), key("write", "poem"));
  EXPECT_EQ(extract_verb_noun("Please describe the colorful birthday cakes in IMAGE#2."),
            key("describe", "cake"));
  EXPECT_EQ(extract_verb_noun("Would you connect these scenes to a story?"),
            key("connect", "scene"));
  EXPECT_EQ(extract_verb_noun("I adore these. Suggest recipes that use them!"),
            key("suggest", "recipe"));
}

TEST(Parser, UsesLastSentenceThenFirst) {
  EXPECT_EQ(extract_verb_noun("Compose a song. The weather is nice."), key("compose", "song"));
  EXPECT_EQ(extract_verb_noun("Hello there. Create a menu."), key("create", "menu"));
  EXPECT_THROW(extract_verb_noun("Hello there. Nice weather."), NoPairFound);
}

TEST(Parser, VerbWithoutObject) {
  const VerbNounKey k = extract_verb_noun("Can you explain?");
  EXPECT_EQ(k.verb, "explain");
  EXPECT_FALSE(k.noun.has_value());
  EXPECT_EQ(k.to_string(), "explain");
}

TEST(Lemmas, VerbsAndNouns) {
  EXPECT_EQ(lemmatize_verb("describes"), "describe");
  EXPECT_EQ(lemmatize_verb("created"), "create");
  EXPECT_EQ(lemmatize_verb("planning"), "plan");
  EXPECT_EQ(lemmatize_noun("stories"), "story");
  EXPECT_EQ(lemmatize_noun("dishes"), "dish");
  EXPECT_EQ(lemmatize_noun("glass"), "glass");
}

TEST(Sentences, SplitRespectsQuotes) {
  EXPECT_EQ(split_sentences("One. Two? \"Three. Four\" five! Six"),
            (std::vector<std::string>{"One.", "Two?", "\"Three. Four\" five!", "Six"}));
  EXPECT_EQ(split_sentences("v1.5 is out"), (std::vector<std::string>{"v1.5 is out"}));
}

TEST(WordLength, MatchesWhitespaceOracle) {
  const auto corpus = test::synthetic_corpus(200, 3);
  for (Role role : {Role::user, Role::assistant}) {
    std::size_t total = 0, messages = 0;
    for (const Dialogue& d : corpus)
      for (const Message& m : d.messages)
        if (m.role == role) {
          total += oracle_words(m.content);
          ++messages;
        }
    const WordLengthStats s = word_length_stats(corpus, role);
    EXPECT_EQ(s.total_words, total);
    EXPECT_EQ(s.messages, messages);
    ASSERT_TRUE(s.mean.has_value());
    EXPECT_EQ(*s.mean, static_cast<double>(total) / static_cast<double>(messages));
  }
  EXPECT_FALSE(word_length_stats({}, Role::user).mean.has_value());
}

TEST(Curate, KeysArePairwiseUnique) {
  auto corpus = test::synthetic_corpus(500, 11);
  // Plant a few keys that occur exactly once.
  corpus[0].messages[0].content = "Please translate the sign in IMAGE#100000 and IMAGE#100001.";
  corpus[1].messages[0].content = "Could you sketch a bridge joining IMAGE#100003 and IMAGE#100004?";
  const CurationResult r = curate_unique(corpus);
  std::set<VerbNounKey> seen;
  for (const Dialogue& d : r.kept) EXPECT_TRUE(seen.insert(r.keys.at(d.dialogue_id)).second);
  EXPECT_TRUE(seen.count(key("translate", "sign")));
  EXPECT_TRUE(seen.count(key("sketch", "bridge")));
  // Every dropped dialogue shares its key with another one.
  std::map<VerbNounKey, int> counts;
  for (const auto& [_, k] : r.keys) ++counts[k];
  for (const Dialogue& d : corpus) {
    const bool kept = std::any_of(r.kept.begin(), r.kept.end(),
                                  [&](const Dialogue& k) { return k.dialogue_id == d.dialogue_id; });
    if (r.keys.count(d.dialogue_id)) {
      EXPECT_EQ(kept, counts[r.keys.at(d.dialogue_id)] == 1);
    }
  }
}

TEST(TopPairs, PermutationStable) {
  auto corpus = test::synthetic_corpus(500, 5);
  const std::string ref = top_pairs_to_json(top_pairs_report(compute_stats(corpus).pairs)).dump();
  Rng rng(99);
  for (int i = 0; i < 5; ++i) {
    rng.shuffle(corpus);
    EXPECT_EQ(top_pairs_to_json(top_pairs_report(compute_stats(corpus).pairs)).dump(), ref);
  }
}

TEST(TopPairs, OrderingAndLimits) {
  PairTable t = {{key("write", "poem"), 5}, {key("write", "story"), 5}, {key("write", "ad"), 1},
                 {key("create", "menu"), 11}, {key("plan", "trip"), 2}};
  const TopPairsReport r = top_pairs_report(t, 2, 1);
  ASSERT_EQ(r.verbs.size(), 2u);
  EXPECT_EQ(r.verbs[0].verb, "create");
  EXPECT_EQ(r.verbs[1].verb, "write");
  EXPECT_EQ(r.verbs[1].count, 11u);
  ASSERT_EQ(r.verbs[1].nouns.size(), 1u);
  EXPECT_EQ(r.verbs[1].nouns[0].first, "poem");
  const std::string csv = top_pairs_to_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "verb,verb_count,noun,noun_count");
  EXPECT_NE(top_pairs_to_svg(r).find("<svg"), std::string::npos);
}

TEST(Stats, BreakdownsByTurnAndImageCount) {
  const auto corpus = test::synthetic_corpus(50, 8);
  const CorpusStats s = compute_stats(corpus);
  std::size_t t1 = 0, t2 = 0;
  for (const auto& [_, n] : s.by_turn.at(1)) t1 += n;
  for (const auto& [_, n] : s.by_turn.at(2)) t2 += n;
  EXPECT_EQ(t1 + t2 + s.pair_failures, 100u);
  EXPECT_TRUE(s.by_image_count.count(2));
  const OrderedJson j = corpus_stats_to_json(s);
  EXPECT_TRUE(j["word_lengths"].contains("user"));
  EXPECT_TRUE(j["top_pairs_by_turn"].contains("2"));
  EXPECT_TRUE(j["top_pairs_by_image_count"].contains("1"));
}
