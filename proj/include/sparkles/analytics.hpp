#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sparkles/schema.hpp"

namespace sparkles {

struct VerbNounKey {
  std::string verb;                 // lowercase lemma
  std::optional<std::string> noun;  // lowercase lemma, absent when no object

  std::string to_string() const { return noun ? verb + " " + *noun : verb; }
  bool operator==(const VerbNounKey&) const = default;
  auto operator<=>(const VerbNounKey&) const = default;
};

/// Finds the main verb of one sentence and the head noun of its object.
class VerbNounParser {
 public:
  virtual ~VerbNounParser() = default;
  virtual std::optional<VerbNounKey> parse_sentence(std::string_view sentence) const = 0;
};

/// Lexicon-and-pattern parser: the verb is the one after a modal and
/// subject pronoun ("would you connect"), else the first known verb; the
/// noun is the last word of the run that follows it, after determiners and
/// up to a preposition, relative word, image mention or participle.
class HeuristicParser : public VerbNounParser {
 public:
  std::optional<VerbNounKey> parse_sentence(std::string_view sentence) const override;
};

const VerbNounParser& default_parser();

std::string lemmatize_verb(std::string_view word);
std::string lemmatize_noun(std::string_view word);

/// Splits on . ? ! followed by whitespace or the end; terminators inside
/// double quotes do not split.
std::vector<std::string> split_sentences(std::string_view text);

/// Key from the last sentence, else the first. Throws NoPairFound.
VerbNounKey extract_verb_noun(std::string_view message,
                              const VerbNounParser& parser = default_parser());

/// Whitespace-separated token count.
std::size_t word_count(std::string_view text);

struct WordLengthStats {
  std::map<std::size_t, std::size_t> histogram;  // word count -> messages
  std::size_t messages = 0;
  std::size_t total_words = 0;
  std::optional<double> mean;  // unset for an empty corpus
};

WordLengthStats word_length_stats(const std::vector<Dialogue>& dialogues, Role role);

using PairTable = std::map<VerbNounKey, std::size_t>;

struct CorpusStats {
  WordLengthStats user;
  WordLengthStats assistant;
  PairTable pairs;                                // over all user messages
  std::map<std::size_t, PairTable> by_turn;       // 1-based turn
  std::map<std::size_t, PairTable> by_image_count;  // images introduced by the message
  std::size_t pair_failures = 0;
};

CorpusStats compute_stats(const std::vector<Dialogue>& dialogues,
                          const VerbNounParser& parser = default_parser());

struct VerbEntry {
  std::string verb;
  std::size_t count = 0;
  std::vector<std::pair<std::string, std::size_t>> nouns;
};

struct TopPairsReport {
  std::vector<VerbEntry> verbs;
};

/// Most frequent verbs, each with its most frequent nouns; ties break
/// lexicographically, so the result does not depend on input order.
TopPairsReport top_pairs_report(const PairTable& table, std::size_t k_verbs = 20,
                                std::size_t k_nouns = 4);

OrderedJson top_pairs_to_json(const TopPairsReport& report);
/// verb,verb_count,noun,noun_count rows.
std::string top_pairs_to_csv(const TopPairsReport& report);
/// Horizontal bar chart of verb counts with their noun breakdown.
std::string top_pairs_to_svg(const TopPairsReport& report);

OrderedJson corpus_stats_to_json(const CorpusStats& stats, std::size_t k_verbs = 20,
                                 std::size_t k_nouns = 4);

struct CurationResult {
  std::vector<Dialogue> kept;
  std::vector<std::string> failed_ids;  // dialogues whose key could not be extracted
  std::map<std::string, VerbNounKey> keys;  // dialogue_id -> key of the first user message
};

/// Keeps dialogues whose first-user-message key occurs exactly once.
CurationResult curate_unique(const std::vector<Dialogue>& dialogues,
                             const VerbNounParser& parser = default_parser());

}  // namespace sparkles
