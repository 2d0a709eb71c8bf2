#include "sparkles/analytics.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "sparkles/error.hpp"

namespace sparkles {

namespace {

using WordSet = std::set<std::string, std::less<>>;

const WordSet kVerbs = {
    "adapt",     "add",        "advertise", "advise",    "analyze",   "arrange",   "argue",
    "assess",    "bring",      "blend",     "brainstorm", "build",    "calculate", "capture",
    "categorize", "celebrate", "choose",    "classify",  "combine",   "compare",   "compose",
    "connect",   "consider",   "construct", "contrast",  "convert",   "convince",  "cook",
    "count",     "craft",      "create",    "decorate",  "define",    "depict",    "describe",
    "design",    "detect",     "determine", "develop",   "discuss",   "draft",     "draw",
    "dress",     "edit",       "elaborate", "envision",  "estimate",  "evaluate",  "explain",
    "explore",   "find",       "fit",       "formulate", "generate",  "give",      "group",
    "guess",     "guide",      "help",      "highlight", "host",      "hypothesize", "identify",
    "illustrate", "imagine",   "incorporate", "infer",   "integrate", "interpret", "introduce",
    "invent",    "invite",     "join",      "justify",   "learn",     "link",      "list",
    "make",      "market",     "match",     "measure",   "mention",   "merge",     "name",
    "narrate",   "note",       "notice",    "observe",   "offer",     "organize",  "outline",
    "paint",     "pair",       "persuade",  "picture",   "pitch",     "plan",      "plot",
    "point",     "predict",    "prepare",   "present",   "produce",   "promote",   "propose",
    "provide",   "rank",       "rate",      "recommend", "recreate",  "reflect",   "relate",
    "rewrite",   "say",        "schedule",  "see",       "select",    "sell",      "share",
    "show",      "sketch",     "speculate", "spot",      "suggest",   "summarize", "support",
    "take",      "teach",      "tell",      "think",     "tie",       "transform", "translate",
    "travel",    "turn",       "unite",     "use",       "visit",     "visualize", "weave",
    "write",
};

const std::map<std::string, std::string, std::less<>> kIrregularVerbs = {
    {"made", "make"},     {"wrote", "write"},  {"written", "write"}, {"took", "take"},
    {"taken", "take"},    {"gave", "give"},    {"given", "give"},    {"saw", "see"},
    {"seen", "see"},      {"told", "tell"},    {"thought", "think"}, {"found", "find"},
    {"brought", "bring"}, {"chose", "choose"}, {"chosen", "choose"}, {"drew", "draw"},
    {"drawn", "draw"},    {"said", "say"},     {"built", "build"},   {"learnt", "learn"},
    {"shown", "show"},    {"sold", "sell"},    {"taught", "teach"},  {"tied", "tie"},
    {"ties", "tie"},      {"tying", "tie"},
};

const std::map<std::string, std::string, std::less<>> kIrregularNouns = {
    {"men", "man"},       {"women", "woman"}, {"children", "child"}, {"people", "people"},
    {"mice", "mouse"},    {"feet", "foot"},   {"teeth", "tooth"},    {"geese", "goose"},
    {"news", "news"},     {"series", "series"}, {"species", "species"},
};

const WordSet kModals = {"would", "could", "can", "will", "shall", "should", "may",
                         "might", "must", "do", "does", "did"};
const WordSet kSubjects = {"you", "we", "i", "they", "he", "she", "it", "one"};
const WordSet kSkip = {"how", "what", "why", "where", "when", "which", "who", "whom", "whose",
                       "please", "is", "are", "was", "were", "am", "be", "been", "being",
                       "you", "we", "i", "they", "he", "she", "it", "me", "us", "them",
                       "would", "could", "can", "will", "shall", "should", "may", "might",
                       "must", "do", "does", "did", "let's", "lets", "let"};
const WordSet kDeterminers = {"a", "an", "the", "this", "that", "these", "those", "my", "your",
                              "his", "her", "its", "our", "their", "some", "any", "each",
                              "every", "all", "both", "another", "me", "us", "them", "him"};
const WordSet kStops = {
    "in", "on", "at", "with", "from", "to", "of", "for", "about", "between", "into", "onto",
    "by", "through", "across", "over", "under", "within", "without", "among", "around",
    "behind", "like", "as", "than", "near", "after", "before", "during", "against", "upon",
    "that", "which", "who", "whom", "whose", "where", "when", "while", "how", "why", "what",
    "and", "or", "but", "so", "if", "because", "is", "are", "was", "were", "be", "would",
    "could", "can", "will", "should", "might", "may", "must", "do", "does", "did"};

bool is_image_token(std::string_view w) { return w.rfind("image#", 0) == 0; }

bool ends_with(std::string_view w, std::string_view suffix) {
  return w.size() >= suffix.size() && w.substr(w.size() - suffix.size()) == suffix;
}

// Lowercased words; punctuation other than apostrophes, hyphens and '#'
// becomes a "," boundary token.
std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    while (!cur.empty() && (cur.back() == '\'' || cur.back() == '-')) cur.pop_back();
    while (!cur.empty() && (cur.front() == '\'' || cur.front() == '-')) cur.erase(cur.begin());
    if (!cur.empty()) out.push_back(cur);
    cur.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '\'' || c == '-' || c == '#' || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
      if (!std::isspace(c)) out.push_back(",");
    }
  }
  flush();
  return out;
}

bool is_word(std::string_view w) {
  return !w.empty() && std::isalpha(static_cast<unsigned char>(w.front()));
}

}  // namespace

std::string lemmatize_verb(std::string_view word) {
  std::string w(word);
  if (auto it = kIrregularVerbs.find(w); it != kIrregularVerbs.end()) return it->second;
  if (kVerbs.count(w)) return w;
  std::vector<std::string> cands;
  auto stem = [&](std::string_view suffix) { return w.substr(0, w.size() - suffix.size()); };
  if (ends_with(w, "ies")) cands.push_back(stem("ies") + "y");
  if (ends_with(w, "es")) cands.push_back(stem("es"));
  if (ends_with(w, "s")) cands.push_back(stem("s"));
  if (ends_with(w, "ied")) cands.push_back(stem("ied") + "y");
  if (ends_with(w, "ed")) {
    const std::string s = stem("ed");
    cands.push_back(s);
    cands.push_back(s + "e");
    if (s.size() >= 2 && s[s.size() - 1] == s[s.size() - 2]) cands.push_back(s.substr(0, s.size() - 1));
  }
  if (ends_with(w, "ing")) {
    const std::string s = stem("ing");
    cands.push_back(s);
    cands.push_back(s + "e");
    if (s.size() >= 2 && s[s.size() - 1] == s[s.size() - 2]) cands.push_back(s.substr(0, s.size() - 1));
  }
  for (const std::string& c : cands)
    if (kVerbs.count(c)) return c;
  return w;
}

std::string lemmatize_noun(std::string_view word) {
  std::string w(word);
  if (auto it = kIrregularNouns.find(w); it != kIrregularNouns.end()) return it->second;
  if (w.size() <= 3) return w;
  if (ends_with(w, "ies") && w.size() > 4) return w.substr(0, w.size() - 3) + "y";
  if (ends_with(w, "sses") || ends_with(w, "ches") || ends_with(w, "shes") ||
      ends_with(w, "xes") || ends_with(w, "zes"))
    return w.substr(0, w.size() - 2);
  if (ends_with(w, "ss") || ends_with(w, "us") || ends_with(w, "is")) return w;
  if (ends_with(w, "s")) return w.substr(0, w.size() - 1);
  return w;
}

std::optional<VerbNounKey> HeuristicParser::parse_sentence(std::string_view sentence) const {
  const std::vector<std::string> toks = tokenize(sentence);
  std::optional<std::size_t> verb_at;
  for (std::size_t i = 0; i + 2 < toks.size() && !verb_at; ++i)
    if (kModals.count(toks[i]) && kSubjects.count(toks[i + 1]) && is_word(toks[i + 2]) &&
        !kSkip.count(toks[i + 2]) && !kStops.count(toks[i + 2]))
      verb_at = i + 2;
  for (std::size_t i = 0; i < toks.size() && !verb_at; ++i)
    if (is_word(toks[i]) && !kSkip.count(toks[i]) && kVerbs.count(lemmatize_verb(toks[i])))
      verb_at = i;
  if (!verb_at) return std::nullopt;

  VerbNounKey key;
  key.verb = lemmatize_verb(toks[*verb_at]);
  std::size_t i = *verb_at + 1;
  while (i < toks.size() && kDeterminers.count(toks[i])) ++i;
  std::vector<std::string> run;
  for (; i < toks.size() && run.size() < 5; ++i) {
    const std::string& w = toks[i];
    if (!is_word(w) || is_image_token(w) || kStops.count(w) || kDeterminers.count(w)) break;
    if (!run.empty() && (ends_with(w, "ing") || ends_with(w, "ed"))) break;
    run.push_back(w);
  }
  if (!run.empty()) key.noun = lemmatize_noun(run.back());
  return key;
}

const VerbNounParser& default_parser() {
  static const HeuristicParser parser;
  return parser;
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    cur.push_back(c);
    if (c == '"') quoted = !quoted;
    const bool terminator = c == '.' || c == '?' || c == '!';
    const bool boundary =
        i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1]));
    if (terminator && boundary && !quoted) {
      out.push_back(cur);
      cur.clear();
    }
  }
  out.push_back(cur);
  std::vector<std::string> trimmed;
  for (std::string& s : out) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) continue;
    const auto e = s.find_last_not_of(" \t\r\n");
    trimmed.push_back(s.substr(b, e - b + 1));
  }
  return trimmed;
}

VerbNounKey extract_verb_noun(std::string_view message, const VerbNounParser& parser) {
  const std::vector<std::string> sentences = split_sentences(message);
  if (!sentences.empty()) {
    if (auto k = parser.parse_sentence(sentences.back())) return *k;
    if (sentences.size() > 1)
      if (auto k = parser.parse_sentence(sentences.front())) return *k;
  }
  throw NoPairFound("no verb found in the last or first sentence");
}

std::size_t word_count(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    const bool space = std::isspace(c);
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

WordLengthStats word_length_stats(const std::vector<Dialogue>& dialogues, Role role) {
  WordLengthStats s;
  for (const Dialogue& d : dialogues)
    for (const Message& m : d.messages) {
      if (m.role != role) continue;
      const std::size_t n = word_count(m.content);
      ++s.histogram[n];
      ++s.messages;
      s.total_words += n;
    }
  if (s.messages)
    s.mean = static_cast<double>(s.total_words) / static_cast<double>(s.messages);
  return s;
}

CorpusStats compute_stats(const std::vector<Dialogue>& dialogues, const VerbNounParser& parser) {
  CorpusStats s;
  s.user = word_length_stats(dialogues, Role::user);
  s.assistant = word_length_stats(dialogues, Role::assistant);
  for (const Dialogue& d : dialogues) {
    std::size_t turn = 0;
    for (const Message& m : d.messages) {
      if (m.role != Role::user) continue;
      ++turn;
      try {
        const VerbNounKey k = extract_verb_noun(m.content, parser);
        ++s.pairs[k];
        ++s.by_turn[turn][k];
        ++s.by_image_count[m.image_ids.size()][k];
      } catch (const NoPairFound&) {
        ++s.pair_failures;
      }
    }
  }
  return s;
}

TopPairsReport top_pairs_report(const PairTable& table, std::size_t k_verbs, std::size_t k_nouns) {
  std::map<std::string, std::size_t> verb_counts;
  std::map<std::string, std::map<std::string, std::size_t>> nouns;
  for (const auto& [key, n] : table) {
    verb_counts[key.verb] += n;
    if (key.noun) nouns[key.verb][*key.noun] += n;
  }
  std::vector<std::pair<std::string, std::size_t>> verbs(verb_counts.begin(), verb_counts.end());
  auto by_count = [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  };
  std::sort(verbs.begin(), verbs.end(), by_count);
  if (verbs.size() > k_verbs) verbs.resize(k_verbs);

  TopPairsReport r;
  for (const auto& [verb, n] : verbs) {
    VerbEntry e{verb, n, {}};
    const auto& nm = nouns[verb];
    e.nouns.assign(nm.begin(), nm.end());
    std::sort(e.nouns.begin(), e.nouns.end(), by_count);
    if (e.nouns.size() > k_nouns) e.nouns.resize(k_nouns);
    r.verbs.push_back(std::move(e));
  }
  return r;
}

OrderedJson top_pairs_to_json(const TopPairsReport& report) {
  OrderedJson arr = OrderedJson::array();
  for (const VerbEntry& e : report.verbs) {
    OrderedJson nouns = OrderedJson::array();
    for (const auto& [noun, n] : e.nouns) nouns.push_back(OrderedJson{{"noun", noun}, {"count", n}});
    arr.push_back(OrderedJson{{"verb", e.verb}, {"count", e.count}, {"nouns", nouns}});
  }
  return arr;
}

std::string top_pairs_to_csv(const TopPairsReport& report) {
  std::string out = "verb,verb_count,noun,noun_count\n";
  for (const VerbEntry& e : report.verbs) {
    if (e.nouns.empty()) out += e.verb + "," + std::to_string(e.count) + ",,\n";
    for (const auto& [noun, n] : e.nouns)
      out += e.verb + "," + std::to_string(e.count) + "," + noun + "," + std::to_string(n) + "\n";
  }
  return out;
}

std::string top_pairs_to_svg(const TopPairsReport& report) {
  constexpr int kRow = 22, kLabel = 110, kWidth = 480, kTop = 10;
  std::size_t max_count = 1;
  for (const VerbEntry& e : report.verbs) max_count = std::max(max_count, e.count);
  const int height = kTop * 2 + kRow * static_cast<int>(report.verbs.size());
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kLabel + kWidth + 60
      << "\" height=\"" << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  int y = kTop;
  for (const VerbEntry& e : report.verbs) {
    const int w = static_cast<int>(kWidth * e.count / max_count);
    svg << "  <text x=\"" << kLabel - 6 << "\" y=\"" << y + 15 << "\" text-anchor=\"end\">"
        << e.verb << "</text>\n";
    int x = kLabel;
    std::size_t shown = 0;
    for (const auto& [noun, n] : e.nouns) {
      const int nw = static_cast<int>(kWidth * n / max_count);
      svg << "  <rect x=\"" << x << "\" y=\"" << y + 3 << "\" width=\"" << nw
          << "\" height=\"" << kRow - 6 << "\" fill=\"#4c78a8\" stroke=\"#fff\"><title>" << e.verb
          << " " << noun << ": " << n << "</title></rect>\n";
      x += nw;
      shown += n;
    }
    if (shown < e.count)
      svg << "  <rect x=\"" << x << "\" y=\"" << y + 3 << "\" width=\"" << kLabel + w - x
          << "\" height=\"" << kRow - 6 << "\" fill=\"#bab0ac\"/>\n";
    svg << "  <text x=\"" << kLabel + w + 4 << "\" y=\"" << y + 15 << "\">" << e.count
        << "</text>\n";
    y += kRow;
  }
  svg << "</svg>\n";
  return svg.str();
}

namespace {

OrderedJson lengths_to_json(const WordLengthStats& s) {
  OrderedJson hist = OrderedJson::object();
  for (const auto& [len, n] : s.histogram) hist[std::to_string(len)] = n;
  OrderedJson j;
  j["messages"] = s.messages;
  j["total_words"] = s.total_words;
  j["mean"] = s.mean ? OrderedJson(*s.mean) : OrderedJson(nullptr);
  j["histogram"] = std::move(hist);
  return j;
}

}  // namespace

OrderedJson corpus_stats_to_json(const CorpusStats& stats, std::size_t k_verbs,
                                 std::size_t k_nouns) {
  OrderedJson j;
  j["word_lengths"] = OrderedJson{{"user", lengths_to_json(stats.user)},
                                  {"assistant", lengths_to_json(stats.assistant)}};
  j["pair_failures"] = stats.pair_failures;
  j["top_pairs"] = top_pairs_to_json(top_pairs_report(stats.pairs, k_verbs, k_nouns));
  OrderedJson by_turn = OrderedJson::object();
  for (const auto& [t, table] : stats.by_turn)
    by_turn[std::to_string(t)] = top_pairs_to_json(top_pairs_report(table, k_verbs, k_nouns));
  j["top_pairs_by_turn"] = std::move(by_turn);
  OrderedJson by_images = OrderedJson::object();
  for (const auto& [n, table] : stats.by_image_count)
    by_images[std::to_string(n)] = top_pairs_to_json(top_pairs_report(table, k_verbs, k_nouns));
  j["top_pairs_by_image_count"] = std::move(by_images);
  return j;
}

CurationResult curate_unique(const std::vector<Dialogue>& dialogues, const VerbNounParser& parser) {
  CurationResult r;
  std::vector<std::optional<VerbNounKey>> keys(dialogues.size());
  std::map<VerbNounKey, std::size_t> counts;
  for (std::size_t i = 0; i < dialogues.size(); ++i) {
    const Dialogue& d = dialogues[i];
    const auto first_user = std::find_if(d.messages.begin(), d.messages.end(),
                                         [](const Message& m) { return m.role == Role::user; });
    try {
      if (first_user == d.messages.end()) throw NoPairFound("no user message");
      keys[i] = extract_verb_noun(first_user->content, parser);
      ++counts[*keys[i]];
      r.keys.emplace(d.dialogue_id, *keys[i]);
    } catch (const NoPairFound&) {
      r.failed_ids.push_back(d.dialogue_id);
    }
  }
  for (std::size_t i = 0; i < dialogues.size(); ++i)
    if (keys[i] && counts[*keys[i]] == 1) r.kept.push_back(dialogues[i]);
  return r;
}

}  // namespace sparkles
