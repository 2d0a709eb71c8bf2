#include "sparkles/judge_eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <regex>
#include <sstream>

#include "sparkles/error.hpp"
#include "sparkles/gen_pipeline.hpp"
#include "sparkles/parallel.hpp"

namespace sparkles {

// ---------------------------------------------------------------------------
// Benchmark items

void EvalItem::check() const {
  const auto [n1, n2] = config_class;
  const bool known = (n1 == 2 && n2 == 1) || (n1 == 2 && n2 == 2) || (n1 == 3 && n2 == 1);
  if (!known)
    throw SchemaError("item " + item_id + ": config class (" + std::to_string(n1) + "," +
                      std::to_string(n2) + ") is not one of (2,1), (2,2), (3,1)");
  if (static_cast<int>(turn1.image_ids.size()) != n1 ||
      static_cast<int>(turn2.image_ids.size()) != n2)
    throw SchemaError("item " + item_id + ": image counts do not match its config class");
}

const ImageDescription* EvalItem::describe(const ImageId& id) const {
  for (const ImageDescription& d : image_descriptions)
    if (d.image_id == id) return &d;
  return nullptr;
}

namespace {

EvalTurn turn_from_json(const Json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("question") || !j["question"].is_string())
    throw SchemaError(where + " needs a question");
  EvalTurn t;
  t.question = j["question"].get<std::string>();
  if (j.contains("image_ids"))
    for (const Json& id : j["image_ids"])
      t.image_ids.push_back(id.is_string() ? id.get<std::string>() : id.dump());
  return t;
}

OrderedJson turn_to_json(const EvalTurn& t) {
  return OrderedJson{{"question", t.question}, {"image_ids", t.image_ids}};
}

}  // namespace

EvalItem eval_item_from_json(const Json& j) {
  if (!j.is_object()) throw SchemaError("benchmark item must be an object");
  EvalItem item;
  if (!j.contains("item_id")) throw SchemaError("benchmark item needs item_id");
  item.item_id = j["item_id"].is_string() ? j["item_id"].get<std::string>() : j["item_id"].dump();
  if (j.contains("image_descriptions"))
    for (const Json& d : j["image_descriptions"]) item.image_descriptions.push_back(image_from_json(d));
  item.turn1 = turn_from_json(j.value("turn1", Json()), "item " + item.item_id + " turn1");
  item.turn2 = turn_from_json(j.value("turn2", Json()), "item " + item.item_id + " turn2");
  if (j.contains("config_class")) {
    const Json& c = j["config_class"];
    if (!c.is_array() || c.size() != 2) throw SchemaError("config_class must be [n1, n2]");
    item.config_class = {c[0].get<int>(), c[1].get<int>()};
  } else {
    item.config_class = {static_cast<int>(item.turn1.image_ids.size()),
                         static_cast<int>(item.turn2.image_ids.size())};
  }
  item.check();
  return item;
}

OrderedJson eval_item_to_json(const EvalItem& item) {
  OrderedJson j;
  j["item_id"] = item.item_id;
  OrderedJson descs = OrderedJson::array();
  for (const ImageDescription& d : item.image_descriptions) descs.push_back(image_to_json(d));
  j["image_descriptions"] = std::move(descs);
  j["turn1"] = turn_to_json(item.turn1);
  j["turn2"] = turn_to_json(item.turn2);
  j["config_class"] = {item.config_class.first, item.config_class.second};
  return j;
}

std::vector<EvalItem> read_benchmark(const std::filesystem::path& path) {
  std::vector<EvalItem> items;
  std::istringstream lines(read_file(path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      items.push_back(eval_item_from_json(json_text::parse_strict(line)));
    } catch (const Error& e) {
      throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return items;
}

// ---------------------------------------------------------------------------
// Model under test

ChatMessage slotted_user_message(std::string_view text, const std::vector<std::string>& media,
                                 const FramingConfig& cfg) {
  const std::string tag = cfg.image_tag();
  ChatMessage msg{"user", {}};
  std::size_t pos = 0;
  std::size_t slot = 0;
  while (true) {
    const std::size_t hit = text.find(tag, pos);
    const std::string_view piece =
        text.substr(pos, hit == std::string_view::npos ? std::string_view::npos : hit - pos);
    if (!piece.empty()) msg.parts.push_back(ContentPart::text(std::string(piece)));
    if (hit == std::string_view::npos) break;
    if (slot >= media.size()) throw TemplateError("more image slots than media");
    msg.parts.push_back(ContentPart::image(media[slot++]));
    pos = hit + tag.size();
  }
  if (slot != media.size()) throw TemplateError("fewer image slots than media");
  if (msg.parts.empty()) msg.parts.push_back(ContentPart::text(""));
  return msg;
}

ChatMessage user_turn_message(std::string_view content,
                              const std::vector<std::pair<ImageId, std::string>>& images,
                              const std::set<ImageId>& earlier_ids, const FramingConfig& cfg,
                              std::string* framed_text) {
  InterleavedText it = interleave_image_tokens(content, images, earlier_ids, cfg);
  if (framed_text) *framed_text = it.text;
  return slotted_user_message(it.text, it.media, cfg);
}

namespace {

std::vector<std::pair<ImageId, std::string>> turn_media(const EvalItem& item,
                                                        const EvalTurn& turn) {
  std::vector<std::pair<ImageId, std::string>> out;
  for (const ImageId& id : turn.image_ids) {
    const ImageDescription* d = item.describe(id);
    out.emplace_back(id, d && d->media ? *d->media : id);
  }
  return out;
}

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

ModelTranscript run_model_dialogue(const EvalItem& item, const ChatClient& model,
                                   const GenerationConfig& config, const FramingConfig& framing) {
  const std::string& sep = framing.separator;
  const std::string human = framing.user_marker + ": ";
  const std::string assistant = framing.assistant_marker + ": ";
  ModelTranscript out;

  std::string q1_text;
  ChatMessage u1 = user_turn_message(item.turn1.question, turn_media(item, item.turn1), {},
                                     framing, &q1_text);
  out.prompt1 = framing.system_message + sep + human + q1_text + sep + assistant;
  ChatResponse r1 = model.complete_chat(model.make_request(framing.system_message, {u1}, config));
  if (blank(r1.content)) throw EmptyResponse("item " + item.item_id + ": empty turn-1 answer");
  out.a1 = r1.content;

  const std::set<ImageId> earlier(item.turn1.image_ids.begin(), item.turn1.image_ids.end());
  std::string q2_text;
  ChatMessage u2 = user_turn_message(item.turn2.question, turn_media(item, item.turn2), earlier,
                                     framing, &q2_text);
  out.prompt2 = out.prompt1 + out.a1 + sep + human + q2_text + sep + assistant;
  ChatMessage a1{"assistant", {ContentPart::text(out.a1)}};
  ChatResponse r2 =
      model.complete_chat(model.make_request(framing.system_message, {u1, a1, u2}, config));
  if (blank(r2.content)) throw EmptyResponse("item " + item.item_id + ": empty turn-2 answer");
  out.a2 = r2.content;
  return out;
}

// ---------------------------------------------------------------------------
// Judge prompt and verdicts

namespace {

constexpr std::string_view kJudgeTemplate =
    R"(Users will interact with a conversational assistant. The assistant is designed to understand, analyze, and reason about multiple images across two turns of conversation. The assistant is expected to provide highly helpful and exceptionally detailed answers providing comprehensive reasoning regarding the visual content of the images.

Below are images represented by their image IDs and captions (delimited by triple quotes):
```json
{Target Image Descriptions}
```

Next is a dialogue between a user and the assistant regarding the images above:
```
###User Q1:
{Q1}

###Assistant A1:
{A1}

###User Q2:
{Q2}

###Assistant A2:
{A2}
```

Your task as an impartial judge is to evaluate the responses (A1 and A2) provided by the assistant to the user's questions.
Please rate the following three criteria C1, C2, and C3 on a scale of 1-10 for A1 and A2 separately, where a higher score indicates better overall performance:
(C1) Image Understanding and Reasoning: This measures the assistant's ability to accurately identify and describe objects, context, and relationships within and between the images.
(C2) Cross-Image and Cross-Turn Coherence: This evaluates the assistant's ability to maintain a consistent understanding across multiple images and dialogue turns.
(C3) Relevance and Completeness of Responses: This assesses whether the assistant's responses are directly related to the user's inquiries and the images' content, and whether the responses provide thorough, detailed answers.

Begin your evaluation by providing a short explanation for each criterion. Be as objective as possible. After providing your explanation, rate the response on a scale of 1 to 10 by strictly following the format below (note that "5" and "..." are placeholders):
```
* Evaluating A1
- (C1) Explanation: "..." Rating: [[5]]
- (C2) Explanation: "..." Rating: [[5]]
- (C3) Explanation: "..." Rating: [[5]]
Therefore, the overall rating of A1 is [[5]]

* Evaluating A2
- (C1) Explanation: "..." Rating: [[5]]
- (C2) Explanation: "..." Rating: [[5]]
- (C3) Explanation: "..." Rating: [[5]]
Therefore, the overall rating of A2 is [[5]]
```)";

const std::set<std::string, std::less<>> kJudgePlaceholders = {
    "Target Image Descriptions", "Q1", "A1", "Q2", "A2"};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

std::string build_judge_prompt(const EvalItem& item, std::string_view a1, std::string_view a2) {
  if (blank(a1) || blank(a2)) throw TemplateError("judge prompt needs both answers");
  std::vector<ImageId> ids = item.turn1.image_ids;
  ids.insert(ids.end(), item.turn2.image_ids.begin(), item.turn2.image_ids.end());
  for (const std::string* q : {&item.turn1.question, &item.turn2.question})
    for (const ImageId& id : extract_image_refs(*q))
      if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
  std::vector<ImageDescription> targets;
  for (const ImageId& id : ids) {
    const ImageDescription* d = item.describe(id);
    if (!d) throw TemplateError("item " + item.item_id + ": no description for image " + id);
    targets.push_back(*d);
  }
  return fill_template(kJudgeTemplate,
                       {{"Target Image Descriptions", render_descriptions(targets, IdStyle::number)},
                        {"Q1", item.turn1.question},
                        {"A1", std::string(a1)},
                        {"Q2", item.turn2.question},
                        {"A2", std::string(a2)}},
                       kJudgePlaceholders);
}

JudgeVerdict parse_judge_output(std::string_view text) {
  static const std::regex kRating(R"(\[\[([^\[\]]*)\]\])");
  static const std::regex kInteger(R"(\s*[+-]?\d+\s*)");
  struct Hit {
    std::size_t begin, end;
    int value;
  };
  std::vector<Hit> hits;
  const std::string s(text);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), kRating); it != std::sregex_iterator();
       ++it) {
    const std::string inner = (*it)[1].str();
    if (!std::regex_match(inner, kInteger))
      throw MalformedVerdict("rating [[" + inner + "]] is not an integer");
    long v = 0;
    try {
      v = std::stol(inner);
    } catch (const std::exception&) {
      throw MalformedVerdict("rating [[" + inner + "]] is out of range");
    }
    if (v < 1 || v > 10) throw MalformedVerdict("rating " + std::to_string(v) + " outside [1, 10]");
    hits.push_back({static_cast<std::size_t>(it->position(0)),
                    static_cast<std::size_t>(it->position(0) + it->length(0)), static_cast<int>(v)});
  }
  if (hits.size() != 8)
    throw MalformedVerdict("expected 8 ratings, found " + std::to_string(hits.size()));

  JudgeVerdict v;
  for (std::size_t k = 0; k < 8; ++k) {
    const std::size_t turn = k / 4;
    const std::size_t slot = k % 4;
    if (slot == 3) {
      v.raw_overall[turn] = hits[k].value;
      continue;
    }
    v.ratings[turn][slot] = hits[k].value;
    const std::size_t from = k == 0 ? 0 : hits[k - 1].end;
    std::string_view seg = std::string_view(s).substr(from, hits[k].begin - from);
    const std::size_t ex = seg.rfind("Explanation:");
    if (ex == std::string_view::npos) continue;
    seg = seg.substr(ex + 12);
    if (const std::size_t r = seg.rfind("Rating:"); r != std::string_view::npos)
      seg = seg.substr(0, r);
    seg = trim(seg);
    if (seg.size() >= 2 && seg.front() == '"' && seg.back() == '"')
      seg = seg.substr(1, seg.size() - 2);
    v.explanations[turn][slot] = std::string(seg);
  }
  return v;
}

std::string render_judge_reply(const JudgeVerdict& v) {
  std::string out;
  for (std::size_t t = 0; t < 2; ++t) {
    const std::string a = "A" + std::to_string(t + 1);
    if (t) out += "\n";
    out += "* Evaluating " + a + "\n";
    for (std::size_t c = 0; c < 3; ++c)
      out += "- (C" + std::to_string(c + 1) + ") Explanation: \"" + v.explanations[t][c] +
             "\" Rating: [[" + std::to_string(v.ratings[t][c]) + "]]\n";
    out += "Therefore, the overall rating of " + a + " is [[" + std::to_string(v.raw_overall[t]) +
           "]]\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Aggregation

double round_half_up(double x, int decimals) {
  const double scale = std::pow(10.0, decimals);
  // The nudge keeps values such as 3.545 (stored as 3.54499...) rounding up.
  return std::floor(x * scale + 0.5 + 1e-9) / scale;
}

EvalScorecard scorecard_from_means(const std::array<std::array<double, 3>, 2>& means) {
  EvalScorecard s;
  s.criterion_means = means;
  s.a1 = (means[0][0] + means[0][1] + means[0][2]) / 3.0;
  s.a2 = (means[1][0] + means[1][1] + means[1][2]) / 3.0;
  s.score = (s.a1 + s.a2) / 2.0;
  return s;
}

EvalScorecard aggregate(const std::vector<JudgeVerdict>& verdicts) {
  if (verdicts.empty()) throw EvalAborted("no scored items to aggregate");
  std::array<std::array<long long, 3>, 2> sums{};
  for (const JudgeVerdict& v : verdicts)
    for (std::size_t t = 0; t < 2; ++t)
      for (std::size_t c = 0; c < 3; ++c) sums[t][c] += v.ratings[t][c];
  std::array<std::array<double, 3>, 2> means{};
  const double n = static_cast<double>(verdicts.size());
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t c = 0; c < 3; ++c) means[t][c] = static_cast<double>(sums[t][c]) / n;
  EvalScorecard s = scorecard_from_means(means);
  s.items = verdicts.size();
  return s;
}

OrderedJson scorecard_to_json(const EvalScorecard& s) {
  auto r2 = [](double x) { return round_half_up(x, 2); };
  OrderedJson j;
  j["items"] = s.items;
  j["criterion_means"] = OrderedJson{
      {"A1", {r2(s.criterion_means[0][0]), r2(s.criterion_means[0][1]), r2(s.criterion_means[0][2])}},
      {"A2", {r2(s.criterion_means[1][0]), r2(s.criterion_means[1][1]), r2(s.criterion_means[1][2])}}};
  j["A1"] = r2(s.a1);
  j["A2"] = r2(s.a2);
  j["score"] = r2(s.score);
  j["full_precision"] = OrderedJson{{"A1", s.a1}, {"A2", s.a2}, {"score", s.score}};
  return j;
}

OrderedJson EvalRecord::to_json() const {
  OrderedJson j;
  j["item_id"] = item_id;
  j["status"] = status;
  j["A1_text"] = a1_text;
  j["A2_text"] = a2_text;
  j["model_prompts"] = model_prompts;
  j["judge_raw"] = judge_raw;
  if (verdict) {
    j["ratings"] = OrderedJson{{"A1", verdict->ratings[0]}, {"A2", verdict->ratings[1]}};
    j["raw_overall"] = verdict->raw_overall;
  } else {
    j["ratings"] = nullptr;
  }
  j["attempts"] = attempts;
  if (!error.empty()) j["error"] = error;
  return j;
}

OrderedJson EvalReport::to_json() const {
  OrderedJson j;
  j["model"] = model;
  j["judge_model"] = judge_model;
  j["scorecard"] = scorecard_to_json(scorecard);
  j["unrecoverable"] = unrecoverable;
  OrderedJson recs = OrderedJson::array();
  for (const EvalRecord& r : records) recs.push_back(r.to_json());
  j["records"] = std::move(recs);
  return j;
}

EvalReport run_sparkles_eval(const std::vector<EvalItem>& items, const ChatClient& model,
                             const ChatClient& judge, const EvalOptions& options) {
  if (options.max_judge_retries < 0) throw ConfigError("max_judge_retries must be >= 0");
  options.framing.check();
  std::vector<EvalRecord> records(items.size());
  parallel_for(items.size(), options.parallelism, [&](std::size_t i) {
    const EvalItem& item = items[i];
    EvalRecord& rec = records[i];
    rec.item_id = item.item_id;
    rec.status = "unrecoverable";
    ModelTranscript tr;
    try {
      tr = run_model_dialogue(item, model, options.model_config, options.framing);
    } catch (const EmptyResponse& e) {
      rec.error = std::string("EmptyResponse: ") + e.what();
      return;
    }
    rec.a1_text = tr.a1;
    rec.a2_text = tr.a2;
    rec.model_prompts = {tr.prompt1, tr.prompt2};
    const std::string prompt = build_judge_prompt(item, tr.a1, tr.a2);
    const ChatRequest req = judge.make_request(
        std::string(kDataSystemMessage), {ChatMessage{"user", {ContentPart::text(prompt)}}},
        options.judge_config);
    for (int attempt = 1; attempt <= options.max_judge_retries + 1; ++attempt) {
      rec.attempts = attempt;
      rec.judge_raw = judge.complete_chat(req).content;
      try {
        rec.verdict = parse_judge_output(rec.judge_raw);
        rec.status = "scored";
        rec.error.clear();
        return;
      } catch (const MalformedVerdict& e) {
        rec.error = std::string("MalformedVerdict: ") + e.what();
      }
    }
  });

  EvalReport report;
  report.model = model.endpoint().model;
  report.judge_model = judge.endpoint().model;
  std::vector<JudgeVerdict> verdicts;
  for (const EvalRecord& r : records) {
    if (r.verdict) verdicts.push_back(*r.verdict);
    else ++report.unrecoverable;
  }
  const std::size_t limit = options.max_unrecoverable.value_or(items.size() / 10);
  if (report.unrecoverable > limit)
    throw EvalAborted(std::to_string(report.unrecoverable) + " of " +
                      std::to_string(items.size()) + " items unrecoverable (limit " +
                      std::to_string(limit) + ")");
  report.scorecard = aggregate(verdicts);
  report.records = std::move(records);
  return report;
}

}  // namespace sparkles
