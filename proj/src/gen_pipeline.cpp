#include "sparkles/gen_pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

#include "sparkles/error.hpp"
#include "sparkles/parallel.hpp"

namespace sparkles {

// ---------------------------------------------------------------------------
// Pools

std::vector<Dialogue> DemonstrationPool::branch(int n) const {
  std::vector<Dialogue> out;
  for (const Dialogue& d : demos)
    if (!d.messages.empty() && static_cast<int>(d.messages.front().image_ids.size()) == n)
      out.push_back(d);
  return out;
}

std::vector<Dialogue> sample_demonstrations(const std::vector<Dialogue>& pool,
                                            std::size_t k, Rng& rng) {
  if (k > pool.size())
    throw PoolExhausted("need " + std::to_string(k) + " demonstrations, pool has " +
                        std::to_string(pool.size()));
  std::vector<Dialogue> out;
  out.reserve(k);
  for (std::size_t i : rng.sample_indices(pool.size(), k)) out.push_back(pool[i]);
  return out;
}

CandidatePool::CandidatePool(std::vector<ImageDescription> items, std::set<ImageId> consumed)
    : items_(std::move(items)), consumed_(std::move(consumed)) {
  std::set<ImageId> ids;
  for (const ImageDescription& d : items_)
    if (!ids.insert(d.image_id).second)
      throw SchemaError("duplicate image id " + d.image_id + " in candidate pool");
  for (const ImageId& id : consumed_)
    if (!ids.count(id))
      throw SchemaError("consumed id " + id + " is not in the candidate pool");
}

void CandidatePool::persist_to(std::filesystem::path path) {
  std::lock_guard lock(mu_);
  state_path_ = std::move(path);
}

std::vector<ImageDescription> CandidatePool::draw(std::size_t k, bool exclude_consumed,
                                                  Rng& rng) {
  std::lock_guard lock(mu_);
  std::vector<const ImageDescription*> available;
  for (const ImageDescription& d : items_)
    if (!exclude_consumed || !consumed_.count(d.image_id)) available.push_back(&d);
  if (k > available.size())
    throw PoolExhausted("need " + std::to_string(k) + " candidates, " +
                        std::to_string(available.size()) + " available");
  std::vector<ImageDescription> out;
  out.reserve(k);
  for (std::size_t i : rng.sample_indices(available.size(), k)) out.push_back(*available[i]);
  if (exclude_consumed && k > 0) {
    for (const ImageDescription& d : out) consumed_.insert(d.image_id);
    if (state_path_) save_state(*state_path_, consumed_);
  }
  return out;
}

std::set<ImageId> CandidatePool::consumed() const {
  std::lock_guard lock(mu_);
  return consumed_;
}

std::size_t CandidatePool::remaining() const {
  std::lock_guard lock(mu_);
  return items_.size() - consumed_.size();
}

std::set<ImageId> CandidatePool::load_state(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return {};
  Json j = json_text::parse_strict(read_file(path));
  if (!j.is_object() || !j.contains("consumed") || !j["consumed"].is_array())
    throw SchemaError(path.string() + ": pool state needs a \"consumed\" array");
  std::set<ImageId> out;
  for (const Json& id : j["consumed"])
    out.insert(id.is_string() ? id.get<std::string>() : id.dump());
  return out;
}

void CandidatePool::save_state(const std::filesystem::path& path,
                               const std::set<ImageId>& consumed) {
  OrderedJson j;
  j["consumed"] = std::vector<ImageId>(consumed.begin(), consumed.end());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  write_file(tmp, j.dump(2) + "\n");
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IOError("cannot replace " + path.string() + ": " + ec.message());
}

std::vector<ImageDescription> draw_candidates(CandidatePool& pool, std::size_t k,
                                              bool exclude_consumed, Rng& rng) {
  return pool.draw(k, exclude_consumed, rng);
}

// ---------------------------------------------------------------------------
// Prompt rendering

std::string py_repr(std::string_view s) {
  const bool has_single = s.find('\'') != std::string_view::npos;
  const bool has_double = s.find('"') != std::string_view::npos;
  const char q = (has_single && !has_double) ? '"' : '\'';
  std::string out(1, q);
  for (unsigned char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (c == static_cast<unsigned char>(q)) {
          out += '\\';
          out += static_cast<char>(c);
        } else if (c < 0x20 || c == 0x7f) {
          char buf[5];
          std::snprintf(buf, sizeof buf, "\\x%02x", c);
          out += buf;
        } else {
          out += static_cast<char>(c);
        }
    }
  }
  out += q;
  return out;
}

std::string fill_template(std::string_view tmpl, const TemplateValues& values,
                          const std::set<std::string, std::less<>>& placeholders) {
  std::string out;
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const std::size_t open = tmpl.find('{', pos);
    if (open == std::string_view::npos) break;
    const std::size_t close = tmpl.find('}', open);
    if (close == std::string_view::npos) break;
    const std::string_view name = tmpl.substr(open + 1, close - open - 1);
    out.append(tmpl.substr(pos, open - pos));
    if (auto it = values.find(name); it != values.end()) {
      out += it->second;
    } else if (placeholders.count(name)) {
      throw TemplateError("placeholder {" + std::string(name) + "} left unfilled");
    } else {
      out.append(tmpl.substr(open, close - open + 1));
    }
    pos = close + 1;
  }
  out.append(tmpl.substr(pos));
  return out;
}

namespace {

constexpr std::string_view kIndent = "    ";

const std::set<std::string, std::less<>> kGenerationPlaceholders = {
    "Dialogue Demonstration", "Dialogue Demonstrations", "Candidate Image Descriptions",
    "Number of Images"};

std::string render_id(const ImageId& id, IdStyle style) {
  return style == IdStyle::number ? id : py_repr(id);
}

std::string render_message(const Message& m, const std::string& content, IdStyle ids) {
  std::string out = "{'role': " + py_repr(to_string(m.role));
  if (m.role == Role::user) {
    out += ", 'image_ids': [";
    for (std::size_t i = 0; i < m.image_ids.size(); ++i) {
      if (i) out += ", ";
      out += render_id(m.image_ids[i], ids);
    }
    out += "]";
  }
  out += ", 'content': " + py_repr(content) + "}";
  return out;
}

void check_distinct_candidates(const std::vector<ImageDescription>& candidates) {
  std::set<ImageId> seen;
  for (const ImageDescription& c : candidates)
    if (!seen.insert(c.image_id).second)
      throw TemplateError("duplicate candidate image id " + c.image_id);
}

constexpr std::string_view kSingleDialogueTemplate =
    R"(Users will interact with a conversational assistant that has advanced capabilities of understanding, analyzing, and reasoning about images. This includes discussing a variety of real-world concepts, objects, and entities, generating a range of text materials, seeking advice, guidance, or assistance, and much more.

Below is an illustrative dialogue presented in a JSON format. The dialogue represents a meaningful conversation between a "user" and the "assistant" regarding multiple images. Each "user" message contains an "image_ids" field recording the IDs of newly selected images. The images are referred to in the "content" field as IMAGE#image_id.
```json
{Dialogue Demonstration}
```
Please note that the user contents in the JSON above may be a counterexample that reveals the content of images and can be answered without looking at the images. Please make sure not to reveal the content of the images or describe the images in the user messages in the conversation that follows.

Please note that the specific "image_ids" and "content" in the JSON above are for illustrative purposes only. The actual candidate images are shown below delimited by triple quotes, each accompanied by an image ID and a caption. Avoid using phrases similar to 'caption' and 'description' in your dialogue as if the user and the assistant have visual capabilities.
```json
{Candidate Image Descriptions}
```
Each dialogue consists of four messages:
1. A user examines all candidate images, selects {Number of Images} highly relevant images, and sends a reasonable and creative message to the assistant.
2. Once the images are provided, the assistant thoroughly perceives and comprehends them, responding with highly helpful and exceptionally detailed answers that provide comprehensive reasoning regarding the visual content of the images.
3. Considering the past dialogue, the user chooses other candidate images for further inquiry. The user should refer to both the newly selected images and those mentioned earlier in the same dialogue.
4. The assistant provides a highly helpful and exceptionally detailed answer providing comprehensive reasoning regarding the visual content of the images.

The following is a dialogue between the user and the assistant, adhering to the given JSON format.
Make sure to formulate accurate and diverse "content" that does not follow the illustrative dialogues. And remember to develop the last "content" even though it is shown as "..." in the JSON format provided above.)";

constexpr std::string_view kMultiDialogueTemplate =
    R"(Users will interact with a conversational assistant that has advanced capabilities of understanding, analyzing, and reasoning about images. This includes discussing a variety of real-world concepts, objects, and entities, generating a range of text materials, seeking advice, guidance, or assistance, and much more.

Below are three illustrative dialogues presented in a JSON format. Each one represents a self-contained conversation between a "user" and the "assistant" regarding multiple images. Each "user" message contains an "image_ids" field recording the IDs of newly selected images. The images are referred to in the "content" field as IMAGE#image_id.
```json
{Dialogue Demonstrations}
```
Please note that the specific "image_ids" and "content" in the JSON above are for illustrative purposes only. The actual candidate images are shown below delimited by triple quotes, each accompanied by an image ID and a caption. Avoid using phrases similar to 'caption' and 'description' in your dialogue as if the user and the assistant have visual capabilities.
```json
{Candidate Image Descriptions}
```
Each dialogue consists of four messages:
1. A user examines all candidate images, selects highly relevant ones, and sends a reasonable and creative message to the assistant.
2. Once the images are provided, the assistant thoroughly perceives and comprehends them, responding with highly helpful and exceptionally detailed answers that provide comprehensive reasoning.
3. Considering the past dialogue, the user chooses another candidate image for further inquiry. The user should refer to both the newly selected image and those mentioned earlier in the same dialogue.
4. The assistant provides a highly helpful and exceptionally detailed answer providing comprehensive reasoning regarding the visual content of the images.

The following are three independent dialogues between the user and the assistant, adhering to the given JSON format. In this format, the first message in the three dialogues includes 1, 2, and 3 image IDs respectively.
Make sure to formulate accurate and diverse "content" that does not strictly follow the illustrative dialogues. And remember to develop the last "content" even though it is shown as "..." in the JSON format provided above.)";

}  // namespace

std::string render_demonstrations(const std::vector<Dialogue>& demos, IdStyle ids) {
  std::string out = "[\n";
  for (std::size_t d = 0; d < demos.size(); ++d) {
    const auto& msgs = demos[d].messages;
    out += "[\n";
    for (std::size_t i = 0; i < msgs.size(); ++i) {
      const bool last = i + 1 == msgs.size();
      const bool elide = last && msgs[i].role == Role::assistant;
      out += kIndent;
      out += render_message(msgs[i], elide ? "..." : msgs[i].content, ids);
      out += last ? "\n" : ",\n";
    }
    out += d + 1 == demos.size() ? "]\n" : "],\n";
  }
  out += "]";
  return out;
}

std::string render_descriptions(const std::vector<ImageDescription>& images, IdStyle ids) {
  std::string out = "[\n";
  for (std::size_t i = 0; i < images.size(); ++i) {
    out += kIndent;
    out += "{'image_id': " + render_id(images[i].image_id, ids) +
           ", 'caption': " + py_repr(images[i].caption) + "}";
    out += i + 1 == images.size() ? "\n" : ",\n";
  }
  out += "]";
  return out;
}

std::string build_single_dialogue_prompt(const std::vector<Dialogue>& demos,
                                         const std::vector<ImageDescription>& candidates,
                                         NumImages num_images) {
  if (demos.empty()) throw TemplateError("single-dialogue prompt needs a demonstration");
  if (candidates.size() != 4)
    throw TemplateError("single-dialogue prompt needs 4 candidates, got " +
                        std::to_string(candidates.size()));
  check_distinct_candidates(candidates);
  return fill_template(
      kSingleDialogueTemplate,
      {{"Dialogue Demonstration", render_demonstrations(demos, IdStyle::number)},
       {"Candidate Image Descriptions", render_descriptions(candidates, IdStyle::number)},
       {"Number of Images", num_images == NumImages::two ? "two" : "three"}},
      kGenerationPlaceholders);
}

std::string build_multi_dialogue_prompt(const std::vector<Dialogue>& demos,
                                        const std::vector<ImageDescription>& candidates) {
  if (demos.size() != 3)
    throw TemplateError("multi-dialogue prompt needs 3 demonstrations, got " +
                        std::to_string(demos.size()));
  std::vector<const Dialogue*> by_count(3, nullptr);
  for (const Dialogue& d : demos) {
    const std::size_t n = d.messages.empty() ? 0 : d.messages.front().image_ids.size();
    if (n < 1 || n > 3 || by_count[n - 1])
      throw TemplateError("multi-dialogue demonstrations must open with 1, 2 and 3 images");
    by_count[n - 1] = &d;
  }
  if (candidates.size() != 9)
    throw TemplateError("multi-dialogue prompt needs 9 candidates, got " +
                        std::to_string(candidates.size()));
  check_distinct_candidates(candidates);
  std::vector<Dialogue> ordered;
  for (const Dialogue* d : by_count) ordered.push_back(*d);
  return fill_template(
      kMultiDialogueTemplate,
      {{"Dialogue Demonstrations", render_demonstrations(ordered, IdStyle::string)},
       {"Candidate Image Descriptions", render_descriptions(candidates, IdStyle::string)}},
      kGenerationPlaceholders);
}

// ---------------------------------------------------------------------------
// Reply extraction

namespace {

// End (exclusive) of the bracket-balanced span opening at `open`, or npos.
std::size_t balanced_end(std::string_view s, std::size_t open, bool track_strings) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (c == '\\') ++i;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"' && track_strings) in_string = true;
    else if (c == '[') ++depth;
    else if (c == ']' && --depth == 0) return i + 1;
  }
  return std::string_view::npos;
}

bool parses_as_array(std::string_view s) {
  try {
    return json_text::parse_lenient(s).is_array();
  } catch (const SyntaxError&) {
    return false;
  }
}

}  // namespace

std::string extract_json_block(std::string_view text) {
  constexpr std::string_view kFence = "```json";
  if (const std::size_t f = text.find(kFence); f != std::string_view::npos) {
    std::size_t start = f + kFence.size();
    if (start < text.size() && text[start] == '\r') ++start;
    if (start < text.size() && text[start] == '\n') ++start;
    const std::size_t end = text.find("```", start);
    std::string_view body = text.substr(start, end == std::string_view::npos
                                                   ? std::string_view::npos
                                                   : end - start);
    while (!body.empty() && (body.back() == '\n' || body.back() == '\r')) body.remove_suffix(1);
    return std::string(body);
  }

  const std::size_t first = text.find('[');
  if (first == std::string_view::npos) throw NoJsonFound("reply contains no JSON array");

  std::optional<std::string_view> fallback;
  for (std::size_t open = first; open != std::string_view::npos;
       open = text.find('[', open + 1)) {
    for (bool track : {true, false}) {
      const std::size_t end = balanced_end(text, open, track);
      if (end == std::string_view::npos) continue;
      const std::string_view span = text.substr(open, end - open);
      if (open == first && !fallback) fallback = span;
      if (parses_as_array(span)) return std::string(span);
    }
    if (open == first && !fallback) {
      // Unbalanced from the first '[': the reply may have lost its closers.
      const std::string_view rest = text.substr(open);
      if (parses_as_array(rest)) return std::string(rest);
    }
  }
  if (fallback) return std::string(*fallback);
  throw NoJsonFound("reply contains no bracket-balanced array");
}

// ---------------------------------------------------------------------------
// Orchestration

GenerationTask GenerationTask::single_vg(std::uint64_t seed, std::optional<NumImages> n) {
  GenerationTask t;
  t.mode = GenerationMode::single_vg;
  t.spec = builtin_spec("vg");
  t.n_demos = 1;
  t.n_candidates = 4;
  t.num_images_turn1 = n;
  t.seed = seed;
  return t;
}

GenerationTask GenerationTask::multi_cc(std::uint64_t seed) {
  GenerationTask t;
  t.mode = GenerationMode::multi_cc;
  t.spec = builtin_spec("cc");
  t.n_demos = 3;
  t.n_candidates = 9;
  t.seed = seed;
  return t;
}

void GenerationTask::check() const {
  check_spec(spec);
  if (mode == GenerationMode::single_vg) {
    if (n_candidates != 4) throw ConfigError("single_vg uses 4 candidates");
    if (n_demos < 1) throw ConfigError("single_vg needs at least one demonstration");
    if (spec.dialogues_per_request != 1) throw ConfigError("single_vg yields 1 dialogue per request");
    if (!(weight_two >= 0 && weight_three >= 0 && weight_two + weight_three > 0))
      throw ConfigError("num-images weights must be non-negative and not both zero");
  } else {
    if (n_demos != 3) throw ConfigError("multi_cc uses 3 demonstrations");
    if (n_candidates != 9) throw ConfigError("multi_cc uses 9 candidates");
    if (spec.dialogues_per_request != 3) throw ConfigError("multi_cc yields 3 dialogues per request");
    if (num_images_turn1) throw ConfigError("num_images_turn1 applies to single_vg only");
    if (min_valid_per_request < 1 || min_valid_per_request > 3)
      throw ConfigError("min_valid_per_request must be in [1, 3]");
  }
}

OrderedJson RequestRecord::to_json() const {
  OrderedJson j;
  j["request_index"] = request_index;
  j["status"] = status;
  j["attempts"] = attempts;
  j["dialogue_ids"] = dialogue_ids;
  j["demo_ids"] = provenance.demo_ids;
  j["candidate_ids"] = provenance.candidate_ids;
  if (provenance.num_images) j["num_images"] = *provenance.num_images;
  j["usage"] = OrderedJson{{"prompt_tokens", usage.prompt_tokens},
                           {"completion_tokens", usage.completion_tokens},
                           {"total_tokens", usage.total_tokens}};
  j["failure_reasons"] = failure_reasons;
  return j;
}

std::string make_dialogue_id(std::uint64_t seed, std::size_t request_index,
                             std::size_t position) {
  const std::string key = "dialogue:" + std::to_string(seed) + ":" +
                          std::to_string(request_index) + ":" + std::to_string(position);
  const std::string hex = json_text::fnv1a_hex(key) + json_text::fnv1a_hex(key + "#2");
  return hex.substr(0, 8) + "-" + hex.substr(8, 4) + "-" + hex.substr(12, 4) + "-" +
         hex.substr(16, 4) + "-" + hex.substr(20, 12);
}

namespace {

struct Prepared {
  std::size_t index = 0;
  std::string prompt;
  Provenance provenance;
};

struct Evaluated {
  std::vector<std::pair<std::size_t, Dialogue>> valid;  // position in reply, dialogue
  std::vector<std::string> reasons;
  bool accepted = false;
  Usage usage;
};

int pick_num_images(const GenerationTask& task, std::size_t index) {
  if (task.num_images_turn1) return static_cast<int>(*task.num_images_turn1);
  Rng rng = Rng::derive(task.seed, "num_images", index);
  const double total = task.weight_two + task.weight_three;
  return rng.unit() * total < task.weight_two ? 2 : 3;
}

Prepared prepare(const GenerationTask& task, GenerationContext& ctx, std::size_t index,
                 int attempt) {
  Prepared p;
  p.index = index;
  p.provenance.request_index = index;
  p.provenance.attempt = attempt;
  Rng rng = Rng::derive(task.seed, "request", index, static_cast<std::uint64_t>(attempt));

  std::vector<Dialogue> demos;
  std::vector<ImageDescription> candidates;
  if (task.mode == GenerationMode::single_vg) {
    const int n = pick_num_images(task, index);
    p.provenance.num_images = n;
    demos = sample_demonstrations(ctx.demos.branch(n), task.n_demos, rng);
    candidates = draw_candidates(ctx.candidates, task.n_candidates, true, rng);
    p.prompt = build_single_dialogue_prompt(demos, candidates,
                                            n == 2 ? NumImages::two : NumImages::three);
  } else {
    for (int n = 1; n <= 3; ++n) {
      std::vector<Dialogue> one = sample_demonstrations(ctx.demos.branch(n), 1, rng);
      demos.push_back(std::move(one.front()));
    }
    candidates = draw_candidates(ctx.candidates, task.n_candidates, false, rng);
    p.prompt = build_multi_dialogue_prompt(demos, candidates);
  }
  for (const Dialogue& d : demos) p.provenance.demo_ids.push_back(d.dialogue_id);
  for (const ImageDescription& c : candidates) p.provenance.candidate_ids.push_back(c.image_id);
  return p;
}

void check_dialogue(const Dialogue& d, const DatasetSpec& spec, const DatasetSpec& task_spec,
                    const std::set<ImageId>& candidates, const std::string& where,
                    std::vector<std::string>& reasons) {
  ValidationReport report = validate_dialogue(d, spec);
  if (spec.name != task_spec.name) {
    ValidationReport outer = validate_dialogue(d, task_spec);
    for (Violation& v : outer.violations)
      if (!report.has_rule(v.rule_id)) report.violations.push_back(std::move(v));
  }
  for (const ImageId& id : d.all_image_ids())
    if (!candidates.count(id))
      report.violations.push_back({"not_a_candidate", "image " + id + " was not offered", ""});
  for (const Violation& v : report.violations) {
    std::string r = where + ": " + v.rule_id + ": " + v.message;
    if (!v.location.empty()) r += " (" + v.location + ")";
    reasons.push_back(std::move(r));
  }
}

Evaluated evaluate(const GenerationTask& task, const Prepared& p, const ChatResponse& res) {
  Evaluated e;
  e.usage = res.usage;
  const std::string tag = "attempt " + std::to_string(p.provenance.attempt);
  if (res.content.empty()) {
    e.reasons.push_back(tag + ": empty reply");
    return e;
  }
  std::vector<Dialogue> dialogues;
  try {
    dialogues = parse_dialogues(extract_json_block(res.content));
  } catch (const Error& err) {
    e.reasons.push_back(tag + ": " + err.kind() + ": " + err.what());
    return e;
  }
  const std::set<ImageId> offered(p.provenance.candidate_ids.begin(),
                                  p.provenance.candidate_ids.end());
  const std::size_t expected = static_cast<std::size_t>(task.spec.dialogues_per_request);
  if (dialogues.size() != expected)
    e.reasons.push_back(tag + ": expected " + std::to_string(expected) + " dialogue(s), got " +
                        std::to_string(dialogues.size()));

  for (std::size_t i = 0; i < std::min(expected, dialogues.size()); ++i) {
    const DatasetSpec& spec =
        task.mode == GenerationMode::single_vg
            ? builtin_spec("vg-" + std::to_string(*p.provenance.num_images))
            : builtin_spec("cc-" + std::to_string(i + 1));
    const std::size_t before = e.reasons.size();
    check_dialogue(dialogues[i], spec, task.spec, offered,
                   tag + ": dialogue " + std::to_string(i + 1), e.reasons);
    if (e.reasons.size() == before) e.valid.emplace_back(i, std::move(dialogues[i]));
  }
  if (task.mode == GenerationMode::single_vg)
    e.accepted = dialogues.size() == 1 && e.valid.size() == 1;
  else
    e.accepted = e.valid.size() >= task.min_valid_per_request;
  return e;
}

}  // namespace

BatchResult generate_batch(const GenerationTask& task, GenerationContext& ctx,
                           std::size_t count, int max_attempts) {
  task.check();
  if (max_attempts < 1) throw ConfigError("max_attempts must be >= 1");

  std::vector<RequestRecord> records(count);
  std::vector<std::vector<GeneratedDialogue>> accepted(count);
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < count; ++i) {
    records[i].request_index = i;
    pending.push_back(i);
  }

  bool exhausted = false;
  for (int attempt = 1; attempt <= max_attempts && !pending.empty() && !exhausted; ++attempt) {
    std::vector<Prepared> round;
    for (std::size_t idx : pending) {
      try {
        round.push_back(prepare(task, ctx, idx, attempt));
      } catch (const PoolExhausted& e) {
        exhausted = true;
        for (auto it = std::find(pending.begin(), pending.end(), idx); it != pending.end(); ++it)
          records[*it].failure_reasons.push_back("attempt " + std::to_string(attempt) +
                                                 ": PoolExhausted: " + e.what());
        break;
      }
    }

    std::vector<Evaluated> results(round.size());
    parallel_for(round.size(), ctx.parallelism, [&](std::size_t i) {
      const ChatRequest req = ctx.client.make_request(
          std::string(kDataSystemMessage), {ChatMessage{"user", {ContentPart::text(round[i].prompt)}}},
          ctx.config);
      results[i] = evaluate(task, round[i], ctx.client.complete_chat(req));
    });

    for (std::size_t i = 0; i < round.size(); ++i) {
      const std::size_t idx = round[i].index;
      RequestRecord& rec = records[idx];
      Evaluated& ev = results[i];
      rec.attempts = attempt;
      rec.provenance = round[i].provenance;
      rec.usage.prompt_tokens += ev.usage.prompt_tokens;
      rec.usage.completion_tokens += ev.usage.completion_tokens;
      rec.usage.total_tokens += ev.usage.total_tokens;
      rec.failure_reasons.insert(rec.failure_reasons.end(), ev.reasons.begin(), ev.reasons.end());
      if (!ev.accepted) continue;
      for (auto& [position, dialogue] : ev.valid) {
        dialogue.dialogue_id = make_dialogue_id(task.seed, idx, position);
        rec.dialogue_ids.push_back(dialogue.dialogue_id);
        accepted[idx].push_back({std::move(dialogue), round[i].provenance});
      }
      rec.status = accepted[idx].size() ==
                           static_cast<std::size_t>(task.spec.dialogues_per_request)
                       ? "ok"
                       : "partial";
      pending.erase(std::find(pending.begin(), pending.end(), idx));
    }
  }

  BatchResult out;
  for (std::size_t idx : pending) records[idx].status = "failed";
  for (std::size_t i = 0; i < count; ++i) {
    if (records[i].status == "failed") ++out.failed_requests;
    for (GeneratedDialogue& g : accepted[i]) out.dialogues.push_back(std::move(g));
  }
  out.records = std::move(records);
  return out;
}

std::vector<GeneratedDialogue> generate_dialogues(const GenerationTask& task,
                                                  GenerationContext& ctx, int max_attempts) {
  BatchResult r = generate_batch(task, ctx, 1, max_attempts);
  if (r.failed_requests)
    throw GenerationFailed("generation failed after " + std::to_string(r.records[0].attempts) +
                               " attempt(s)",
                           r.records[0].failure_reasons);
  return std::move(r.dialogues);
}

}  // namespace sparkles
