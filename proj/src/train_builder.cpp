#include "sparkles/train_builder.hpp"

#include <algorithm>
#include <charconv>

#include "sparkles/error.hpp"
#include "sparkles/random.hpp"

namespace sparkles {

void FramingConfig::check() const {
  if (separator.empty()) throw ConfigError("framing separator must not be empty");
  if (image_slot.empty()) throw ConfigError("framing image slot must not be empty");
  if (image_slot == image_open || image_slot == image_close)
    throw ConfigError("framing image slot must differ from the open/close tags");
}

FramingConfig framing_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("framing config must be an object");
  FramingConfig c;
  auto take = [&](const char* key, std::string& field) {
    if (j.contains(key)) field = j.at(key).get<std::string>();
  };
  take("system_message", c.system_message);
  take("separator", c.separator);
  take("user_marker", c.user_marker);
  take("assistant_marker", c.assistant_marker);
  take("image_open", c.image_open);
  take("image_slot", c.image_slot);
  take("image_close", c.image_close);
  c.check();
  return c;
}

OrderedJson framing_to_json(const FramingConfig& c) {
  OrderedJson j;
  j["system_message"] = c.system_message;
  j["separator"] = c.separator;
  j["user_marker"] = c.user_marker;
  j["assistant_marker"] = c.assistant_marker;
  j["image_open"] = c.image_open;
  j["image_slot"] = c.image_slot;
  j["image_close"] = c.image_close;
  return j;
}

InterleavedText interleave_image_tokens(
    std::string_view content, const std::vector<std::pair<ImageId, std::string>>& images,
    const std::set<ImageId>& earlier_ids, const FramingConfig& cfg) {
  static constexpr std::string_view kTag = "IMAGE#";
  const std::string tag = cfg.image_tag();
  auto media_of = [&](const ImageId& id) -> const std::string* {
    for (const auto& [k, v] : images)
      if (k == id) return &v;
    return nullptr;
  };

  InterleavedText out;
  std::set<ImageId> tagged;
  std::size_t pos = 0;
  while (true) {
    const std::size_t hit = content.find(kTag, pos);
    if (hit == std::string_view::npos) break;
    std::size_t end = hit + kTag.size();
    while (end < content.size() && content[end] >= '0' && content[end] <= '9') ++end;
    out.text.append(content.substr(pos, end - pos));
    pos = end;
    if (end == hit + kTag.size()) continue;  // "IMAGE#" without digits
    const ImageId id(content.substr(hit + kTag.size(), end - hit - kTag.size()));
    if (const std::string* m = media_of(id)) {
      if (tagged.insert(id).second) {
        out.text += tag;
        out.media.push_back(*m);
      }
    } else if (!earlier_ids.count(id)) {
      throw UnknownImageId("IMAGE#" + id + " is neither introduced in this turn nor earlier");
    }
  }
  out.text.append(content.substr(pos));
  for (const auto& [id, m] : images) {
    if (tagged.count(id)) continue;
    out.text += " IMAGE#" + id + tag;
    out.media.push_back(m);
    tagged.insert(id);
  }
  return out;
}

std::vector<TrainingSample> expand_dialogue(const Dialogue& d, const FramingConfig& cfg,
                                            const MediaLookup& media) {
  cfg.check();
  if (d.messages.size() % 2 != 0)
    throw FramingError("dialogue " + d.dialogue_id + " has an odd number of messages");
  const std::string& sep = cfg.separator;
  const std::string human = cfg.user_marker + ": ";
  const std::string assistant = cfg.assistant_marker + ": ";

  std::vector<TrainingSample> out;
  std::set<ImageId> earlier;
  std::vector<std::string> image_order;
  std::string history = cfg.system_message + sep;
  for (std::size_t t = 1; t <= d.turn_count(); ++t) {
    const Message& q = d.question(t);
    const Message& a = d.answer(t);
    if (q.role != Role::user || a.role != Role::assistant)
      throw FramingError("dialogue " + d.dialogue_id + " turn " + std::to_string(t) +
                         " is not a user/assistant pair");
    std::vector<std::pair<ImageId, std::string>> turn_images;
    for (const ImageId& id : q.image_ids) {
      auto it = media.find(id);
      turn_images.emplace_back(id, it == media.end() ? id : it->second);
    }
    InterleavedText qi = interleave_image_tokens(q.content, turn_images, earlier, cfg);
    for (const ImageId& id : q.image_ids) earlier.insert(id);
    image_order.insert(image_order.end(), qi.media.begin(), qi.media.end());

    TrainingSample s;
    s.dialogue_id = d.dialogue_id;
    s.turn = t;
    s.prompt = history + human + qi.text + sep + assistant;
    s.response = a.content + sep;
    s.image_order = image_order;
    const std::size_t p = json_text::utf8_length(s.prompt);
    s.loss_span = {p, p + json_text::utf8_length(s.response)};
    history = s.prompt + s.response;
    out.push_back(std::move(s));
  }
  return out;
}

TurnRatio TurnRatio::parse(std::string_view text) {
  TurnRatio r;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t colon = std::min(text.find(':', pos), text.size());
    const std::string_view part = text.substr(pos, colon - pos);
    int w = 0;
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), w);
    if (part.empty() || ec != std::errc() || ptr != part.data() + part.size())
      throw ConfigError("bad turn ratio '" + std::string(text) + "'");
    r.weights.push_back(w);
    pos = colon + 1;
  }
  r.check();
  return r;
}

void TurnRatio::check() const {
  if (weights.empty()) throw ConfigError("turn ratio has no weights");
  bool any = false;
  for (int w : weights) {
    if (w < 0) throw ConfigError("turn ratio weights must be non-negative");
    any = any || w > 0;
  }
  if (!any) throw ConfigError("turn ratio needs at least one positive weight");
}

std::string TurnRatio::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (i) out += ':';
    out += std::to_string(weights[i]);
  }
  return out;
}

std::vector<std::size_t> sample_with_turn_ratio(const std::vector<TrainingSample>& samples,
                                                const TurnRatio& ratio, std::uint64_t seed) {
  ratio.check();
  std::vector<std::size_t> manifest;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::size_t t = samples[i].turn;
    if (t < 1 || t > ratio.weights.size())
      throw ConfigError("turn ratio " + ratio.to_string() + " has no weight for turn " +
                        std::to_string(t));
    for (int k = 0; k < ratio.weights[t - 1]; ++k) manifest.push_back(i);
  }
  Rng rng = Rng::derive(seed, "turn_ratio");
  rng.shuffle(manifest);
  return manifest;
}

std::string sample_to_jsonl(const TrainingSample& s) {
  OrderedJson j;
  j["dialogue_id"] = s.dialogue_id;
  j["turn"] = s.turn;
  j["prompt"] = s.prompt;
  j["response"] = s.response;
  j["images"] = s.image_order;
  j["loss_span"] = {s.loss_span.start, s.loss_span.end};
  return j.dump();
}

namespace {

bool resolvable(const std::string& locator, const std::filesystem::path& root) {
  if (locator.rfind("http://", 0) == 0 || locator.rfind("https://", 0) == 0) return true;
  std::filesystem::path p(locator);
  if (p.is_relative() && !root.empty()) p = root / p;
  std::error_code ec;
  return std::filesystem::is_regular_file(p, ec);
}

}  // namespace

void write_jsonl(const std::vector<TrainingSample>& samples,
                 const std::vector<std::size_t>& manifest, const std::filesystem::path& path,
                 const WriteOptions& options) {
  std::string out;
  for (std::size_t idx : manifest) {
    if (idx >= samples.size()) throw IOError("manifest refers to missing sample");
    const TrainingSample& s = samples[idx];
    if (options.strict_media)
      for (const std::string& m : s.image_order)
        if (!resolvable(m, options.media_root))
          throw IOError("unresolvable media '" + m + "' in dialogue " + s.dialogue_id);
    out += sample_to_jsonl(s);
    out += '\n';
  }
  write_file(path, out);
}

}  // namespace sparkles
