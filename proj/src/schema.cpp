#include "sparkles/schema.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "sparkles/error.hpp"

namespace sparkles {
namespace {

bool is_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return c >= '0' && c <= '9';
  });
}

std::string location(std::size_t index) {
  return "messages[" + std::to_string(index) + "]";
}

ImageId normalize_id(const Json& v, const std::string& where) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_unsigned() || v.is_number_integer())
    return std::to_string(v.get<long long>());
  throw SchemaError(where + ": image id must be a string or integer");
}

Message message_from_json(const Json& j, const std::string& where) {
  if (!j.is_object()) throw SchemaError(where + ": message must be an object");
  if (!j.contains("role")) throw SchemaError(where + ": missing key 'role'");
  if (!j.contains("content")) throw SchemaError(where + ": missing key 'content'");
  const Json& role = j.at("role");
  if (!role.is_string()) throw SchemaError(where + ": 'role' must be a string");
  if (!j.at("content").is_string())
    throw SchemaError(where + ": 'content' must be a string");

  Message m;
  m.content = j.at("content").get<std::string>();
  const std::string r = role.get<std::string>();
  if (r == "user") {
    m.role = Role::user;
    if (!j.contains("image_ids"))
      throw SchemaError(where + ": user message missing key 'image_ids'");
    const Json& ids = j.at("image_ids");
    if (!ids.is_array()) throw SchemaError(where + ": 'image_ids' must be an array");
    for (const Json& id : ids) m.image_ids.push_back(normalize_id(id, where));
  } else if (r == "assistant") {
    m.role = Role::assistant;
    if (j.contains("image_ids"))
      throw SchemaError(where + ": assistant message must not carry 'image_ids'");
  } else {
    throw SchemaError(where + ": unknown role '" + r + "'");
  }
  return m;
}

std::vector<Message> messages_from_json(const Json& arr, const std::string& where) {
  if (!arr.is_array()) throw SchemaError(where + ": dialogue must be an array");
  std::vector<Message> out;
  for (std::size_t i = 0; i < arr.size(); ++i)
    out.push_back(message_from_json(arr[i], where + ".messages[" + std::to_string(i) + "]"));
  if (!out.empty() && out.front().role != Role::user)
    throw SchemaError(where + ": dialogue must start with a user message");
  return out;
}

}  // namespace

std::string_view to_string(Role role) {
  return role == Role::user ? "user" : "assistant";
}

std::vector<ImageId> Dialogue::all_image_ids() const {
  std::vector<ImageId> ids;
  for (const Message& m : messages)
    for (const ImageId& id : m.image_ids)
      if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
  return ids;
}

void check_spec(const DatasetSpec& spec) {
  if (spec.turns.empty()) throw SchemaError("spec '" + spec.name + "' has no turns");
  for (const auto& allowed : spec.turns) {
    if (allowed.empty())
      throw SchemaError("spec '" + spec.name + "' has a turn with no allowed counts");
    if (*allowed.begin() < 1)
      throw SchemaError("spec '" + spec.name + "' allows fewer than one image");
  }
  if (spec.dialogues_per_request < 1)
    throw SchemaError("spec '" + spec.name + "' needs dialogues_per_request >= 1");
}

const std::vector<DatasetSpec>& builtin_specs() {
  static const std::vector<DatasetSpec> specs = {
      {"cc-1", {{1}, {1}}, 3},
      {"cc-2", {{2}, {1}}, 3},
      {"cc-3", {{3}, {1}}, 3},
      {"vg-2", {{2}, {1}}, 1},
      {"vg-3", {{3}, {1}}, 1},
      {"eval-2-1", {{2}, {1}}, 1},
      {"eval-2-2", {{2}, {2}}, 1},
      {"eval-3-1", {{3}, {1}}, 1},
      {"cc", {{1, 2, 3}, {1}}, 3},
      {"vg", {{2, 3}, {1}}, 1},
      {"eval", {{2, 3}, {1, 2}}, 1},
  };
  return specs;
}

const DatasetSpec& builtin_spec(std::string_view name) {
  for (const DatasetSpec& s : builtin_specs())
    if (s.name == name) return s;
  throw ConfigError("unknown dataset spec '" + std::string(name) + "'");
}

bool ValidationReport::has_rule(std::string_view rule_id) const {
  return std::any_of(violations.begin(), violations.end(),
                     [&](const Violation& v) { return v.rule_id == rule_id; });
}

std::vector<ImageId> extract_image_refs(std::string_view content) {
  static constexpr std::string_view kTag = "IMAGE#";
  std::vector<ImageId> ids;
  std::size_t pos = 0;
  while ((pos = content.find(kTag, pos)) != std::string_view::npos) {
    std::size_t start = pos + kTag.size();
    std::size_t end = start;
    while (end < content.size() && content[end] >= '0' && content[end] <= '9') ++end;
    if (end > start) {
      ImageId id(content.substr(start, end - start));
      if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
    }
    pos = end;
  }
  return ids;
}

std::vector<Dialogue> parse_dialogues(std::string_view json_text) {
  Json doc = json_text::parse_lenient(json_text);
  if (!doc.is_array()) throw SchemaError("expected a JSON array of dialogues");
  std::vector<Dialogue> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    Dialogue d;
    d.messages = messages_from_json(doc[i], "dialogues[" + std::to_string(i) + "]");
    out.push_back(std::move(d));
  }
  return out;
}

ValidationReport validate_dialogue(const Dialogue& d, const DatasetSpec& spec) {
  ValidationReport report;
  auto violation = [&](std::string rule, std::string msg, std::string loc) {
    report.violations.push_back({std::move(rule), std::move(msg), std::move(loc)});
  };
  auto warning = [&](std::string rule, std::string msg, std::string loc) {
    report.warnings.push_back({std::move(rule), std::move(msg), std::move(loc)});
  };

  const auto& msgs = d.messages;
  if (msgs.empty()) violation("empty_dialogue", "dialogue has no messages", "messages");
  if (msgs.size() % 2 != 0)
    violation("complete_turns",
              "message count " + std::to_string(msgs.size()) + " is odd",
              "messages");

  const std::size_t turns = (msgs.size() + 1) / 2;
  if (turns != spec.turns.size())
    violation("turn_count",
              "dialogue has " + std::to_string(turns) + " turns, spec '" +
                  spec.name + "' expects " + std::to_string(spec.turns.size()),
              "messages");

  std::vector<ImageId> introduced;
  auto is_introduced = [&](const ImageId& id) {
    return std::find(introduced.begin(), introduced.end(), id) != introduced.end();
  };

  for (std::size_t i = 0; i < msgs.size(); ++i) {
    const Message& m = msgs[i];
    const Role expected = (i % 2 == 0) ? Role::user : Role::assistant;
    if (m.role != expected)
      violation("alternation",
                "expected " + std::string(to_string(expected)) + ", got " +
                    std::string(to_string(m.role)),
                location(i));
    if (m.content.empty()) violation("empty_content", "content is empty", location(i));

    if (m.role == Role::assistant) {
      if (!m.image_ids.empty())
        violation("assistant_image_ids", "assistant message carries image_ids",
                  location(i));
      for (const ImageId& ref : extract_image_refs(m.content))
        if (!is_introduced(ref))
          warning("assistant_unknown_mention",
                  "IMAGE#" + ref + " was not introduced by any earlier user turn",
                  location(i));
      continue;
    }

    const std::size_t turn = i / 2;  // 0-based
    if (turn < spec.turns.size()) {
      const int count = static_cast<int>(m.image_ids.size());
      const auto& allowed = spec.turns[turn];
      if (!allowed.contains(count)) {
        std::string set;
        for (int a : allowed) set += (set.empty() ? "" : ",") + std::to_string(a);
        violation("image_count",
                  "turn " + std::to_string(turn + 1) + " has " + std::to_string(count) +
                      " images, spec '" + spec.name + "' allows {" + set + "}",
                  location(i));
      }
    }

    std::vector<ImageId> this_turn;
    for (const ImageId& id : m.image_ids) {
      if (!is_digits(id))
        violation("image_id_format", "image id '" + id + "' is not all digits",
                  location(i));
      if (std::find(this_turn.begin(), this_turn.end(), id) != this_turn.end()) {
        violation("duplicate_image", "image " + id + " listed twice in one turn",
                  location(i));
        continue;
      }
      if (is_introduced(id))
        violation("disjoint", "image " + id + " was already introduced in an earlier turn",
                  location(i));
      this_turn.push_back(id);
    }
    for (const ImageId& id : this_turn)
      if (!is_introduced(id)) introduced.push_back(id);

    const std::vector<ImageId> refs = extract_image_refs(m.content);
    for (const ImageId& ref : refs)
      if (!is_introduced(ref))
        violation("unknown_mention",
                  "user mentions IMAGE#" + ref + " which no user turn introduced",
                  location(i));
    for (const ImageId& id : this_turn)
      if (std::find(refs.begin(), refs.end(), id) == refs.end())
        warning("unmentioned_image", "image " + id + " is never mentioned as IMAGE#" + id,
                location(i));
  }
  return report;
}

OrderedJson messages_to_json(const std::vector<Message>& messages) {
  OrderedJson arr = OrderedJson::array();
  for (const Message& m : messages) {
    OrderedJson o;
    o["role"] = std::string(to_string(m.role));
    if (m.role == Role::user) o["image_ids"] = m.image_ids;
    o["content"] = m.content;
    arr.push_back(std::move(o));
  }
  return arr;
}

std::string dialogue_to_jsonl(const Dialogue& d) {
  OrderedJson o;
  o["dialogue_id"] = d.dialogue_id;
  o["messages"] = messages_to_json(d.messages);
  return o.dump();
}

std::string dialogues_to_json_array(const std::vector<Dialogue>& dialogues) {
  OrderedJson arr = OrderedJson::array();
  for (const Dialogue& d : dialogues) arr.push_back(messages_to_json(d.messages));
  return arr.dump();
}

Dialogue dialogue_from_json(const Json& record) {
  Dialogue d;
  if (record.is_array()) {
    d.messages = messages_from_json(record, "dialogue");
    return d;
  }
  if (!record.is_object() || !record.contains("messages"))
    throw SchemaError("dialogue record needs a 'messages' array");
  if (record.contains("dialogue_id")) {
    const Json& id = record.at("dialogue_id");
    d.dialogue_id = id.is_string() ? id.get<std::string>() : id.dump();
  }
  d.messages = messages_from_json(record.at("messages"), "dialogue " + d.dialogue_id);
  return d;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IOError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IOError("write failed for " + path.string());
}

std::vector<Dialogue> read_dialogues(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  if (text[first] == '[') {
    // Bare array-of-arrays; dialogue ids are positional.
    auto dialogues = parse_dialogues(text);
    for (std::size_t i = 0; i < dialogues.size(); ++i)
      dialogues[i].dialogue_id = std::to_string(i);
    return dialogues;
  }
  std::vector<Dialogue> out;
  std::istringstream lines(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json record;
    try {
      record = json_text::parse_strict(line);
    } catch (const SyntaxError& e) {
      throw SyntaxError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(dialogue_from_json(record));
  }
  return out;
}

void write_dialogues_jsonl(const std::filesystem::path& path,
                           const std::vector<Dialogue>& dialogues) {
  std::string out;
  for (const Dialogue& d : dialogues) {
    out += dialogue_to_jsonl(d);
    out += '\n';
  }
  write_file(path, out);
}

ImageDescription image_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("image_id") || !j.contains("caption"))
    throw SchemaError("image description needs 'image_id' and 'caption'");
  ImageDescription img;
  img.image_id = normalize_id(j.at("image_id"), "image description");
  if (!is_digits(img.image_id))
    throw SchemaError("image id '" + img.image_id + "' is not all digits");
  if (!j.at("caption").is_string() || j.at("caption").get<std::string>().empty())
    throw SchemaError("image " + img.image_id + " has an empty caption");
  img.caption = j.at("caption").get<std::string>();
  if (j.contains("media") && j.at("media").is_string())
    img.media = j.at("media").get<std::string>();
  return img;
}

OrderedJson image_to_json(const ImageDescription& img, bool with_media) {
  OrderedJson o;
  o["image_id"] = img.image_id;
  o["caption"] = img.caption;
  if (with_media && img.media) o["media"] = *img.media;
  return o;
}

std::vector<ImageDescription> read_image_pool(const std::filesystem::path& path) {
  Json doc = json_text::parse_lenient(read_file(path));
  if (!doc.is_array()) throw SchemaError(path.string() + ": expected an array");
  std::vector<ImageDescription> pool;
  pool.reserve(doc.size());
  for (const Json& j : doc) pool.push_back(image_from_json(j));
  return pool;
}

}  // namespace sparkles
