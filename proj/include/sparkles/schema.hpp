#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "sparkles/json_text.hpp"

namespace sparkles {

using ImageId = std::string;

/// An image as the text-only data LLM and judge see it.
struct ImageDescription {
  ImageId image_id;  // digits only
  std::string caption;
  std::optional<std::string> media;  // path or URL of the pixels

  bool operator==(const ImageDescription&) const = default;
};

enum class Role { user, assistant };

std::string_view to_string(Role role);

struct Message {
  Role role = Role::user;
  std::vector<ImageId> image_ids;  // always empty for assistant messages
  std::string content;

  bool operator==(const Message&) const = default;
};

struct Dialogue {
  std::string dialogue_id;
  std::vector<Message> messages;

  std::size_t turn_count() const { return messages.size() / 2; }
  /// User message of turn `t` (1-based).
  const Message& question(std::size_t t) const { return messages.at(2 * (t - 1)); }
  const Message& answer(std::size_t t) const { return messages.at(2 * (t - 1) + 1); }
  /// Every image id introduced by a user turn, in order of introduction.
  std::vector<ImageId> all_image_ids() const;

  bool operator==(const Dialogue&) const = default;
};

/// Allowed image counts for each user turn of one dataset row.
struct DatasetSpec {
  std::string name;
  std::vector<std::set<int>> turns;
  int dialogues_per_request = 1;
};

/// Throws SchemaError unless every turn has a non-empty set of counts >= 1.
void check_spec(const DatasetSpec& spec);

/// Named specs: the per-row specs of the published dataset table
/// (cc-1, cc-2, cc-3, vg-2, vg-3, eval-2-1, eval-2-2, eval-3-1) and the
/// subset-level unions (cc, vg, eval).
const std::vector<DatasetSpec>& builtin_specs();
/// Throws ConfigError for unknown names.
const DatasetSpec& builtin_spec(std::string_view name);

struct Violation {
  std::string rule_id;
  std::string message;
  std::string location;  // e.g. "messages[2]"

  bool operator==(const Violation&) const = default;
};

struct ValidationReport {
  std::vector<Violation> violations;
  std::vector<Violation> warnings;  // do not affect the verdict

  bool valid() const { return violations.empty(); }
  std::string verdict() const { return valid() ? "valid" : "invalid"; }
  bool has_rule(std::string_view rule_id) const;
};

/// Parses a JSON array of dialogues, each an array of message objects with
/// keys `role`, `image_ids` (user only) and `content`. Accepts the
/// Python-literal dialect as well. Image ids are normalized to strings.
///
/// Throws SyntaxError or SchemaError.
std::vector<Dialogue> parse_dialogues(std::string_view json_text);

/// Structure, turn-count, per-turn image-count, cross-turn disjointness and
/// IMAGE#id mention checks. Reports every violation found.
ValidationReport validate_dialogue(const Dialogue& d, const DatasetSpec& spec);

/// Ids of all `IMAGE#<digits>` mentions, de-duplicated, first-occurrence order.
std::vector<ImageId> extract_image_refs(std::string_view content);

// ---------------------------------------------------------------------------
// Serialization

/// Message array in on-disk key order (role, image_ids, content).
OrderedJson messages_to_json(const std::vector<Message>& messages);
/// One JSON Lines record: {"dialogue_id":..., "messages":[...]}.
std::string dialogue_to_jsonl(const Dialogue& d);
/// The bare array-of-arrays form used inside generation prompts and LLM
/// replies.
std::string dialogues_to_json_array(const std::vector<Dialogue>& dialogues);

Dialogue dialogue_from_json(const Json& record);

/// Reads either a JSON Lines dataset or a bare array-of-arrays file.
std::vector<Dialogue> read_dialogues(const std::filesystem::path& path);
void write_dialogues_jsonl(const std::filesystem::path& path,
                           const std::vector<Dialogue>& dialogues);

ImageDescription image_from_json(const Json& j);
OrderedJson image_to_json(const ImageDescription& img, bool with_media = true);
std::vector<ImageDescription> read_image_pool(const std::filesystem::path& path);

/// Whole-file helpers shared by the stages.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace sparkles
