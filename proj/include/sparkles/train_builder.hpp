#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "sparkles/schema.hpp"

namespace sparkles {

struct FramingConfig {
  std::string system_message =
      "Give the following image: <Img>ImageContent</Img>. You will be able to see the "
      "image once I provide it to you. Please answer my questions.";
  std::string separator = "###";
  std::string user_marker = "Human";
  std::string assistant_marker = "Assistant";
  std::string image_open = "<Img>";
  std::string image_slot = "<ImageHere>";
  std::string image_close = "</Img>";

  /// Throws ConfigError on an empty separator or an image slot equal to
  /// either tag.
  void check() const;
  /// `<Img><ImageHere></Img>` with the configured tags.
  std::string image_tag() const { return image_open + image_slot + image_close; }
};

/// Overrides defaults with any keys present in `j`.
FramingConfig framing_from_json(const Json& j);
OrderedJson framing_to_json(const FramingConfig& cfg);

struct InterleavedText {
  std::string text;
  std::vector<std::string> media;  // in slot order
};

/// Tags the first mention of each image in `images` (keyed by id) as
/// `IMAGE#<id>` followed by the image tag. Mentions of ids in
/// `earlier_ids` are left as plain text. An image of `images` that is never
/// mentioned gets its tagged mention appended, so every image introduced in
/// the turn has exactly one slot.
///
/// Throws UnknownImageId for a mention in neither set.
InterleavedText interleave_image_tokens(std::string_view content,
                                        const std::vector<std::pair<ImageId, std::string>>& images,
                                        const std::set<ImageId>& earlier_ids = {},
                                        const FramingConfig& cfg = {});

struct LossSpan {
  std::size_t start = 0;  // code points into prompt + response
  std::size_t end = 0;
  bool operator==(const LossSpan&) const = default;
};

struct TrainingSample {
  std::string dialogue_id;
  std::size_t turn = 1;  // 1-based
  std::string prompt;
  std::string response;
  std::vector<std::string> image_order;
  LossSpan loss_span;
};

/// Maps an image id to its media locator; ids without an entry use the id
/// itself as a dangling locator.
using MediaLookup = std::map<ImageId, std::string>;

/// One sample per turn. Turn t's prompt extends turn t-1's prompt and
/// response with the turn-t question block; the response is the answer
/// plus separator.
///
/// Throws FramingError for an odd message count, UnknownImageId.
std::vector<TrainingSample> expand_dialogue(const Dialogue& d, const FramingConfig& cfg = {},
                                            const MediaLookup& media = {});

struct TurnRatio {
  std::vector<int> weights;  // weights[t-1] copies per turn-t sample

  /// "2:1" -> {2, 1}. Throws ConfigError.
  static TurnRatio parse(std::string_view text);
  void check() const;
  std::string to_string() const;
};

/// Indices into `samples`, each turn-t sample repeated weights[t-1] times,
/// shuffled by `seed`. Throws ConfigError when a sample's turn has no
/// weight.
std::vector<std::size_t> sample_with_turn_ratio(const std::vector<TrainingSample>& samples,
                                                const TurnRatio& ratio, std::uint64_t seed);

struct WriteOptions {
  /// Require every media locator to be an http(s) URL or an existing file.
  bool strict_media = false;
  std::filesystem::path media_root;  // base for relative locators
};

/// One record per line: {dialogue_id, turn, prompt, response, images, loss_span}.
std::string sample_to_jsonl(const TrainingSample& s);

/// Writes `samples` in manifest order. Throws IOError.
void write_jsonl(const std::vector<TrainingSample>& samples,
                 const std::vector<std::size_t>& manifest, const std::filesystem::path& path,
                 const WriteOptions& options = {});

}  // namespace sparkles
