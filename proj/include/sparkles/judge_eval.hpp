#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sparkles/llm_client.hpp"
#include "sparkles/schema.hpp"
#include "sparkles/train_builder.hpp"

namespace sparkles {

struct EvalTurn {
  std::string question;
  std::vector<ImageId> image_ids;  // images introduced in this turn
};

/// One two-turn benchmark dialogue. `config_class` is the image count of
/// each turn: (2,1), (2,2) or (3,1).
struct EvalItem {
  std::string item_id;
  std::vector<ImageDescription> image_descriptions;
  EvalTurn turn1;
  EvalTurn turn2;
  std::pair<int, int> config_class{2, 1};

  /// Throws SchemaError when config_class is not one of the three classes
  /// or disagrees with the turns' image counts.
  void check() const;
  const ImageDescription* describe(const ImageId& id) const;
};

/// {item_id, image_descriptions, turn1:{question,image_ids}, turn2:{...},
/// config_class:[n1,n2]}; config_class is derived when absent.
EvalItem eval_item_from_json(const Json& j);
OrderedJson eval_item_to_json(const EvalItem& item);
std::vector<EvalItem> read_benchmark(const std::filesystem::path& path);

struct ModelTranscript {
  std::string a1;
  std::string a2;
  std::string prompt1;  // framed turn-1 prompt, image slots included
  std::string prompt2;
};

/// Splits `text` at each image tag into a user message of text and image
/// parts; `media` supplies the locators in slot order.
ChatMessage slotted_user_message(std::string_view text, const std::vector<std::string>& media,
                                 const FramingConfig& cfg = {});

/// Chat messages for one user turn: text parts interleaved with image parts
/// at the tagged positions.
ChatMessage user_turn_message(std::string_view content,
                              const std::vector<std::pair<ImageId, std::string>>& images,
                              const std::set<ImageId>& earlier_ids, const FramingConfig& cfg,
                              std::string* framed_text = nullptr);

/// Asks the model under test both questions, turn 2 with the turn-1
/// exchange as history. Throws EmptyResponse; transport errors propagate.
ModelTranscript run_model_dialogue(const EvalItem& item, const ChatClient& model,
                                   const GenerationConfig& config,
                                   const FramingConfig& framing = {});

/// Fills the judge template. Throws TemplateError for an empty answer or
/// a referenced image without a description.
std::string build_judge_prompt(const EvalItem& item, std::string_view a1, std::string_view a2);

struct JudgeVerdict {
  // [turn][criterion], turn 0 = A1
  std::array<std::array<int, 3>, 2> ratings{};
  std::array<std::array<std::string, 3>, 2> explanations{};
  std::array<int, 2> raw_overall{};  // the judge's own overall; not used in scoring

  bool operator==(const JudgeVerdict&) const = default;
};

/// Reads the eight `[[n]]` ratings of a judge reply (C1..C3 and overall,
/// for A1 then A2). Throws MalformedVerdict on a count other than 8, a
/// non-integer, or a value outside [1, 10].
JudgeVerdict parse_judge_output(std::string_view text);

/// A reply in the judge's required output format.
std::string render_judge_reply(const JudgeVerdict& v);

struct EvalScorecard {
  std::array<std::array<double, 3>, 2> criterion_means{};
  double a1 = 0;
  double a2 = 0;
  double score = 0;
  std::size_t items = 0;
};

/// Half-up rounding to `decimals` places, as reported in tables.
double round_half_up(double x, int decimals);

/// A1/A2 from criterion means, score from A1 and A2.
EvalScorecard scorecard_from_means(const std::array<std::array<double, 3>, 2>& means);

/// Per-criterion means over verdicts, then turn means, then the score. The
/// judge's own overall ratings are ignored. Throws EvalAborted when empty.
EvalScorecard aggregate(const std::vector<JudgeVerdict>& verdicts);

OrderedJson scorecard_to_json(const EvalScorecard& s);

struct EvalRecord {
  std::string item_id;
  std::string status;  // scored | unrecoverable
  std::string a1_text;
  std::string a2_text;
  std::vector<std::string> model_prompts;
  std::string judge_raw;
  std::optional<JudgeVerdict> verdict;
  int attempts = 0;  // judge calls
  std::string error;

  OrderedJson to_json() const;
};

struct EvalOptions {
  GenerationConfig model_config = default_generation_config(ClientRole::model_under_test);
  GenerationConfig judge_config = default_generation_config(ClientRole::judge);
  FramingConfig framing;
  int max_judge_retries = 2;
  /// Abort when more items than this are unrecoverable; unset means 10% of
  /// the benchmark, rounded down.
  std::optional<std::size_t> max_unrecoverable;
  std::size_t parallelism = 4;
};

struct EvalReport {
  EvalScorecard scorecard;
  std::vector<EvalRecord> records;
  std::size_t unrecoverable = 0;
  std::string model;
  std::string judge_model;

  OrderedJson to_json() const;
};

/// Model dialogue, judge prompt, judge call and parse for every item;
/// malformed verdicts are re-queried up to `max_judge_retries` times.
/// Throws EvalAborted when unrecoverable items exceed the threshold.
EvalReport run_sparkles_eval(const std::vector<EvalItem>& items, const ChatClient& model,
                             const ChatClient& judge, const EvalOptions& options = {});

}  // namespace sparkles
