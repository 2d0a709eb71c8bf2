#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sparkles/llm_client.hpp"
#include "sparkles/train_builder.hpp"

namespace sparkles {

enum class TaskKind { bison, nlvr2 };

std::string_view to_string(TaskKind task);
/// Throws ConfigError for names other than "bison" and "nlvr2".
TaskKind task_from_string(std::string_view name);

/// Label strings: "IMAGE#1" / "IMAGE#2" for bison, "TRUE" / "FALSE" for nlvr2.
const std::vector<std::string>& task_labels(TaskKind task);

struct TaskExample {
  TaskKind task = TaskKind::bison;
  std::string example_id;
  std::pair<std::string, std::string> media;      // left/first, right/second
  std::pair<std::string, std::string> image_ids;  // for de-duplication
  std::string text;  // caption (bison) or statement (nlvr2)
  std::string gold;

  /// Throws SchemaError when gold is not a label of the task.
  void check() const;
};

/// The CoT prompt with two image slots (IMAGE#1 then IMAGE#2).
std::string build_task_prompt(const TaskExample& ex);

/// The reply must open with "Let's think step by step." and contain
/// "Therefore"; only the text after the last "Therefore" is searched, and it
/// must name exactly one label.
/// Throws FormatViolation or Ambiguous.
std::string extract_final_answer(std::string_view response, TaskKind task);

struct TaskResult {
  std::string example_id;
  std::string raw_response;
  std::optional<std::string> extracted;
  int attempts = 0;
  std::optional<bool> correct;  // set iff extracted is set
  std::vector<std::string> errors;

  OrderedJson to_json() const;
};

struct TaskEvalOptions {
  int max_regen = 3;
  GenerationConfig model_config = default_generation_config(ClientRole::model_under_test);
  FramingConfig framing;
  std::size_t parallelism = 4;
};

struct TaskReport {
  TaskKind task = TaskKind::bison;
  std::size_t total = 0;
  std::size_t correct = 0;
  double accuracy = 0;  // correct / total
  std::vector<TaskResult> results;
  std::string model;

  /// accuracy * 100, half-up to one decimal.
  double accuracy_percent() const;
  OrderedJson to_json() const;
};

/// Prompts the model once per example, regenerating up to `max_regen`
/// times on FormatViolation or Ambiguous. Examples that never yield an
/// answer count as wrong. Throws ConfigError on an empty example list.
TaskReport run_task_eval(const std::vector<TaskExample>& examples, const ChatClient& model,
                         const TaskEvalOptions& options = {});

struct DedupResult {
  std::vector<TaskExample> kept;
  std::size_t removed = 0;
};

/// Drops examples with either image in `training_image_ids`.
DedupResult dedup_against_training(const std::vector<TaskExample>& examples,
                                   const std::set<std::string>& training_image_ids);

/// Ids from a JSON array file or a file with one id per line.
std::set<std::string> read_id_registry(const std::filesystem::path& path);

/// `n` examples chosen by `seed`, kept in their original order. Returns
/// all examples when n >= size.
std::vector<TaskExample> sample_examples(const std::vector<TaskExample>& examples, std::size_t n,
                                         std::uint64_t seed);

/// BISON annotations: {"data": [{caption, image_candidates: [{image_id,
/// image_filename}, x2], true_image_id}]} or the bare array.
std::vector<TaskExample> load_bison(const std::filesystem::path& path,
                                    const std::filesystem::path& image_root = {});
/// NLVR2 JSON Lines: {identifier, sentence, label, left_url?, right_url?}.
std::vector<TaskExample> load_nlvr2(const std::filesystem::path& path,
                                    const std::filesystem::path& image_root = {});

}  // namespace sparkles
