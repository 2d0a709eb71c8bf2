#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "sparkles/llm_client.hpp"
#include "sparkles/random.hpp"
#include "sparkles/schema.hpp"

namespace sparkles {

/// System instruction given to the data LLM on every generation request.
inline constexpr std::string_view kDataSystemMessage = "You are a helpful assistant.";

// ---------------------------------------------------------------------------
// Pools

/// In-context example dialogues. Demonstrations are grouped by how many
/// images their first user turn introduces, since both generation modes pick
/// demonstrations per branch.
struct DemonstrationPool {
  std::vector<Dialogue> demos;

  /// Demos whose first user turn has exactly `n` images.
  std::vector<Dialogue> branch(int n) const;
};

/// k distinct demonstrations, uniform without replacement.
/// Throws PoolExhausted when k > pool size.
std::vector<Dialogue> sample_demonstrations(const std::vector<Dialogue>& pool,
                                            std::size_t k, Rng& rng);

/// Image descriptions available to the simulated user, plus the set of ids
/// already handed out. Draws are serialized so exclusion stays sound when
/// requests run concurrently.
class CandidatePool {
 public:
  explicit CandidatePool(std::vector<ImageDescription> items,
                         std::set<ImageId> consumed = {});

  /// Persist the consumed set to `path` after every excluding draw.
  void persist_to(std::filesystem::path path);

  std::vector<ImageDescription> draw(std::size_t k, bool exclude_consumed, Rng& rng);

  std::set<ImageId> consumed() const;
  std::size_t size() const { return items_.size(); }
  std::size_t remaining() const;

  static std::set<ImageId> load_state(const std::filesystem::path& path);
  static void save_state(const std::filesystem::path& path, const std::set<ImageId>& consumed);

 private:
  std::vector<ImageDescription> items_;
  std::set<ImageId> consumed_;
  std::optional<std::filesystem::path> state_path_;
  mutable std::mutex mu_;
};

/// Throws PoolExhausted if fewer than k (unconsumed, when excluding) items.
std::vector<ImageDescription> draw_candidates(CandidatePool& pool, std::size_t k,
                                              bool exclude_consumed, Rng& rng);

// ---------------------------------------------------------------------------
// Prompts

enum class NumImages { two = 2, three = 3 };

/// How image ids are written inside prompt blocks: bare integers (VG-style
/// sources) or quoted strings (CC-style sources).
enum class IdStyle { number, string };

/// Python-literal rendering of a string, quoted the way Python's repr()
/// quotes it.
std::string py_repr(std::string_view s);

using TemplateValues = std::map<std::string, std::string, std::less<>>;

/// Substitutes `{Name}` markers in one pass, so braces inside inserted
/// values are never re-scanned. Braces that do not name a value are kept.
/// Throws TemplateError when a name in `placeholders` has no value.
std::string fill_template(std::string_view tmpl, const TemplateValues& values,
                          const std::set<std::string, std::less<>>& placeholders);

/// Demonstration block as embedded in prompts: an array of dialogues, one
/// message object per line, the final assistant content replaced by "...".
std::string render_demonstrations(const std::vector<Dialogue>& demos, IdStyle ids);
/// Candidate block: an array of {image_id, caption} objects, one per line.
std::string render_descriptions(const std::vector<ImageDescription>& images, IdStyle ids);

/// Single-dialogue (VG-style) generation prompt.
/// Throws TemplateError unless |demos| >= 1 and |candidates| == 4 with
/// distinct ids.
std::string build_single_dialogue_prompt(const std::vector<Dialogue>& demos,
                                         const std::vector<ImageDescription>& candidates,
                                         NumImages num_images);

/// Multi-dialogue (CC-style) generation prompt. Demos are ordered by their
/// first-turn image count (1, 2, 3).
/// Throws TemplateError unless there are exactly 3 demos covering first-turn
/// counts {1, 2, 3} and 9 candidates with distinct ids.
std::string build_multi_dialogue_prompt(const std::vector<Dialogue>& demos,
                                        const std::vector<ImageDescription>& candidates);

/// Contents of the first ```json fence; without a fence, the bracket-balanced
/// array starting at the first '[' (later '[' are tried if that span does
/// not parse). Throws NoJsonFound.
std::string extract_json_block(std::string_view llm_output);

// ---------------------------------------------------------------------------
// Orchestration

enum class GenerationMode { single_vg, multi_cc };

struct GenerationTask {
  GenerationMode mode = GenerationMode::single_vg;
  DatasetSpec spec;
  std::size_t n_demos = 1;
  std::size_t n_candidates = 4;
  std::optional<NumImages> num_images_turn1;  // single_vg only; drawn per request if unset
  std::uint64_t seed = 0;
  /// Relative weights of "two" vs "three" when num_images_turn1 is unset.
  double weight_two = 1.0;
  double weight_three = 1.0;
  /// multi_cc: keep a request when at least this many of its dialogues
  /// validate.
  std::size_t min_valid_per_request = 2;

  static GenerationTask single_vg(std::uint64_t seed,
                                  std::optional<NumImages> num_images = std::nullopt);
  static GenerationTask multi_cc(std::uint64_t seed);

  /// Throws ConfigError when the mode's fixed shape is violated.
  void check() const;
};

struct Provenance {
  std::size_t request_index = 0;
  int attempt = 0;
  std::vector<std::string> demo_ids;
  std::vector<ImageId> candidate_ids;
  std::optional<int> num_images;
};

struct GeneratedDialogue {
  Dialogue dialogue;
  Provenance provenance;
};

struct RequestRecord {
  std::size_t request_index = 0;
  std::string status;  // ok | partial | failed
  int attempts = 0;
  std::vector<std::string> dialogue_ids;
  Provenance provenance;  // of the accepted attempt, or the last one
  Usage usage;
  std::vector<std::string> failure_reasons;

  OrderedJson to_json() const;
};

struct GenerationContext {
  const DemonstrationPool& demos;
  CandidatePool& candidates;
  const ChatClient& client;
  GenerationConfig config = default_generation_config(ClientRole::data_llm);
  std::size_t parallelism = 4;
};

struct BatchResult {
  std::vector<GeneratedDialogue> dialogues;
  std::vector<RequestRecord> records;
  std::size_t failed_requests = 0;
};

/// Deterministic UUID-shaped id for the `position`-th dialogue of a request.
std::string make_dialogue_id(std::uint64_t seed, std::size_t request_index,
                             std::size_t position);

/// Runs `count` independent generation requests. Each attempt round first
/// prepares every pending request in index order (demonstration sampling and
/// candidate draws), then issues the LLM calls with bounded parallelism, so
/// output and consumed-set evolution do not depend on scheduling. Requests
/// whose output fails validation are re-prepared with fresh randomness, up
/// to `max_attempts`.
BatchResult generate_batch(const GenerationTask& task, GenerationContext& ctx,
                           std::size_t count, int max_attempts = 3);

/// One request: sample demos, draw candidates, prompt, call, extract,
/// parse, validate, with retry. Returns only valid dialogues.
/// Throws GenerationFailed when every attempt failed.
std::vector<GeneratedDialogue> generate_dialogues(const GenerationTask& task,
                                                  GenerationContext& ctx,
                                                  int max_attempts = 3);

}  // namespace sparkles
