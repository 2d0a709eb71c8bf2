#include "sparkles/task_eval.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <sstream>

#include "sparkles/error.hpp"
#include "sparkles/judge_eval.hpp"
#include "sparkles/parallel.hpp"
#include "sparkles/random.hpp"

namespace sparkles {

std::string_view to_string(TaskKind task) { return task == TaskKind::bison ? "bison" : "nlvr2"; }

TaskKind task_from_string(std::string_view name) {
  if (name == "bison") return TaskKind::bison;
  if (name == "nlvr2") return TaskKind::nlvr2;
  throw ConfigError("unknown task '" + std::string(name) + "' (expected bison or nlvr2)");
}

const std::vector<std::string>& task_labels(TaskKind task) {
  static const std::vector<std::string> kBison = {"IMAGE#1", "IMAGE#2"};
  static const std::vector<std::string> kNlvr2 = {"TRUE", "FALSE"};
  return task == TaskKind::bison ? kBison : kNlvr2;
}

void TaskExample::check() const {
  const auto& labels = task_labels(task);
  if (std::find(labels.begin(), labels.end(), gold) == labels.end())
    throw SchemaError("example " + example_id + ": gold '" + gold + "' is not a " +
                      std::string(to_string(task)) + " label");
}

std::string build_task_prompt(const TaskExample& ex) {
  if (ex.task == TaskKind::nlvr2)
    return "Carefully examine a pair of images: the left IMAGE#1<Img><ImageHere></Img> and the "
           "right IMAGE#2<Img><ImageHere></Img>.\n"
           "Determine whether the following statement is true about the pair of images:\n"
           "'" + ex.text + "'\n"
           "Jointly reasoning about the statement grounded in IMAGE#1 and IMAGE#2.\n"
           "The task requires compositional joint reasoning, including quantities, comparisons, "
           "and relations. Let's think step by step.\n"
           "Please start your response with \"Let's think step by step.\" and end with "
           "\"Therefore, the answer (TRUE or FALSE) is\".";
  return "Carefully examine the two similar images of IMAGE#1<Img><ImageHere></Img> and "
         "IMAGE#2<Img><ImageHere></Img>.\n"
         "Given the following caption, you must select which of two images best matches the "
         "caption.\n"
         "The caption is: '" + ex.text + "'.\n"
         "This task requires fine-grained visual reasoning between the caption and each image. "
         "Let's think step by step.\n"
         "Please start your response with \"Let's think step by step.\" and end with "
         "\"Therefore, the answer (IMAGE#1 or IMAGE#2) is\".";
}

std::string extract_final_answer(std::string_view response, TaskKind task) {
  std::string_view body = response;
  while (!body.empty() && std::isspace(static_cast<unsigned char>(body.front())))
    body.remove_prefix(1);
  static constexpr std::string_view kPrefix = "Let's think step by step.";
  static constexpr std::string_view kPrefixCurly = "Let\xE2\x80\x99s think step by step.";
  if (body.substr(0, kPrefix.size()) != kPrefix &&
      body.substr(0, kPrefixCurly.size()) != kPrefixCurly)
    throw FormatViolation("response does not start with \"Let's think step by step.\"");
  const std::size_t last = body.rfind("Therefore");
  if (last == std::string_view::npos) throw FormatViolation("response has no \"Therefore\"");
  std::string tail(body.substr(last + 9));

  static const std::regex kEchoNlvr2(R"(\(\s*true\s+or\s+false\s*\))", std::regex::icase);
  static const std::regex kEchoBison(R"(\(\s*image\s*#\s*1\s+or\s+image\s*#\s*2\s*\))",
                                     std::regex::icase);
  static const std::regex kBool(R"(\b(true|false)\b)", std::regex::icase);
  static const std::regex kImage(R"(image\s*#\s*([12])(?![0-9]))", std::regex::icase);

  std::set<std::string> found;
  if (task == TaskKind::nlvr2) {
    tail = std::regex_replace(tail, kEchoNlvr2, " ");
    for (auto it = std::sregex_iterator(tail.begin(), tail.end(), kBool);
         it != std::sregex_iterator(); ++it) {
      std::string w = (*it)[1].str();
      std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) { return std::toupper(c); });
      found.insert(w);
    }
  } else {
    tail = std::regex_replace(tail, kEchoBison, " ");
    for (auto it = std::sregex_iterator(tail.begin(), tail.end(), kImage);
         it != std::sregex_iterator(); ++it)
      found.insert("IMAGE#" + (*it)[1].str());
  }
  if (found.size() != 1)
    throw Ambiguous(found.empty() ? "no answer label after the last \"Therefore\""
                                  : "both labels after the last \"Therefore\"");
  return *found.begin();
}

OrderedJson TaskResult::to_json() const {
  OrderedJson j;
  j["example_id"] = example_id;
  j["extracted"] = extracted ? OrderedJson(*extracted) : OrderedJson(nullptr);
  j["correct"] = correct ? OrderedJson(*correct) : OrderedJson(nullptr);
  j["attempts"] = attempts;
  j["raw_response"] = raw_response;
  j["errors"] = errors;
  return j;
}

double TaskReport::accuracy_percent() const { return round_half_up(accuracy * 100.0, 1); }

OrderedJson TaskReport::to_json() const {
  OrderedJson j;
  j["task"] = std::string(to_string(task));
  j["model"] = model;
  j["total"] = total;
  j["correct"] = correct;
  j["accuracy"] = accuracy;
  j["accuracy_percent"] = accuracy_percent();
  OrderedJson rs = OrderedJson::array();
  for (const TaskResult& r : results) rs.push_back(r.to_json());
  j["results"] = std::move(rs);
  return j;
}

TaskReport run_task_eval(const std::vector<TaskExample>& examples, const ChatClient& model,
                         const TaskEvalOptions& options) {
  if (examples.empty()) throw ConfigError("task evaluation needs at least one example");
  if (options.max_regen < 0) throw ConfigError("max_regen must be >= 0");
  for (const TaskExample& ex : examples) ex.check();

  std::vector<TaskResult> results(examples.size());
  parallel_for(examples.size(), options.parallelism, [&](std::size_t i) {
    const TaskExample& ex = examples[i];
    TaskResult& r = results[i];
    r.example_id = ex.example_id;
    const ChatMessage msg =
        slotted_user_message(build_task_prompt(ex), {ex.media.first, ex.media.second},
                             options.framing);
    const ChatRequest req =
        model.make_request(options.framing.system_message, {msg}, options.model_config);
    for (int attempt = 1; attempt <= options.max_regen + 1; ++attempt) {
      r.attempts = attempt;
      r.raw_response = model.complete_chat(req).content;
      try {
        r.extracted = extract_final_answer(r.raw_response, ex.task);
        r.correct = *r.extracted == ex.gold;
        return;
      } catch (const Error& e) {
        r.errors.push_back(e.kind() + ": " + e.what());
      }
    }
  });

  TaskReport report;
  report.task = examples.front().task;
  report.model = model.endpoint().model;
  report.total = examples.size();
  for (const TaskResult& r : results)
    if (r.correct.value_or(false)) ++report.correct;
  report.accuracy = static_cast<double>(report.correct) / static_cast<double>(report.total);
  report.results = std::move(results);
  return report;
}

DedupResult dedup_against_training(const std::vector<TaskExample>& examples,
                                   const std::set<std::string>& training_image_ids) {
  DedupResult out;
  for (const TaskExample& ex : examples) {
    if (training_image_ids.count(ex.image_ids.first) ||
        training_image_ids.count(ex.image_ids.second))
      ++out.removed;
    else
      out.kept.push_back(ex);
  }
  return out;
}

std::set<std::string> read_id_registry(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::set<std::string> ids;
  Json j = Json::parse(text, nullptr, false);
  if (!j.is_discarded() && j.is_array()) {
    for (const Json& id : j) ids.insert(id.is_string() ? id.get<std::string>() : id.dump());
    return ids;
  }
  std::istringstream in(text);
  std::string id;
  while (in >> id) ids.insert(id);
  return ids;
}

std::vector<TaskExample> sample_examples(const std::vector<TaskExample>& examples, std::size_t n,
                                         std::uint64_t seed) {
  if (n >= examples.size()) return examples;
  Rng rng = Rng::derive(seed, "task_sample");
  std::vector<std::size_t> idx = rng.sample_indices(examples.size(), n);
  std::sort(idx.begin(), idx.end());
  std::vector<TaskExample> out;
  for (std::size_t i : idx) out.push_back(examples[i]);
  return out;
}

namespace {

std::string id_string(const Json& j) { return j.is_string() ? j.get<std::string>() : j.dump(); }

std::string under(const std::filesystem::path& root, const std::string& name) {
  return root.empty() ? name : (root / name).string();
}

}  // namespace

std::vector<TaskExample> load_bison(const std::filesystem::path& path,
                                    const std::filesystem::path& image_root) {
  const Json doc = json_text::parse_strict(read_file(path));
  const Json& data = doc.is_object() && doc.contains("data") ? doc["data"] : doc;
  if (!data.is_array()) throw SchemaError(path.string() + ": expected a list of BISON examples");
  std::vector<TaskExample> out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Json& e = data[i];
    const Json& cands = e.at("image_candidates");
    if (!cands.is_array() || cands.size() != 2)
      throw SchemaError(path.string() + ": BISON example needs two image candidates");
    TaskExample ex;
    ex.task = TaskKind::bison;
    ex.example_id = e.contains("bison_id") ? id_string(e["bison_id"]) : std::to_string(i);
    ex.text = e.at("caption").get<std::string>();
    ex.image_ids = {id_string(cands[0].at("image_id")), id_string(cands[1].at("image_id"))};
    auto media = [&](const Json& c) {
      return under(image_root, c.contains("image_filename") ? c["image_filename"].get<std::string>()
                                                            : id_string(c.at("image_id")));
    };
    ex.media = {media(cands[0]), media(cands[1])};
    const std::string truth = id_string(e.at("true_image_id"));
    if (truth == ex.image_ids.first) ex.gold = "IMAGE#1";
    else if (truth == ex.image_ids.second) ex.gold = "IMAGE#2";
    else throw SchemaError("BISON example " + ex.example_id + ": true image is not a candidate");
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<TaskExample> load_nlvr2(const std::filesystem::path& path,
                                    const std::filesystem::path& image_root) {
  std::vector<TaskExample> out;
  std::istringstream lines(read_file(path));
  std::string line;
  while (std::getline(lines, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const Json e = json_text::parse_strict(line);
    TaskExample ex;
    ex.task = TaskKind::nlvr2;
    ex.example_id = e.at("identifier").get<std::string>();
    ex.text = e.at("sentence").get<std::string>();
    std::string label = e.at("label").is_boolean() ? (e["label"].get<bool>() ? "TRUE" : "FALSE")
                                                   : e["label"].get<std::string>();
    std::transform(label.begin(), label.end(), label.begin(),
                   [](unsigned char c) { return std::toupper(c); });
    ex.gold = label;
    // Images are named after the identifier without its final "-N" part.
    const std::string prefix = ex.example_id.substr(0, ex.example_id.rfind('-'));
    ex.image_ids = {prefix + "-img0.png", prefix + "-img1.png"};
    if (image_root.empty() && e.contains("left_url") && e.contains("right_url"))
      ex.media = {e["left_url"].get<std::string>(), e["right_url"].get<std::string>()};
    else
      ex.media = {under(image_root, ex.image_ids.first), under(image_root, ex.image_ids.second)};
    ex.check();
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace sparkles
