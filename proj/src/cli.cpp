#include "sparkles/cli.hpp"

#include <algorithm>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "sparkles/analytics.hpp"
#include "sparkles/error.hpp"
#include "sparkles/gen_pipeline.hpp"
#include "sparkles/judge_eval.hpp"
#include "sparkles/mock.hpp"
#include "sparkles/task_eval.hpp"
#include "sparkles/train_builder.hpp"

namespace sparkles {

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const CLI::ParseError*>(&e)) return kExitConfig;
  if (dynamic_cast<const TransportError*>(&e) || dynamic_cast<const ProtocolError*>(&e))
    return kExitTransport;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const AuthError*>(&e) ||
      dynamic_cast<const IOError*>(&e) || dynamic_cast<const SyntaxError*>(&e) ||
      dynamic_cast<const SchemaError*>(&e) || dynamic_cast<const FixtureMiss*>(&e) ||
      dynamic_cast<const PoolExhausted*>(&e) || dynamic_cast<const TemplateError*>(&e) ||
      dynamic_cast<const UnknownImageId*>(&e) || dynamic_cast<const FramingError*>(&e))
    return kExitConfig;
  return kExitFailure;
}

std::string error_json(const std::exception& e) {
  OrderedJson j;
  if (const auto* err = dynamic_cast<const Error*>(&e)) j["error"] = err->kind();
  else if (dynamic_cast<const CLI::ParseError*>(&e)) j["error"] = "UsageError";
  else j["error"] = "InternalError";
  j["message"] = e.what();
  j["exit_code"] = exit_code_for(e);
  if (const auto* gf = dynamic_cast<const GenerationFailed*>(&e)) j["reasons"] = gf->reasons();
  return j.dump();
}

namespace {

// One JSON object per line on stderr.
class Logger {
 public:
  Logger(std::ostream& err, bool verbose) : err_(err), verbose_(verbose) {}
  void info(std::string_view event, OrderedJson fields = OrderedJson::object()) {
    if (verbose_) emit("info", event, std::move(fields));
  }
  void warn(std::string_view event, OrderedJson fields = OrderedJson::object()) {
    emit("warn", event, std::move(fields));
  }

 private:
  void emit(std::string_view level, std::string_view event, OrderedJson fields) {
    OrderedJson j;
    j["level"] = level;
    j["event"] = event;
    for (auto& [k, v] : fields.items()) j[k] = v;
    err_ << j.dump() << '\n';
  }
  std::ostream& err_;
  bool verbose_;
};

std::string manifest_path_for(std::string out) {
  while (out.size() > 1 && (out.back() == '/' || out.back() == '\\')) out.pop_back();
  return out + ".manifest.json";
}

std::string file_digest(const std::string& path) {
  if (!std::filesystem::is_regular_file(path)) return "";
  return json_text::fnv1a_hex(read_file(path));
}

struct Run {
  std::string command;
  PipelineConfig cfg;
  std::string out;  // primary output; the manifest sits next to it
  std::vector<std::pair<std::string, std::string>> inputs;   // role -> path
  std::vector<std::pair<std::string, std::string>> outputs;  // role -> path
  OrderedJson details = OrderedJson::object();

  void input(const std::string& role, const std::string& path) { inputs.emplace_back(role, path); }
  void output(const std::string& role, const std::string& path) { outputs.emplace_back(role, path); }

  void write_manifest(const std::string& status, const std::exception* error = nullptr) const {
    if (out.empty()) return;
    OrderedJson m;
    m["tool"] = "sparkles";
    m["version"] = kVersion;
    m["command"] = command;
    m["status"] = status;
    m["seed"] = cfg.seed;
    m["config_hash"] = config_hash(cfg);
    m["config"] = config_to_json(cfg);
    auto files = [](const auto& list) {
      OrderedJson arr = OrderedJson::array();
      for (const auto& [role, path] : list)
        arr.push_back(OrderedJson{{"role", role}, {"path", path}, {"fnv1a", file_digest(path)}});
      return arr;
    };
    m["inputs"] = files(inputs);
    if (cfg.mock_fixture)
      m["mock_fixture"] = OrderedJson{{"path", *cfg.mock_fixture},
                                      {"fnv1a", file_digest(*cfg.mock_fixture)}};
    m["outputs"] = files(outputs);
    m["details"] = details;
    if (error) m["error"] = OrderedJson::parse(error_json(*error));
    write_file(manifest_path_for(out), m.dump(2) + "\n");
  }
};

class Clients {
 public:
  Clients(const PipelineConfig& cfg, CliIo& io) : cfg_(cfg), io_(io) {
    if (cfg.mock_fixture) {
      if (!std::filesystem::exists(*cfg.mock_fixture))
        throw ConfigError("mock fixture not found: " + *cfg.mock_fixture);
      transport_ = ReplayTransport::from_file(*cfg.mock_fixture);
    } else if (io.transport) {
      transport_ = io.transport;
    } else {
      transport_ = std::make_shared<HttpTransport>();
    }
  }

  ChatClient make(const EndpointConfig& ep, std::string_view role) const {
    if (ep.endpoint.base_url.empty() && !cfg_.mock_fixture)
      throw ConfigError(std::string("no base_url configured for the ") + std::string(role) +
                        " endpoint");
    if (ep.endpoint.model.empty())
      throw ConfigError(std::string("no model configured for the ") + std::string(role) + " endpoint");
    return ChatClient(ep.endpoint, transport_, cfg_.retry, io_.sleeper, ep.requests_per_minute);
  }

 private:
  const PipelineConfig& cfg_;
  CliIo& io_;
  std::shared_ptr<Transport> transport_;
};

std::string require_path(const std::string& flag_value, const PipelineConfig& cfg,
                         const std::string& key, const std::string& flag) {
  std::string p = flag_value;
  if (p.empty()) {
    auto it = cfg.paths.find(key);
    if (it == cfg.paths.end())
      throw ConfigError("missing " + flag + " (or paths." + key + " in the config)");
    p = it->second;
  }
  if (!std::filesystem::exists(p)) throw ConfigError(flag + " not found: " + p);
  return p;
}

std::string optional_path(const std::string& flag_value, const PipelineConfig& cfg,
                          const std::string& key) {
  if (!flag_value.empty()) return flag_value;
  auto it = cfg.paths.find(key);
  return it == cfg.paths.end() ? "" : it->second;
}

void write_jsonl_lines(const std::string& path, const std::vector<Dialogue>& dialogues) {
  std::string text;
  for (const Dialogue& d : dialogues) text += dialogue_to_jsonl(d) + "\n";
  write_file(path, text);
}

MediaLookup media_from_pool(const std::string& pool_path) {
  MediaLookup media;
  if (pool_path.empty()) return media;
  for (const ImageDescription& img : read_image_pool(pool_path))
    if (img.media) media[img.image_id] = *img.media;
  return media;
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::string mode, pool, demos, out, pool_state;
  std::size_t count = 0;
  int num_images = 0;
  int max_attempts = 0;
};

void run_generate(Run& run, const GenerateArgs& a, CliIo& io, Logger& log) {
  PipelineConfig& cfg = run.cfg;
  if (!a.mode.empty()) cfg.generation.mode = a.mode;
  if (a.count) cfg.generation.count = a.count;
  if (a.num_images) cfg.generation.num_images = a.num_images;
  if (a.max_attempts) cfg.generation.max_attempts = a.max_attempts;
  if (cfg.generation.mode != "vg" && cfg.generation.mode != "cc")
    throw ConfigError("--mode must be vg or cc");
  const std::string pool_path = require_path(a.pool, cfg, "pool", "--pool");
  const std::string demos_path = require_path(a.demos, cfg, "demos", "--demos");
  const std::string state_path = optional_path(a.pool_state, cfg, "pool_state");
  run.input("pool", pool_path);
  run.input("demos", demos_path);

  GenerationTask task;
  if (cfg.generation.mode == "vg") {
    std::optional<NumImages> n;
    if (cfg.generation.num_images) {
      if (*cfg.generation.num_images != 2 && *cfg.generation.num_images != 3)
        throw ConfigError("--num-images must be 2 or 3");
      n = static_cast<NumImages>(*cfg.generation.num_images);
    }
    task = GenerationTask::single_vg(cfg.seed, n);
  } else {
    task = GenerationTask::multi_cc(cfg.seed);
  }
  task.weight_two = cfg.generation.weight_two;
  task.weight_three = cfg.generation.weight_three;
  task.min_valid_per_request = cfg.generation.min_valid_per_request;
  task.check();

  DemonstrationPool demos{read_dialogues(demos_path)};
  std::set<ImageId> consumed;
  if (!state_path.empty() && std::filesystem::exists(state_path)) {
    consumed = CandidatePool::load_state(state_path);
    run.input("pool_state", state_path);
  }
  CandidatePool pool(read_image_pool(pool_path), consumed);
  if (!state_path.empty()) {
    pool.persist_to(state_path);
    run.output("pool_state", state_path);
  }

  Clients clients(cfg, io);
  const ChatClient client = clients.make(cfg.data_llm, "data_llm");
  GenerationContext ctx{demos, pool, client, cfg.data_llm.generation, cfg.parallelism};
  log.info("generate.start", {{"mode", cfg.generation.mode}, {"requests", cfg.generation.count}});
  BatchResult result = generate_batch(task, ctx, cfg.generation.count, cfg.generation.max_attempts);

  std::vector<Dialogue> dialogues;
  for (const GeneratedDialogue& g : result.dialogues) dialogues.push_back(g.dialogue);
  write_jsonl_lines(a.out, dialogues);
  run.output("dialogues", a.out);

  OrderedJson records = OrderedJson::array();
  std::vector<std::string> reasons;
  for (const RequestRecord& r : result.records) {
    records.push_back(r.to_json());
    for (const std::string& why : r.failure_reasons)
      reasons.push_back("request " + std::to_string(r.request_index) + ": " + why);
  }
  run.details["requests"] = std::move(records);
  run.details["dialogues"] = dialogues.size();
  run.details["failed_requests"] = result.failed_requests;
  log.info("generate.done", {{"dialogues", dialogues.size()}, {"failed_requests", result.failed_requests}});
  if (result.failed_requests)
    log.warn("generate.partial", {{"failed_requests", result.failed_requests}});
  if (dialogues.empty())
    throw GenerationFailed("no request produced a valid dialogue", std::move(reasons));
}

struct BuildTrainArgs {
  std::string in, ratio, out, pool, media_root;
  bool strict_media = false;
};

void run_build_train(Run& run, const BuildTrainArgs& a, Logger& log) {
  PipelineConfig& cfg = run.cfg;
  if (!a.ratio.empty()) cfg.turn_ratio = a.ratio;
  const TurnRatio ratio = TurnRatio::parse(cfg.turn_ratio);
  const std::string in = require_path(a.in, cfg, "dialogues", "--in");
  const std::string pool_path = optional_path(a.pool, cfg, "pool");
  run.input("dialogues", in);
  if (!pool_path.empty()) run.input("pool", pool_path);

  const MediaLookup media = media_from_pool(pool_path);
  std::vector<TrainingSample> samples;
  for (const Dialogue& d : read_dialogues(in)) {
    std::vector<TrainingSample> s = expand_dialogue(d, cfg.framing, media);
    samples.insert(samples.end(), std::make_move_iterator(s.begin()),
                   std::make_move_iterator(s.end()));
  }
  const std::vector<std::size_t> manifest = sample_with_turn_ratio(samples, ratio, cfg.seed);
  WriteOptions opts;
  opts.strict_media = a.strict_media;
  opts.media_root = a.media_root;
  write_jsonl(samples, manifest, a.out, opts);
  run.output("training", a.out);

  std::map<std::size_t, std::size_t> per_turn;
  for (std::size_t i : manifest) ++per_turn[samples[i].turn];
  OrderedJson turns = OrderedJson::object();
  for (const auto& [t, n] : per_turn) turns[std::to_string(t)] = n;
  run.details["turn_ratio"] = ratio.to_string();
  run.details["expanded_samples"] = samples.size();
  run.details["written_samples"] = manifest.size();
  run.details["per_turn"] = std::move(turns);
  log.info("build_train.done", {{"samples", manifest.size()}});
}

struct EvalSparklesArgs {
  std::string bench, model_endpoint, model_name, judge_endpoint, judge_name, out;
  long max_unrecoverable = -1;
  int max_judge_retries = -1;
};

void run_eval_sparkles(Run& run, const EvalSparklesArgs& a, CliIo& io, Logger& log) {
  PipelineConfig& cfg = run.cfg;
  if (!a.model_endpoint.empty()) cfg.model_under_test.endpoint.base_url = a.model_endpoint;
  if (!a.model_name.empty()) cfg.model_under_test.endpoint.model = a.model_name;
  if (!a.judge_endpoint.empty()) cfg.judge.endpoint.base_url = a.judge_endpoint;
  if (!a.judge_name.empty()) cfg.judge.endpoint.model = a.judge_name;
  if (a.max_unrecoverable >= 0) cfg.eval.max_unrecoverable = static_cast<std::size_t>(a.max_unrecoverable);
  if (a.max_judge_retries >= 0) cfg.eval.max_judge_retries = a.max_judge_retries;
  const std::string bench = require_path(a.bench, cfg, "bench", "--bench");
  run.input("bench", bench);

  const std::vector<EvalItem> items = read_benchmark(bench);
  Clients clients(cfg, io);
  const ChatClient model = clients.make(cfg.model_under_test, "model_under_test");
  const ChatClient judge = clients.make(cfg.judge, "judge");
  EvalOptions opts;
  opts.model_config = cfg.model_under_test.generation;
  opts.judge_config = cfg.judge.generation;
  opts.framing = cfg.framing;
  opts.max_judge_retries = cfg.eval.max_judge_retries;
  opts.max_unrecoverable = cfg.eval.max_unrecoverable;
  opts.parallelism = cfg.parallelism;
  log.info("eval_sparkles.start", {{"items", items.size()}});
  const EvalReport report = run_sparkles_eval(items, model, judge, opts);
  write_file(a.out, report.to_json().dump(2) + "\n");
  run.output("report", a.out);
  run.details["scorecard"] = scorecard_to_json(report.scorecard);
  run.details["unrecoverable"] = report.unrecoverable;
  log.info("eval_sparkles.done", {{"score", report.scorecard.score}});
}

struct EvalTaskArgs {
  std::string task, data, model_endpoint, model_name, out, image_root, exclude_ids;
  std::size_t n = 0;
  int max_regen = -1;
};

void run_eval_task(Run& run, const EvalTaskArgs& a, CliIo& io, Logger& log) {
  PipelineConfig& cfg = run.cfg;
  if (!a.model_endpoint.empty()) cfg.model_under_test.endpoint.base_url = a.model_endpoint;
  if (!a.model_name.empty()) cfg.model_under_test.endpoint.model = a.model_name;
  if (a.max_regen >= 0) cfg.eval.max_regen = a.max_regen;
  const TaskKind kind = task_from_string(a.task);
  const std::string data = require_path(a.data, cfg, std::string(to_string(kind)), "--data");
  const std::string image_root = optional_path(a.image_root, cfg, "image_root");
  const std::string exclude = optional_path(a.exclude_ids, cfg, "training_ids");
  run.input("data", data);

  std::vector<TaskExample> examples =
      kind == TaskKind::bison ? load_bison(data, image_root) : load_nlvr2(data, image_root);
  run.details["loaded"] = examples.size();
  if (!exclude.empty()) {
    run.input("exclude_ids", exclude);
    DedupResult dedup = dedup_against_training(examples, read_id_registry(exclude));
    run.details["removed_overlapping"] = dedup.removed;
    examples = std::move(dedup.kept);
  }
  if (a.n) examples = sample_examples(examples, a.n, cfg.seed);

  Clients clients(cfg, io);
  const ChatClient model = clients.make(cfg.model_under_test, "model_under_test");
  TaskEvalOptions opts;
  opts.max_regen = cfg.eval.max_regen;
  opts.model_config = cfg.model_under_test.generation;
  opts.framing = cfg.framing;
  opts.parallelism = cfg.parallelism;
  log.info("eval_task.start", {{"task", a.task}, {"examples", examples.size()}});
  const TaskReport report = run_task_eval(examples, model, opts);
  write_file(a.out, report.to_json().dump(2) + "\n");
  run.output("report", a.out);
  run.details["accuracy_percent"] = report.accuracy_percent();
  log.info("eval_task.done", {{"accuracy_percent", report.accuracy_percent()}});
}

struct StatsArgs {
  std::string in, report, curate_out;
  bool svg = false;
  std::size_t k_verbs = 20, k_nouns = 4;
};

void run_stats(Run& run, const StatsArgs& a, Logger& log) {
  const std::string in = require_path(a.in, run.cfg, "dialogues", "--in");
  run.input("dialogues", in);
  const std::vector<Dialogue> dialogues = read_dialogues(in);
  const std::filesystem::path dir(a.report);
  std::filesystem::create_directories(dir);

  const CorpusStats stats = compute_stats(dialogues);
  const TopPairsReport top = top_pairs_report(stats.pairs, a.k_verbs, a.k_nouns);
  auto emit = [&](const std::string& role, const std::string& name, const std::string& text) {
    write_file(dir / name, text);
    run.output(role, (dir / name).string());
  };
  OrderedJson j = corpus_stats_to_json(stats, a.k_verbs, a.k_nouns);
  j["dialogues"] = dialogues.size();
  emit("stats", "stats.json", j.dump(2) + "\n");
  emit("top_pairs_csv", "top_pairs.csv", top_pairs_to_csv(top));
  if (a.svg) emit("top_pairs_svg", "top_pairs.svg", top_pairs_to_svg(top));
  if (stats.user.messages == 0) log.warn("stats.empty_corpus");

  if (!a.curate_out.empty()) {
    const CurationResult cur = curate_unique(dialogues);
    write_jsonl_lines(a.curate_out, cur.kept);
    run.output("curated", a.curate_out);
    OrderedJson c;
    c["input"] = dialogues.size();
    c["kept"] = cur.kept.size();
    c["failed_ids"] = cur.failed_ids;
    emit("curation", "curation.json", c.dump(2) + "\n");
    run.details["curated"] = cur.kept.size();
  }
  run.details["pair_failures"] = stats.pair_failures;
}

struct ValidateArgs {
  std::string in, spec, out;
};

int run_validate(Run& run, const ValidateArgs& a, CliIo& io) {
  const std::string in = require_path(a.in, run.cfg, "dialogues", "--in");
  run.input("dialogues", in);
  const DatasetSpec& spec = builtin_spec(a.spec);
  std::size_t valid = 0, total = 0;
  std::string lines;
  for (const Dialogue& d : read_dialogues(in)) {
    const ValidationReport r = validate_dialogue(d, spec);
    ++total;
    if (r.valid()) ++valid;
    OrderedJson j;
    j["dialogue_id"] = d.dialogue_id;
    j["valid"] = r.valid();
    OrderedJson v = OrderedJson::array();
    for (const Violation& x : r.violations) v.push_back({{"rule", x.rule_id}, {"message", x.message}});
    j["violations"] = std::move(v);
    OrderedJson w = OrderedJson::array();
    for (const Violation& x : r.warnings) w.push_back({{"rule", x.rule_id}, {"message", x.message}});
    j["warnings"] = std::move(w);
    lines += j.dump() + "\n";
  }
  OrderedJson summary{{"spec", spec.name}, {"total", total}, {"valid", valid}, {"invalid", total - valid}};
  lines += summary.dump() + "\n";
  io.out << lines;
  if (!a.out.empty()) {
    write_file(a.out, lines);
    run.output("report", a.out);
  }
  run.details["summary"] = summary;
  return valid == total ? kExitOk : kExitFailure;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, CliIo& io) {
  CLI::App app{"Multimodal instruction-following dialogue pipeline", "sparkles"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path, mock_fixture;
  std::uint64_t seed = 0;
  std::size_t parallelism = 0;
  bool verbose = false;
  CLI::Option* seed_opt = app.add_option("--seed", seed, "Master seed");
  app.add_option("--config", config_path, "Pipeline config (JSON)");
  app.add_option("--parallelism", parallelism, "Concurrent requests")->check(CLI::PositiveNumber);
  app.add_option("--mock-fixture", mock_fixture, "Replay responses from this fixture");
  app.add_flag("-v,--verbose", verbose, "Log progress as JSON lines on stderr");

  GenerateArgs gen;
  CLI::App* c_gen = app.add_subcommand("generate", "Generate dialogues with the data LLM");
  c_gen->add_option("--mode", gen.mode, "vg (single dialogue) or cc (three dialogues)");
  c_gen->add_option("--count", gen.count, "Number of generation requests");
  c_gen->add_option("--pool", gen.pool, "Image description pool (JSONL)");
  c_gen->add_option("--demos", gen.demos, "Demonstration dialogues (JSONL)");
  c_gen->add_option("--pool-state", gen.pool_state, "Consumed-candidate state file");
  c_gen->add_option("--num-images", gen.num_images, "vg: fixed first-turn image count (2 or 3)");
  c_gen->add_option("--max-attempts", gen.max_attempts, "Attempts per request");
  c_gen->add_option("--out", gen.out, "Output dialogues (JSONL)")->required();

  BuildTrainArgs bt;
  CLI::App* c_bt = app.add_subcommand("build-train", "Expand dialogues into training samples");
  c_bt->add_option("--in", bt.in, "Dialogues (JSONL)");
  c_bt->add_option("--ratio", bt.ratio, "Per-turn multiplicity, e.g. 2:1");
  c_bt->add_option("--pool", bt.pool, "Image pool providing media locators");
  c_bt->add_option("--media-root", bt.media_root, "Base directory for relative media");
  c_bt->add_flag("--strict-media", bt.strict_media, "Fail on unresolvable media");
  c_bt->add_option("--out", bt.out, "Training samples (JSONL)")->required();

  EvalSparklesArgs es;
  CLI::App* c_es = app.add_subcommand("eval-sparkles", "Judge-scored two-turn benchmark");
  c_es->add_option("--bench", es.bench, "Benchmark items (JSONL)");
  c_es->add_option("--model-endpoint", es.model_endpoint, "Base URL of the model under test");
  c_es->add_option("--model-name", es.model_name, "Model name sent to that endpoint");
  c_es->add_option("--judge-endpoint", es.judge_endpoint, "Base URL of the judge");
  c_es->add_option("--judge-name", es.judge_name, "Judge model name");
  c_es->add_option("--max-unrecoverable", es.max_unrecoverable, "Abort threshold");
  c_es->add_option("--max-judge-retries", es.max_judge_retries, "Re-queries per malformed verdict");
  c_es->add_option("--out", es.out, "Report (JSON)")->required();

  EvalTaskArgs et;
  CLI::App* c_et = app.add_subcommand("eval-task", "Zero-shot two-image task accuracy");
  c_et->add_option("--task", et.task, "bison or nlvr2")->required();
  c_et->add_option("--data", et.data, "Task data file");
  c_et->add_option("--n", et.n, "Evaluate a seeded sample of this size");
  c_et->add_option("--image-root", et.image_root, "Directory holding the images");
  c_et->add_option("--exclude-ids", et.exclude_ids, "Training image ids to exclude");
  c_et->add_option("--model-endpoint", et.model_endpoint, "Base URL of the model under test");
  c_et->add_option("--model-name", et.model_name, "Model name sent to that endpoint");
  c_et->add_option("--max-regen", et.max_regen, "Regenerations per malformed response");
  c_et->add_option("--out", et.out, "Report (JSON)")->required();

  StatsArgs st;
  CLI::App* c_st = app.add_subcommand("stats", "Corpus statistics and curation");
  c_st->add_option("--in", st.in, "Dialogues (JSONL)");
  c_st->add_option("--report", st.report, "Report directory")->required();
  c_st->add_option("--k-verbs", st.k_verbs, "Verbs in the top-pairs report");
  c_st->add_option("--k-nouns", st.k_nouns, "Nouns per verb");
  c_st->add_flag("--svg", st.svg, "Also write a top-pairs bar chart");
  c_st->add_option("--curate-out", st.curate_out,
                   "Write dialogues with a unique first-question key (demonstration pool)");

  ValidateArgs va;
  CLI::App* c_va = app.add_subcommand("validate", "Check dialogues against a dataset spec");
  c_va->add_option("--in", va.in, "Dialogues (JSONL)");
  c_va->add_option("--spec", va.spec, "Spec name, e.g. vg, cc-2, eval-3-1")->required();
  c_va->add_option("--out", va.out, "Also write the report here");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    io.out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    io.out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    io.err << error_json(e) << '\n' << app.help();
    return kExitConfig;
  }

  Logger log(io.err, verbose);
  Run run;
  CLI::App* sub = app.get_subcommands().front();
  run.command = sub->get_name();
  try {
    run.cfg = config_path.empty() ? default_pipeline_config() : load_config(config_path);
    if (!config_path.empty()) run.input("config", config_path);
    apply_env_overrides(run.cfg, io.env);
    if (seed_opt->count()) run.cfg.seed = seed;
    if (parallelism) run.cfg.parallelism = parallelism;
    if (!mock_fixture.empty()) run.cfg.mock_fixture = mock_fixture;
    resolve_secrets(run.cfg, io.env);

    int code = kExitOk;
    if (sub == c_gen) {
      run.out = gen.out;
      run_generate(run, gen, io, log);
    } else if (sub == c_bt) {
      run.out = bt.out;
      run_build_train(run, bt, log);
    } else if (sub == c_es) {
      run.out = es.out;
      run_eval_sparkles(run, es, io, log);
    } else if (sub == c_et) {
      run.out = et.out;
      run_eval_task(run, et, io, log);
    } else if (sub == c_st) {
      run.out = st.report;
      run_stats(run, st, log);
    } else {
      run.out = va.out;
      code = run_validate(run, va, io);
    }
    run.write_manifest(code == kExitOk ? "ok" : "invalid");
    return code;
  } catch (const std::exception& e) {
    io.err << error_json(e) << '\n';
    try {
      run.write_manifest("error", &e);
    } catch (const std::exception&) {
      // the output location itself may be the problem
    }
    return exit_code_for(e);
  }
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  CliIo io{std::cout, std::cerr, process_env(), nullptr, real_sleeper()};
  return dispatch(args, io);
}

}  // namespace sparkles
