#include "xma/cli.hpp"

#include <CLI11.hpp>
#include <signal.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "xma/config.hpp"
#include "xma/errors.hpp"
#include "xma/evaluate.hpp"
#include "xma/export.hpp"
#include "xma/inference.hpp"
#include "xma/ingest.hpp"
#include "xma/jsonl.hpp"
#include "xma/reannotate.hpp"
#include "xma/report.hpp"
#include "xma/runlog.hpp"
#include "xma/service.hpp"

#ifndef XMA_DEFAULT_CONFIG_DIR
#define XMA_DEFAULT_CONFIG_DIR "configs"
#endif
#ifndef XMA_DEFAULT_ASSETS_DIR
#define XMA_DEFAULT_ASSETS_DIR "assets"
#endif

namespace xma {

namespace fs = std::filesystem;

namespace {

struct DatasetArgs {
  std::string manifest;
  std::string schema;
  std::string task;
  std::string kind = "meme";
  std::string id;
};

void add_dataset_options(CLI::App* cmd, DatasetArgs& a, const std::string& flag,
                         const std::string& what) {
  cmd->add_option(flag, a.manifest, what)->required();
  cmd->add_option("--kind", a.kind, "meme or video")
      ->check(CLI::IsMember({"meme", "video"}))
      ->capture_default_str();
}

struct ModelArgs {
  std::string model = "stub";
  std::string lexicon;
  std::string garble;
  std::string fail;
  EndpointConfig endpoint;
  std::size_t concurrency = 4;
  bool no_cache = false;
};

void add_model_options(CLI::App* cmd, ModelArgs& m) {
  cmd->add_option("--model", m.model, "stub (offline lexicon model) or endpoint")
      ->check(CLI::IsMember({"stub", "endpoint"}))
      ->capture_default_str();
  cmd->add_option("--lexicon", m.lexicon, "stub model: lexicon file, one term per line");
  cmd->add_option("--stub-fail-ids", m.fail, "stub model: file of item ids whose call fails");
  cmd->add_option("--stub-garble-ids", m.garble,
                  "stub model: file of item ids answered with an unparseable reply");
  cmd->add_option("--endpoint-url", m.endpoint.base_url, "chat-completions base URL")
      ->capture_default_str();
  cmd->add_option("--model-name", m.endpoint.model_name, "model name sent to the endpoint")
      ->capture_default_str();
  cmd->add_option("--timeout-s", m.endpoint.timeout_s, "per-request timeout")
      ->capture_default_str();
  cmd->add_option("--max-retries", m.endpoint.max_retries, "retries on transient errors")
      ->capture_default_str();
  cmd->add_option("--concurrency", m.concurrency, "requests in flight")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_flag("--no-cache", m.no_cache, "ignore cached responses in the run log");
}

struct PromptArgs {
  std::string video_train;
  std::string shots = "auto";
  std::string sweep_report;
  std::uint64_t seed = 0;
  std::string mode = "multi-image";
  std::string descriptions;
  bool unbalanced = false;
};

void add_prompt_options(CLI::App* cmd, PromptArgs& p, bool with_shots) {
  cmd->add_option("--video-train", p.video_train,
                  "video training manifest (task labels) supplying demonstrations");
  if (with_shots) {
    cmd->add_option("--shots", p.shots, "number of demonstrations, or auto")
        ->capture_default_str();
    cmd->add_option("--sweep-report", p.sweep_report,
                    "sweep.jsonl from `xma sweep`; required for --shots auto");
  }
  cmd->add_option("--seed", p.seed, "demo and frame sampling seed")->capture_default_str();
  cmd->add_option("--mode", p.mode, "multi-image or description")
      ->check(CLI::IsMember({"multi-image", "description"}))
      ->capture_default_str();
  cmd->add_option("--descriptions", p.descriptions,
                  "sidecar of {id, description} lines for video demos");
  cmd->add_flag("--unbalanced", p.unbalanced, "draw demos without class balancing");
}

MediaKind parse_kind(const std::string& s) { return media_kind_from_string(s); }

std::set<std::string> read_id_file(const std::string& path) {
  std::set<std::string> ids;
  if (path.empty()) return ids;
  std::istringstream in(read_text_file(path));
  std::string line;
  while (std::getline(in, line)) {
    auto id = std::string(line.substr(0, line.find('#')));
    while (!id.empty() && std::isspace(static_cast<unsigned char>(id.back()))) id.pop_back();
    while (!id.empty() && std::isspace(static_cast<unsigned char>(id.front()))) id.erase(0, 1);
    if (!id.empty()) ids.insert(id);
  }
  return ids;
}

std::unique_ptr<ChatModel> make_model(ModelArgs& m) {
  if (m.model == "stub") {
    if (m.lexicon.empty()) throw ConfigError("--model stub needs --lexicon");
    auto stub = std::make_unique<StubModel>(load_lexicon(m.lexicon));
    stub->fail_ids = read_id_file(m.fail);
    stub->garble_ids = read_id_file(m.garble);
    return stub;
  }
  if (const char* key = std::getenv("XMA_API_KEY")) m.endpoint.api_key = key;
  validate(m.endpoint);
  return std::make_unique<EndpointModel>(m.endpoint);
}

SweepReport read_sweep_report(const fs::path& path) {
  SweepReport report;
  for_each_jsonl(path, [&](const json& j, std::size_t) {
    if (j.value("kind", "") != "row") return;
    SweepRow row;
    row.n_shots = j.at("n_shots").get<std::size_t>();
    row.metrics.acc = j.at("acc").get<double>();
    row.metrics.macro_f1 = j.at("macro_f1").get<double>();
    report.rows.push_back(row);
  });
  if (report.rows.empty()) throw ValidationError(path.string() + " holds no sweep rows");
  return report;
}

std::size_t resolve_shots(const PromptArgs& p) {
  if (p.shots != "auto") {
    try {
      std::size_t used = 0;
      auto n = std::stoul(p.shots, &used);
      if (used == p.shots.size()) return n;
    } catch (const std::exception&) {
    }
    throw ValidationError("--shots must be a count or auto");
  }
  if (p.sweep_report.empty()) throw ValidationError("--shots auto needs --sweep-report");
  return select_optimal_shots(read_sweep_report(p.sweep_report));
}

std::vector<std::size_t> parse_count_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream in(s);
  std::string part;
  while (std::getline(in, part, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoul(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw ValidationError("'" + s + "' is not a comma-separated list of counts");
    }
  }
  return out;
}

std::string one_decimal(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f", std::floor(v * 10.0 + 0.5 + 1e-9) / 10.0);
  return buf;
}

std::map<std::string, BinaryLabel> read_answers(const fs::path& path, const TaskDef& task,
                                                std::map<std::string, double>& elapsed) {
  std::map<std::string, BinaryLabel> out;
  for_each_jsonl(path, [&](const json& j, std::size_t line) {
    const auto id = j.at("item_id").get<std::string>();
    const auto word = j.at("label").get<std::string>();
    auto label = binary_label_from_string(word);
    if (!label) label = task.parse_word(word);
    if (!label) {
      throw ParseError(path.filename().string() + ":" + std::to_string(line) + ": label '" +
                           word + "' is not a label of task '" + task.task_id + "'",
                       line);
    }
    out[id] = *label;
    elapsed[id] = j.value("elapsed_s", 0.0);
  });
  return out;
}

/// Every option of the parsed command chain with its effective value.
ordered_json resolved_options(const CLI::App* app) {
  ordered_json j = ordered_json::object();
  for (const auto* opt : app->get_options()) {
    const auto& names = opt->get_lnames();
    const auto name = !names.empty() ? names.front() : opt->get_name();
    if (name == "help" || name.empty()) continue;
    const auto& res = opt->results();
    if (res.empty()) {
      j[name] = opt->get_default_str();
    } else if (res.size() == 1) {
      j[name] = res.front();
    } else {
      j[name] = res;
    }
  }
  for (const auto* sub : app->get_subcommands()) j[sub->get_name()] = resolved_options(sub);
  return j;
}

class Cli {
 public:
  Cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
      : args_(args), out_(out), err_(err) {}

  int run();

 private:
  void build();
  void write_lock(const fs::path& dir) const;
  LabelConfig config() const { return LabelConfig::load(config_dir_); }
  Dataset task_dataset(const std::string& path, const TaskDef& task, const std::string& kind,
                       const std::string& id = {}) const {
    return load_dataset(path, LabelSchema::for_task(task), parse_kind(kind), id);
  }
  /// --schema, or the task's own vocabulary when only --task is given.
  Dataset schema_or_task_dataset(const DatasetArgs& a) const;
  std::vector<Demo> demos_for(const PromptArgs& p, const TaskDef& task, std::size_t n) const;

  void cmd_ingest();
  void cmd_remap();
  void cmd_split();
  void cmd_sample();
  void cmd_predict();
  void cmd_sweep();
  void cmd_queue_stats();
  void cmd_queue_answer();
  void cmd_serve();
  void cmd_finalize();
  void cmd_export();
  void cmd_eval();
  void cmd_diff();
  void cmd_dist();
  void cmd_cost();
  void cmd_report();
  void cmd_replay();
  int cmd_rerun();

  std::vector<std::string> args_;
  std::ostream& out_;
  std::ostream& err_;
  CLI::App app_{"Meme-to-video hateful content label alignment pipeline", "xma"};
  std::string config_dir_ = XMA_DEFAULT_CONFIG_DIR;

  CLI::App* ingest_ = nullptr;
  CLI::App* remap_ = nullptr;
  CLI::App* split_ = nullptr;
  CLI::App* sample_ = nullptr;
  CLI::App* predict_ = nullptr;
  CLI::App* sweep_ = nullptr;
  CLI::App* queue_ = nullptr;
  CLI::App* queue_stats_ = nullptr;
  CLI::App* queue_answer_ = nullptr;
  CLI::App* serve_ = nullptr;
  CLI::App* finalize_ = nullptr;
  CLI::App* export_ = nullptr;
  CLI::App* eval_ = nullptr;
  CLI::App* diff_ = nullptr;
  CLI::App* dist_ = nullptr;
  CLI::App* cost_ = nullptr;
  CLI::App* report_ = nullptr;
  CLI::App* replay_ = nullptr;
  CLI::App* rerun_ = nullptr;

  DatasetArgs ds_;
  DatasetArgs ds2_;
  std::string out_path_;
  std::string out_dir_;
  std::string store_dir_;
  std::string format_ = "text";
  std::uint64_t seed_ = 0;
  double fraction_ = 0.8;
  std::size_t n_ = 0;
  ModelArgs model_;
  PromptArgs prompt_;
  std::string sweep_shots_ = "0,2,4,6,8";
  std::string answers_;
  std::string annotator_ = "scripted";
  double ttl_s_ = 300.0;
  ServiceConfig service_;
  std::string static_dir_ = XMA_DEFAULT_ASSETS_DIR;

  std::vector<std::string> strategies_;
  std::string memes_;
  std::string final_;
  std::vector<std::string> evals_;
  std::string profile_ = "VIDEO_MODEL";
  std::uint64_t shuffle_seed_ = 0;
  std::uint64_t frame_seed_ = 0;
  std::uint64_t aug_seed_ = 0;

  std::vector<std::string> preds_;
  std::string pred_a_;
  std::string pred_b_;
  std::string name_a_ = "A";
  std::string name_b_ = "B";

  std::string cost_kind_ = "meme";
  double rate_ = 1.0;
  double duration_min_ = 1.0;
  bool cost_table_ = false;

  std::string lock_path_;
};

void Cli::build() {
  app_.require_subcommand(1);
  app_.add_option("--config-dir", config_dir_, "directory holding labels.yaml and mappings.yaml")
      ->capture_default_str();

  ingest_ = app_.add_subcommand("ingest", "Validate a manifest and report label counts");
  add_dataset_options(ingest_, ds_, "--manifest", "line-delimited media manifest");
  ingest_->add_option("--schema", ds_.schema, "source label schema id")->required();
  ingest_->add_option("--id", ds_.id, "dataset id (default: manifest file stem)");
  ingest_->add_option("--out", out_path_, "write the validated manifest here");

  remap_ = app_.add_subcommand("remap", "Rewrite source labels into a task's vocabulary");
  add_dataset_options(remap_, ds_, "--manifest", "source manifest");
  remap_->add_option("--schema", ds_.schema, "source label schema id")->required();
  remap_->add_option("--task", ds_.task, "target task id")->required();
  remap_->add_option("--id", ds_.id, "dataset id (default: manifest file stem)");
  remap_->add_option("--out", out_path_, "remapped manifest")->required();

  split_ = app_.add_subcommand("split", "Seeded train/test split");
  add_dataset_options(split_, ds_, "--manifest", "manifest to split");
  split_->add_option("--schema", ds_.schema, "label schema id");
  split_->add_option("--task", ds_.task, "task id, when labels are task words");
  split_->add_option("--id", ds_.id, "dataset id (default: manifest file stem)");
  split_->add_option("--train-fraction", fraction_, "share of items in the training part")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  split_->add_option("--seed", seed_, "shuffle seed")->capture_default_str();
  split_->add_option("--out-dir", out_dir_, "writes <id>_train.mft and <id>_test.mft")
      ->required();

  sample_ = app_.add_subcommand("sample", "Seeded uniform sample without replacement");
  add_dataset_options(sample_, ds_, "--manifest", "manifest to sample from");
  sample_->add_option("--schema", ds_.schema, "label schema id");
  sample_->add_option("--task", ds_.task, "task id, when labels are task words");
  sample_->add_option("--id", ds_.id, "dataset id (default: manifest file stem)");
  sample_->add_option("--n", n_, "sample size")->required();
  sample_->add_option("--seed", seed_, "sampling seed")->capture_default_str();
  sample_->add_option("--out", out_path_, "sampled manifest")->required();

  predict_ = app_.add_subcommand("predict", "Few-shot model pass over a dataset");
  add_dataset_options(predict_, ds_, "--dataset", "manifest with task-word labels");
  predict_->add_option("--task", ds_.task, "task id")->required();
  add_prompt_options(predict_, prompt_, true);
  add_model_options(predict_, model_);
  predict_->add_option("--out-dir", out_dir_, "writes predictions.jsonl and runlog.jsonl")
      ->required();
  predict_->add_option("--store", store_dir_,
                       "annotation store to receive the disagreement queue");

  sweep_ = app_.add_subcommand("sweep", "Evaluate several demonstration counts");
  add_dataset_options(sweep_, ds_, "--test", "evaluation manifest with task-word labels");
  sweep_->add_option("--task", ds_.task, "task id")->required();
  add_prompt_options(sweep_, prompt_, false);
  sweep_->add_option("--shots", sweep_shots_, "comma-separated demonstration counts")
      ->capture_default_str();
  add_model_options(sweep_, model_);
  sweep_->add_option("--out-dir", out_dir_, "writes sweep.jsonl, sweep.txt and runlog.jsonl")
      ->required();

  queue_ = app_.add_subcommand("queue", "Inspect or feed the annotation queue");
  queue_->require_subcommand(1);
  queue_stats_ = queue_->add_subcommand("stats", "Print queue progress");
  queue_stats_->add_option("--store", store_dir_, "annotation store directory")->required();
  queue_stats_->add_option("--format", format_, "text or json")
      ->check(CLI::IsMember({"text", "json"}))
      ->capture_default_str();
  queue_answer_ = queue_->add_subcommand("answer", "Submit scripted human answers");
  queue_answer_->add_option("--store", store_dir_, "annotation store directory")->required();
  queue_answer_->add_option("--answers", answers_, "lines of {item_id, label, elapsed_s}")
      ->required();
  queue_answer_->add_option("--annotator", annotator_, "annotator id")->capture_default_str();
  queue_answer_->add_option("--ttl-s", ttl_s_, "lease length")->capture_default_str();

  serve_ = app_.add_subcommand("serve", "Run the annotation service");
  serve_->add_option("--store", store_dir_, "annotation store directory")->required();
  serve_->add_option("--host", service_.host, "listen address")->capture_default_str();
  serve_->add_option("--port", service_.port, "listen port (0 picks one)")
      ->capture_default_str();
  serve_->add_option("--static-dir", static_dir_, "annotator UI files")->capture_default_str();
  serve_->add_option("--reports-dir", service_.reports_dir, "machine reports to expose");
  serve_->add_option("--ttl-s", service_.lease_ttl_s, "default lease length")
      ->capture_default_str();

  finalize_ = app_.add_subcommand("finalize", "Write the dataset with final voted labels");
  add_dataset_options(finalize_, ds_, "--dataset", "manifest that was enqueued");
  finalize_->add_option("--store", store_dir_, "annotation store directory")->required();
  finalize_->add_option("--out", out_path_, "finalized manifest")->required();

  export_ = app_.add_subcommand("export", "Write fine-tuning manifests");
  export_->add_option("--strategy", strategies_,
                      "NO_FT, VID_FT, OM_FT, RM_FT, VID_RM_FT or all (repeatable)")
      ->required();
  export_->add_option("--task", ds_.task, "task id")->required();
  export_->add_option("--memes", memes_, "sampled meme manifest with remapped labels");
  export_->add_option("--final", final_, "finalized meme manifest");
  export_->add_option("--eval", evals_, "video test manifest (repeatable)");
  export_->add_option("--profile", profile_, "IMAGE_MODEL or VIDEO_MODEL")
      ->check(CLI::IsMember({"IMAGE_MODEL", "VIDEO_MODEL"}))
      ->capture_default_str();
  export_->add_option("--shuffle-seed", shuffle_seed_, "seed for mixing sources")
      ->capture_default_str();
  export_->add_option("--frame-seed", frame_seed_, "seed for single-frame sampling")
      ->capture_default_str();
  export_->add_option("--aug-seed", aug_seed_, "seed for pseudo-video augmentation")
      ->capture_default_str();
  add_prompt_options(export_, prompt_, true);
  export_->add_option("--out-dir", out_dir_, "export root")->required();

  eval_ = app_.add_subcommand("eval", "Score prediction files against gold labels");
  add_dataset_options(eval_, ds_, "--gold", "manifest with task-word labels");
  eval_->add_option("--task", ds_.task, "task id")->required();
  eval_->add_option("--pred", preds_, "NAME=predictions.jsonl (repeatable)")->required();
  eval_->add_option("--format", format_, "text, jsonl or html")->capture_default_str();
  eval_->add_option("--out", out_path_, "also write the report here");

  diff_ = app_.add_subcommand("diff", "Items corrected and broken between two runs");
  add_dataset_options(diff_, ds_, "--gold", "manifest with task-word labels");
  diff_->add_option("--task", ds_.task, "task id")->required();
  diff_->add_option("--a", pred_a_, "baseline predictions")->required();
  diff_->add_option("--b", pred_b_, "compared predictions")->required();
  diff_->add_option("--name-a", name_a_, "baseline name")->capture_default_str();
  diff_->add_option("--name-b", name_b_, "compared name")->capture_default_str();
  diff_->add_option("--format", format_, "text, jsonl or html")->capture_default_str();
  diff_->add_option("--out", out_path_, "also write the report here");

  dist_ = app_.add_subcommand("dist", "Label distribution before and after re-annotation");
  add_dataset_options(dist_, ds_, "--before", "remapped manifest");
  dist_->add_option("--after", ds2_.manifest, "finalized manifest")->required();
  dist_->add_option("--task", ds_.task, "task id")->required();
  dist_->add_option("--format", format_, "text, jsonl or html")->capture_default_str();
  dist_->add_option("--out", out_path_, "also write the report here");

  cost_ = app_.add_subcommand("cost", "Estimated annotation hours");
  cost_->add_option("--kind", cost_kind_, "meme or video")
      ->check(CLI::IsMember({"meme", "video"}))
      ->capture_default_str();
  cost_->add_option("--n", n_, "number of items");
  cost_->add_option("--rate", rate_, "share of memes needing a human")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  cost_->add_option("--duration-min", duration_min_, "video length in minutes when unknown")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cost_->add_option("--manifest", ds_.manifest, "video manifest; uses per-item durations");
  cost_->add_option("--schema", ds_.schema, "label schema of --manifest");
  cost_->add_flag("--table", cost_table_, "print the dataset-size sweep table");

  report_ = app_.add_subcommand("report", "Render a machine report");
  report_->add_option("--input", ds_.manifest, "line-delimited report")->required();
  report_->add_option("--format", format_, "text, jsonl or html")->capture_default_str();
  report_->add_option("--out", out_path_, "write here instead of stdout");

  replay_ = app_.add_subcommand("replay", "Check that a store replays and print its state");
  replay_->add_option("--store", store_dir_, "annotation store directory")->required();

  rerun_ = app_.add_subcommand("rerun", "Repeat the run recorded in a run.lock");
  rerun_->add_option("lock", lock_path_, "run.lock file")->required();
}

void Cli::write_lock(const fs::path& dir) const {
  ordered_json lock;
  lock["tool"] = "xma";
  lock["argv"] = args_;
  lock["cwd"] = fs::current_path().generic_string();
  lock["config_dir"] = config_dir_;
  lock["resolved"] = resolved_options(&app_);
  fs::create_directories(dir);
  write_file_atomic(dir / "run.lock", lock.dump(2) + "\n");
}

Dataset Cli::schema_or_task_dataset(const DatasetArgs& a) const {
  auto cfg = config();
  if (!a.schema.empty()) {
    return load_dataset(a.manifest, cfg.schema(a.schema), parse_kind(a.kind), a.id);
  }
  if (!a.task.empty()) return task_dataset(a.manifest, cfg.task(a.task), a.kind, a.id);
  throw ValidationError("give --schema or --task");
}

std::vector<Demo> Cli::demos_for(const PromptArgs& p, const TaskDef& task,
                                 std::size_t n) const {
  DemoOptions opts;
  opts.balanced = !p.unbalanced;
  if (!p.descriptions.empty()) opts.descriptions = load_descriptions(p.descriptions);
  if (n == 0) return {};
  if (p.video_train.empty()) throw ValidationError("demonstrations need --video-train");
  auto train = task_dataset(p.video_train, task, "video");
  return select_demos(train, task, n, p.seed, opts);
}

void Cli::cmd_ingest() {
  auto cfg = config();
  auto ds = load_dataset(ds_.manifest, cfg.schema(ds_.schema), parse_kind(ds_.kind), ds_.id);
  out_ << "dataset " << ds.dataset_id << ": " << ds.size() << " " << to_string(ds.kind)
       << " item(s), schema " << ds.schema.id() << "\n";
  for (const auto& [label, count] : label_counts(ds)) {
    out_ << "  " << label << ": " << count << "\n";
  }
  if (!out_path_.empty()) {
    save_dataset(ds, out_path_);
    write_lock(fs::path(out_path_).parent_path());
  }
}

void Cli::cmd_remap() {
  auto cfg = config();
  const auto& task = cfg.task(ds_.task);
  auto ds = load_dataset(ds_.manifest, cfg.schema(ds_.schema), parse_kind(ds_.kind), ds_.id);
  auto remapped = remap_dataset(ds, cfg.mapping(ds_.schema, ds_.task), task);
  save_dataset(remapped, out_path_);
  write_lock(fs::path(out_path_).parent_path());
  out_ << "remapped " << ds.size() << " item(s) from " << ds_.schema << " to " << task.task_id
       << "\n";
  for (const auto& [label, count] : label_counts(remapped)) {
    out_ << "  " << label << ": " << count << "\n";
  }
}

void Cli::cmd_split() {
  auto ds = schema_or_task_dataset(ds_);
  auto [train, test] = split_dataset(ds, SplitSpec{fraction_, seed_});
  fs::path dir(out_dir_);
  save_dataset(train, dir / (train.dataset_id + ".mft"));
  save_dataset(test, dir / (test.dataset_id + ".mft"));
  write_lock(dir);
  out_ << train.dataset_id << ": " << train.size() << ", " << test.dataset_id << ": "
       << test.size() << "\n";
}

void Cli::cmd_sample() {
  auto ds = schema_or_task_dataset(ds_);
  auto sampled = sample_items(ds, n_, seed_);
  save_dataset(sampled, out_path_);
  write_lock(fs::path(out_path_).parent_path());
  out_ << "sampled " << sampled.size() << " of " << ds.size() << " item(s)\n";
  for (const auto& [label, count] : label_counts(sampled)) {
    out_ << "  " << label << ": " << count << "\n";
  }
}

void Cli::cmd_predict() {
  auto cfg = config();
  const auto& task = cfg.task(ds_.task);
  auto ds = task_dataset(ds_.manifest, task, ds_.kind);
  const auto n = resolve_shots(prompt_);
  auto demos = demos_for(prompt_, task, n);
  const auto mode = prompt_mode_from_string(prompt_.mode);
  std::vector<PredictJob> jobs;
  for (const auto& item : ds.items) {
    jobs.push_back({item.item_id, build_prompt(item, demos, task, mode, prompt_.seed)});
  }
  auto model = make_model(model_);
  fs::path dir(out_dir_);
  fs::create_directories(dir);
  RunLog log(dir / "runlog.jsonl");
  auto preds = predict_all(jobs, *model, log, AnswerMap::for_task(task),
                           BatchOptions{model_.concurrency, !model_.no_cache});
  save_predictions(preds, task, dir / "predictions.jsonl");
  write_lock(dir);

  std::size_t failed = 0, cached = 0;
  for (const auto& p : preds) {
    failed += !p.prediction.has_label();
    cached += p.from_cache;
  }
  out_ << "predicted " << preds.size() << " item(s) with n=" << n << " (" << cached
       << " cached, " << failed << " without a label)\n";

  if (!store_dir_.empty()) {
    Store::initialize(store_dir_, task);
    SystemClock clock;
    Store store(store_dir_, clock);
    std::map<std::string, Prediction> by_id;
    for (const auto& p : preds) by_id[p.item_id] = p.prediction;
    auto stats = store.enqueue_disagreements(ds, by_id);
    store.write_snapshot();
    out_ << "queue: " << stats.agreed << " agreed, " << stats.queued << " conflicts, "
         << stats.failed << " model failures, " << stats.added << " newly recorded\n";
  }
}

void Cli::cmd_sweep() {
  auto cfg = config();
  const auto& task = cfg.task(ds_.task);
  auto test = task_dataset(ds_.manifest, task, ds_.kind);
  if (prompt_.video_train.empty()) throw ValidationError("sweep needs --video-train");
  auto train = task_dataset(prompt_.video_train, task, "video");
  SweepOptions opts;
  opts.mode = prompt_mode_from_string(prompt_.mode);
  opts.balanced = !prompt_.unbalanced;
  if (!prompt_.descriptions.empty()) opts.descriptions = load_descriptions(prompt_.descriptions);
  opts.batch = BatchOptions{model_.concurrency, !model_.no_cache};
  auto model = make_model(model_);
  fs::path dir(out_dir_);
  fs::create_directories(dir);
  RunLog log(dir / "runlog.jsonl");
  auto report = sweep_shots(test, train, task, parse_count_list(sweep_shots_), *model, log,
                            prompt_.seed, opts);
  auto table = sweep_table(report);
  write_file_atomic(dir / "sweep.jsonl", render_jsonl(table));
  write_file_atomic(dir / "sweep.txt", render_text(table));
  write_lock(dir);
  out_ << render_text(table) << "selected n = " << select_optimal_shots(report) << "\n";
}

void Cli::cmd_queue_stats() {
  SystemClock clock;
  Store store(store_dir_, clock);
  auto p = progress_snapshot(store.counts());
  if (format_ == "json") {
    out_ << p.to_json().dump(2) << "\n";
    return;
  }
  out_ << "total " << p.total << "\n"
       << "agreed " << p.agreed << "\n"
       << "queued " << p.queued << "\n"
       << "leased " << p.leased << "\n"
       << "resolved " << p.resolved << "\n"
       << "failed " << p.failed << "\n"
       << "disagreement_rate " << format_2dp(p.disagreement_rate) << "\n"
       << "estimated_remaining_hours " << format_2dp(p.estimated_remaining_hours) << "\n";
}

void Cli::cmd_queue_answer() {
  SystemClock clock;
  Store store(store_dir_, clock);
  std::map<std::string, double> elapsed;
  auto answers = read_answers(answers_, store.task(), elapsed);
  std::vector<std::string> missing;
  for (const auto& r : store.records()) {
    if ((r.state == RecordState::Queued || r.state == RecordState::Failed) &&
        !answers.count(r.item_id)) {
      missing.push_back(r.item_id);
    }
  }
  if (!missing.empty()) {
    throw IncompleteQueueError("no scripted answer for " + std::to_string(missing.size()) +
                                   " queued item(s), first '" + missing.front() + "'",
                               missing);
  }
  std::size_t submitted = 0;
  while (auto task = store.lease_next(annotator_, ttl_s_)) {
    AnnotationEvent ev;
    ev.item_id = task->item_id;
    ev.annotator_id = annotator_;
    ev.lease_token = task->lease_token;
    ev.label = answers.at(task->item_id);
    ev.elapsed_s = elapsed.at(task->item_id);
    store.submit_annotation(ev);
    ++submitted;
  }
  store.write_snapshot();
  out_ << "submitted " << submitted << " answer(s)\n";
}

void Cli::cmd_serve() {
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  SystemClock clock;
  Store store(store_dir_, clock);
  service_.static_assets_dir = static_dir_;
  Service service(store, service_);
  const int port = service.bind();
  out_ << "serving " << store_dir_ << " on http://" << service_.host << ":" << port << "/"
       << std::endl;
  std::thread watcher([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    service.stop();
  });
  service.run();
  // run() only returns after stop(); wake the watcher if it is still waiting.
  pthread_kill(watcher.native_handle(), SIGTERM);
  watcher.join();
  pthread_sigmask(SIG_UNBLOCK, &signals, nullptr);
  out_ << "snapshot written at seq " << store.seq() << "\n";
}

void Cli::cmd_finalize() {
  SystemClock clock;
  Store store(store_dir_, clock);
  auto ds = task_dataset(ds_.manifest, store.task(), ds_.kind);
  auto final_ds = finalize_dataset(store, ds);
  save_dataset(final_ds, out_path_);
  write_lock(fs::path(out_path_).parent_path());
  std::size_t resolved = 0;
  for (const auto& item : final_ds.items) resolved += item.provenance == "RESOLVED";
  out_ << "finalized " << final_ds.size() << " item(s), " << resolved
       << " resolved by an annotator\n";
}

void Cli::cmd_export() {
  auto cfg = config();
  const auto& task = cfg.task(ds_.task);
  std::vector<StrategyId> ids;
  for (const auto& s : strategies_) {
    if (s == "all") {
      ids = all_strategies();
      break;
    }
    ids.push_back(strategy_from_string(s));
  }
  std::optional<Dataset> video_train, memes, final_memes;
  std::vector<Dataset> evals;
  if (!prompt_.video_train.empty()) video_train = task_dataset(prompt_.video_train, task, "video");
  if (!memes_.empty()) memes = task_dataset(memes_, task, "meme");
  if (!final_.empty()) final_memes = task_dataset(final_, task, "meme");
  for (const auto& e : evals_) evals.push_back(task_dataset(e, task, "video"));

  ExportSources sources;
  sources.video_train = video_train ? &*video_train : nullptr;
  sources.meme_original = memes ? &*memes : nullptr;
  sources.meme_final = final_memes ? &*final_memes : nullptr;
  for (const auto& e : evals) sources.eval.push_back(&e);

  ExportConfig ec;
  ec.out_dir = out_dir_;
  ec.task = task;
  ec.profile = profile_from_string(profile_);
  ec.shuffle_seed = shuffle_seed_;
  ec.frame_seed = frame_seed_;
  ec.aug.seed = aug_seed_;
  ec.mode = prompt_mode_from_string(prompt_.mode);
  const bool no_ft = std::find(ids.begin(), ids.end(), StrategyId::NoFt) != ids.end();
  if (no_ft) {
    ec.optimal_n = resolve_shots(prompt_);
    ec.demos = demos_for(prompt_, task, ec.optimal_n);
  }
  for (auto id : ids) {
    auto r = export_manifest(id, sources, ec);
    out_ << to_string(id) << ": " << r.train_examples << " training example(s), "
         << r.eval_manifests.size() << " eval manifest(s)\n";
  }
  write_lock(out_dir_);
}

void Cli::cmd_eval() {
  auto cfg = config();
  const auto& task = cfg.task(ds_.task);
  auto gold = task_dataset(ds_.manifest, task, ds_.kind);
  const auto gt = binary_labels(gold, task);
  std::vector<StrategyResult> results;
  for (const auto& spec : preds_) {
    auto eq = spec.find('=');
    const auto name = eq == std::string::npos ? fs::path(spec).stem().string() : spec.substr(0, eq);
    const auto path = eq == std::string::npos ? spec : spec.substr(eq + 1);
    auto by_id = load_predictions(path, task);
    std::vector<Prediction> preds;
    StrategyResult res;
    for (const auto& item : gold.items) {
      auto it = by_id.find(item.item_id);
      preds.push_back(it == by_id.end() ? Prediction::failed() : it->second);
      res.failed += !preds.back().has_label();
    }
    res.strategy = name;
    res.dataset = gold.dataset_id;
    res.metrics = compute_metrics(gt, preds);
    res.items = preds.size();
    results.push_back(res);
  }
  auto doc = render_report(metrics_table(results), report_format_from_string(format_));
  if (!out_path_.empty()) {
    write_file_atomic(out_path_, doc);
    write_lock(fs::path(out_path_).parent_path());
  }
  out_ << doc;
}

void Cli::cmd_diff() {
  auto cfg = config();
  const auto& task = cfg.task(ds_.task);
  auto gold = task_dataset(ds_.manifest, task, ds_.kind);
  auto a = load_predictions(pred_a_, task);
  auto b = load_predictions(pred_b_, task);
  std::vector<std::string> ids;
  std::vector<Prediction> pa, pb;
  for (const auto& item : gold.items) {
    ids.push_back(item.item_id);
    pa.push_back(a.count(item.item_id) ? a.at(item.item_id) : Prediction::failed());
    pb.push_back(b.count(item.item_id) ? b.at(item.item_id) : Prediction::failed());
  }
  auto d = diff_predictions(ids, binary_labels(gold, task), pa, pb);
  auto doc = render_report(diff_table(d, name_a_, name_b_), report_format_from_string(format_));
  if (!out_path_.empty()) {
    write_file_atomic(out_path_, doc);
    write_lock(fs::path(out_path_).parent_path());
  }
  out_ << doc;
}

void Cli::cmd_dist() {
  auto cfg = config();
  const auto& task = cfg.task(ds_.task);
  auto before = task_dataset(ds_.manifest, task, ds_.kind);
  auto after = task_dataset(ds2_.manifest, task, ds_.kind);
  auto d = label_distribution(before, after, task);
  auto doc = render_report(distribution_table(d, before.dataset_id),
                           report_format_from_string(format_));
  if (!out_path_.empty()) {
    write_file_atomic(out_path_, doc);
    write_lock(fs::path(out_path_).parent_path());
  }
  out_ << doc;
}

void Cli::cmd_cost() {
  CostParams p;
  p.disagreement_rate = rate_;
  p.video_duration_min = duration_min_;
  if (cost_table_) {
    ReportTable t;
    t.name = "cost";
    t.title = "Annotation time by dataset size";
    t.notes = {"meme disagreement rate " + format_2dp(rate_) + ", video length " +
               format_2dp(duration_min_) + " min"};
    t.columns = {"kind", "n", "hours"};
    for (std::size_t n : {200, 400, 600, 800}) {
      t.rows.push_back({{std::string("video"), static_cast<long long>(n),
                         one_decimal(estimate_annotation_hours(MediaKind::Video, n, p))}});
    }
    for (std::size_t n : {1000, 2000, 3000, 4000}) {
      t.rows.push_back({{std::string("meme"), static_cast<long long>(n),
                         one_decimal(estimate_annotation_hours(MediaKind::Meme, n, p))}});
    }
    out_ << render_text(t);
    return;
  }
  if (!ds_.manifest.empty()) {
    if (ds_.schema.empty()) throw ValidationError("--manifest needs --schema");
    auto cfg = config();
    auto ds = load_dataset(ds_.manifest, cfg.schema(ds_.schema), MediaKind::Video);
    out_ << one_decimal(estimate_video_hours(ds, p)) << " h\n";
    return;
  }
  if (cost_->count("--n") == 0) throw ValidationError("cost needs --n, --manifest or --table");
  out_ << one_decimal(estimate_annotation_hours(parse_kind(cost_kind_), n_, p)) << " h\n";
}

void Cli::cmd_report() {
  ReportTable t;
  for_each_jsonl(ds_.manifest, [&](const json& j, std::size_t) {
    if (j.value("kind", "") == "header") {
      t.name = j.value("report", "");
      t.title = j.value("title", "");
      t.notes = j.value("notes", std::vector<std::string>{});
      t.columns = j.value("columns", std::vector<std::string>{});
      return;
    }
    ReportRow row;
    for (const auto& c : t.columns) {
      const auto& v = j.contains(c) ? j.at(c) : json();
      if (v.is_number_integer()) {
        row.cells.push_back(v.get<long long>());
      } else if (v.is_number()) {
        row.cells.push_back(v.get<double>());
      } else if (v.is_string()) {
        row.cells.push_back(v.get<std::string>());
      } else {
        row.cells.push_back(v.is_null() ? std::string() : v.dump());
      }
    }
    row.highlight = j.value("selected", false);
    t.rows.push_back(std::move(row));
  });
  auto doc = render_report(t, report_format_from_string(format_));
  if (out_path_.empty()) {
    out_ << doc;
  } else {
    write_file_atomic(out_path_, doc);
  }
}

void Cli::cmd_replay() {
  SystemClock clock;
  Store store(store_dir_, clock);
  auto c = store.counts();
  out_ << "store " << store_dir_ << " replayed to seq " << store.seq() << ": " << c.total
       << " record(s), " << c.agreed << " agreed, " << c.queued << " queued, " << c.leased
       << " leased, " << c.resolved << " resolved, " << c.failed << " failed\n";
}

int Cli::cmd_rerun() {
  auto lock = json::parse(read_text_file(lock_path_));
  auto argv = lock.at("argv").get<std::vector<std::string>>();
  if (!argv.empty() && argv.front() == "rerun") throw ValidationError("lock records a rerun");
  const auto cwd = fs::current_path();
  fs::current_path(lock.at("cwd").get<std::string>());
  int code = 0;
  try {
    code = run_cli(argv, out_, err_);
  } catch (...) {
    fs::current_path(cwd);
    throw;
  }
  fs::current_path(cwd);
  return code;
}

int Cli::run() {
  build();
  std::vector<const char*> argv{"xma"};
  for (const auto& a : args_) argv.push_back(a.c_str());
  try {
    app_.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app_.exit(e, out_, err_);
    return code == 0 ? 0 : 1;
  }

  try {
    if (ingest_->parsed()) cmd_ingest();
    else if (remap_->parsed()) cmd_remap();
    else if (split_->parsed()) cmd_split();
    else if (sample_->parsed()) cmd_sample();
    else if (predict_->parsed()) cmd_predict();
    else if (sweep_->parsed()) cmd_sweep();
    else if (queue_stats_->parsed()) cmd_queue_stats();
    else if (queue_answer_->parsed()) cmd_queue_answer();
    else if (serve_->parsed()) cmd_serve();
    else if (finalize_->parsed()) cmd_finalize();
    else if (export_->parsed()) cmd_export();
    else if (eval_->parsed()) cmd_eval();
    else if (diff_->parsed()) cmd_diff();
    else if (dist_->parsed()) cmd_dist();
    else if (cost_->parsed()) cmd_cost();
    else if (report_->parsed()) cmd_report();
    else if (replay_->parsed()) cmd_replay();
    else if (rerun_->parsed()) return cmd_rerun();
  } catch (const ValidationError& e) {
    err_ << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err_ << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Cli cli(args, out, err);
  return cli.run();
}

}  // namespace xma
