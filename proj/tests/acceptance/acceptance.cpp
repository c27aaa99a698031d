// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "fixtures.hpp"
#include "support.hpp"
#include "xma/cli.hpp"
#include "xma/core.hpp"
#include "xma/evaluate.hpp"
#include "xma/export.hpp"
#include "xma/ingest.hpp"
#include "xma/reannotate.hpp"
#include "xma/visionprep.hpp"

using namespace xma;
namespace fs = std::filesystem;
using test::TempDir;

namespace {

/// Collects failed expectations for one criterion.
struct Checks {
  std::vector<std::string> failures;
  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
};

struct Criterion {
  int number;
  std::string name;
  double limit_s;  // 0 = no runtime bound
  std::function<void(Checks&)> body;
};

constexpr BinaryLabel P = BinaryLabel::Positive;
constexpr BinaryLabel N = BinaryLabel::Negative;

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

// 1 ---------------------------------------------------------------------------

void cost_model(Checks& c) {
  struct Row {
    MediaKind kind;
    std::size_t n;
    double hours;
  };
  const Row rows[] = {{MediaKind::Video, 200, 13.3},  {MediaKind::Video, 400, 26.7},
                      {MediaKind::Video, 600, 40.0},  {MediaKind::Video, 800, 53.3},
                      {MediaKind::Meme, 1000, 3.5},   {MediaKind::Meme, 2000, 7.0},
                      {MediaKind::Meme, 3000, 10.5},  {MediaKind::Meme, 4000, 14.0}};
  CostParams p;
  p.disagreement_rate = 0.42;
  p.video_duration_min = 1.0;
  for (const auto& r : rows) {
    const double got = estimate_annotation_hours(r.kind, r.n, p);
    c.expect(std::abs(got - r.hours) <= 0.05,
             std::string(to_string(r.kind)) + " n=" + std::to_string(r.n) + ": " + fmt(got) +
                 " h, want " + fmt(r.hours, 1));
  }
}

// 2 ---------------------------------------------------------------------------

void vote_truth_table(Checks& c) {
  const std::optional<BinaryLabel> humans[] = {P, N, std::nullopt};
  for (BinaryLabel original : {P, N}) {
    for (int m = 0; m < 3; ++m) {
      const Prediction model = m == 0 ? Prediction::ok(P)
                               : m == 1 ? Prediction::ok(N)
                                        : Prediction::failed();
      for (const auto& human : humans) {
        // Contract: agreement settles the item; a conflict or a missing
        // model vote waits for the human, whose vote then decides.
        std::optional<BinaryLabel> want;
        bool want_human = false;
        if (model.has_label() && model.label == original) {
          want = original;
        } else {
          want_human = true;
          want = human;
        }
        if (want && human && model.has_label()) {
          const int pos = (original == P) + (model.label == P) + (*human == P);
          c.expect(*want == (pos >= 2 ? P : N), "majority mismatch in oracle");
        }
        const auto got = resolve_vote(original, model, human);
        std::ostringstream what;
        what << "(" << to_string(original) << ", "
             << (model.has_label() ? std::string(to_string(model.label)) : "FAILED") << ", "
             << (human ? std::string(to_string(*human)) : "ABSENT") << ")";
        c.expect(got.final_label == want, what.str() + ": wrong final label");
        if (!human) {
          c.expect(got.needs_human() == want_human, what.str() + ": wrong routing");
        }
        if (human && model.has_label() && model.label != original) {
          c.expect(got.final_label == human, what.str() + ": conflict not decided by human");
        }
        const auto want_state = !want ? (model.has_label() ? RecordState::Queued
                                                           : RecordState::Failed)
                                : human ? RecordState::Resolved
                                        : RecordState::Agreed;
        c.expect(got.state == want_state, what.str() + ": state " +
                                              std::string(to_string(got.state)));
      }
    }
  }
}

// 3 ---------------------------------------------------------------------------

void metrics_oracle(Checks& c) {
  const auto fixed = compute_metrics(std::vector<BinaryLabel>{P, P, N, N},
                                     std::vector<BinaryLabel>{P, N, N, N});
  c.expect(std::abs(fixed.macro_f1 - 0.7333) <= 1e-4,
           "fixed example macro-F1 " + fmt(fixed.macro_f1, 6));

  std::mt19937_64 gen(424242);
  double worst = 0;
  for (int round = 0; round < 1000; ++round) {
    const std::size_t n = 1 + gen() % 12;
    std::vector<int> gt(n), pred(n);
    std::vector<BinaryLabel> g;
    std::vector<Prediction> p;
    for (std::size_t i = 0; i < n; ++i) {
      gt[i] = static_cast<int>(gen() % 2);
      const int r = static_cast<int>(gen() % 6);
      pred[i] = r < 5 ? r % 2 : -1;
      g.push_back(gt[i] ? P : N);
      p.push_back(pred[i] < 0 ? Prediction::failed() : Prediction::ok(pred[i] ? P : N));
    }
    worst = std::max(worst, test::max_metric_gap(compute_metrics(g, p),
                                                 test::brute_force_metrics(gt, pred)));
  }
  c.expect(worst <= 1e-9, "largest field gap " + std::to_string(worst));
}

// 4 ---------------------------------------------------------------------------

void optimal_n(Checks& c) {
  for (const auto& f : test::few_shot_fixtures()) {
    const auto n = select_optimal_shots(f.report());
    c.expect(n == f.expected_n, f.model + "/" + f.dataset + ": N=" + std::to_string(n) +
                                    ", want " + std::to_string(f.expected_n));
  }
}

// 5 ---------------------------------------------------------------------------

void harmonization(Checks& c) {
  std::size_t pos = 0, neg = 0;
  const std::pair<const char*, int> reference[] = {
      {"hateful", 82}, {"offensive", 256}, {"normal", 662}};
  for (const auto& [label, count] : reference) {
    for (int i = 0; i < count; ++i) ++(harmonize_mhc(label) == P ? pos : neg);
  }
  c.expect(pos == 338 && neg == 662,
           std::to_string(pos) + " positive / " + std::to_string(neg) + " negative");
}

// 6 ---------------------------------------------------------------------------

// Stub lexicon against the remapped gold labels of the 40 mini memes,
// enumerated by hand from memes.mft and lexicon.txt.
const std::set<std::string> kConflictIds = {"meme_004", "meme_008", "meme_014", "meme_016",
                                            "meme_021", "meme_030", "meme_033", "meme_040"};
// Listed in stub_fail_ids.txt; routed to a human without a model vote.
const std::set<std::string> kFailedIds = {"meme_005", "meme_017"};
// Items whose scripted answer overturns the remapped label.
const std::set<std::string> kFlippedIds = {"meme_021", "meme_030", "meme_033"};

std::string data(const std::string& rel) { return (test::data_dir() / rel).string(); }

int cli(const std::vector<std::string>& args, std::string* out = nullptr) {
  std::ostringstream o, e;
  const int code = run_cli(args, o, e);
  if (out) *out = o.str();
  if (code != 0) std::cerr << "  xma " << args.front() << ": " << e.str();
  return code;
}

/// Full pipeline rooted at `root`; empty string on success.
std::string run_pipeline(const fs::path& root, std::string* predict_out) {
  auto p = [&](const std::string& rel) { return (root / rel).string(); };
  const std::vector<std::vector<std::string>> steps = {
      {"remap", "--manifest", data("memes.mft"), "--schema", "fhm", "--task", "mhc", "--out",
       p("memes_mhc.mft")},
      {"remap", "--manifest", data("videos.mft"), "--kind", "video", "--schema", "mhc_raw",
       "--task", "mhc", "--out", p("videos_mhc.mft")},
      {"split", "--manifest", p("videos_mhc.mft"), "--kind", "video", "--task", "mhc", "--seed",
       "7", "--out-dir", p("split")},
      {"predict", "--dataset", p("memes_mhc.mft"), "--task", "mhc", "--shots", "2",
       "--video-train", p("split/videos_mhc_train.mft"), "--seed", "5", "--lexicon",
       data("lexicon.txt"), "--stub-fail-ids", data("stub_fail_ids.txt"), "--out-dir",
       p("predict"), "--store", p("store")},
      {"queue", "answer", "--store", p("store"), "--answers", data("answers.jsonl")},
      {"finalize", "--dataset", p("memes_mhc.mft"), "--store", p("store"), "--out",
       p("memes_final.mft")},
      {"export", "--strategy", "all", "--task", "mhc", "--video-train",
       p("split/videos_mhc_train.mft"), "--memes", p("memes_mhc.mft"), "--final",
       p("memes_final.mft"), "--eval", p("split/videos_mhc_test.mft"), "--shots", "2", "--seed",
       "5", "--shuffle-seed", "11", "--frame-seed", "13", "--aug-seed", "17", "--out-dir",
       p("export")},
  };
  for (const auto& step : steps) {
    std::string out;
    if (cli(step, &out) != 0) return "step '" + step.front() + "' failed";
    if (step.front() == "predict") *predict_out = out;
  }
  return {};
}

/// Every output file below `root` except run locks, run logs and the store,
/// which carry wall-clock times and absolute paths.
std::map<std::string, std::string> manifest_files(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), root).generic_string();
    const auto name = e.path().filename().string();
    if (name == "run.lock" || name == "runlog.jsonl" || rel.rfind("store/", 0) == 0) continue;
    files[rel] = read_text_file(e.path());
  }
  return files;
}

/// (item_id, target) per training record, in manifest order.
std::vector<std::pair<std::string, std::string>> train_records(const fs::path& manifest) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& j : read_jsonl(manifest)) {
    out.emplace_back(j.at("meta").at("item_id").get<std::string>(),
                     j.at("messages").back().at("content").get<std::string>());
  }
  return out;
}

void end_to_end(Checks& c) {
  TempDir a("accept_run_a"), b("accept_run_b");
  std::string predict_a, predict_b;
  const auto err_a = run_pipeline(a.path(), &predict_a);
  const auto err_b = run_pipeline(b.path(), &predict_b);
  c.expect(err_a.empty(), "run A: " + err_a);
  c.expect(err_b.empty(), "run B: " + err_b);
  if (!err_a.empty() || !err_b.empty()) return;

  const auto files_a = manifest_files(a.path());
  const auto files_b = manifest_files(b.path());
  c.expect(files_a.size() > 20, "only " + std::to_string(files_a.size()) + " output files");
  c.expect(files_a == files_b, "outputs of the two runs differ");
  for (const auto* name : {"export/OM_FT/train_OM_FT.mft", "export/RM_FT/train_RM_FT.mft",
                           "export/VID_FT/train_VID_FT.mft",
                           "export/VID_RM_FT/train_VID_RM_FT.mft", "memes_final.mft"}) {
    c.expect(files_a.count(name) == 1, std::string("missing ") + name);
  }

  // Queue contents against the enumeration.
  c.expect(predict_a.find("queue: 30 agreed, 8 conflicts, 2 model failures") != std::string::npos,
           "predict reported: " + predict_a);
  ManualClock clock;
  Store store(a / "store", clock);
  std::set<std::string> resolved;
  for (const auto& r : store.records()) {
    const bool conflict = r.model.has_label() && r.model.label != r.original;
    const bool failed = !r.model.has_label();
    c.expect(conflict == (kConflictIds.count(r.item_id) == 1), r.item_id + ": conflict flag");
    c.expect(failed == (kFailedIds.count(r.item_id) == 1), r.item_id + ": failure flag");
    if (r.state == RecordState::Resolved) resolved.insert(r.item_id);
  }
  std::set<std::string> routed = kConflictIds;
  routed.insert(kFailedIds.begin(), kFailedIds.end());
  c.expect(resolved == routed, "resolved items are not the enumerated queue");

  // OM_FT and RM_FT: same items, labels differ only where a human overturned.
  const auto om = train_records(a / "export/OM_FT/train_OM_FT.mft");
  const auto rm = train_records(a / "export/RM_FT/train_RM_FT.mft");
  std::map<std::string, std::string> om_label(om.begin(), om.end());
  std::map<std::string, std::string> rm_label(rm.begin(), rm.end());
  c.expect(om.size() == 40 && rm.size() == 40, "meme manifests should hold 40 records");
  std::set<std::string> differing, om_ids, rm_ids;
  for (const auto& [id, label] : om_label) {
    om_ids.insert(id);
    if (rm_label.count(id) && rm_label[id] != label) differing.insert(id);
  }
  for (const auto& [id, label] : rm_label) rm_ids.insert(id);
  c.expect(om_ids == rm_ids, "OM_FT and RM_FT cover different items");
  for (const auto& id : differing) {
    c.expect(resolved.count(id) == 1, id + " differs but was not resolved by a human");
  }
  c.expect(differing == kFlippedIds, std::to_string(differing.size()) + " differing labels");

  // VID_RM_FT is the multiset union of VID_FT and RM_FT.
  auto vid = train_records(a / "export/VID_FT/train_VID_FT.mft");
  auto both = train_records(a / "export/VID_RM_FT/train_VID_RM_FT.mft");
  std::multiset<std::pair<std::string, std::string>> want(vid.begin(), vid.end());
  want.insert(rm.begin(), rm.end());
  std::multiset<std::pair<std::string, std::string>> got(both.begin(), both.end());
  c.expect(got == want, "VID_RM_FT is not VID_FT + RM_FT");
  c.expect(vid.size() == 16, "VID_FT holds " + std::to_string(vid.size()) + " records");
}

// 7 ---------------------------------------------------------------------------

MediaItem synthetic_video(int frames) {
  MediaItem v;
  v.item_id = "v" + std::to_string(frames);
  v.kind = MediaKind::Video;
  v.frames_dir = "frames";
  v.frame_count = frames;
  for (int i = 0; i < frames; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frames/%04d.png", i);
    v.frames.emplace_back(name);
  }
  return v;
}

std::vector<int> indices_of(const std::vector<FrameRef>& refs) {
  std::vector<int> out;
  for (const auto& r : refs) out.push_back(r.frame_index);
  return out;
}

void vision_prep(Checks& c) {
  std::vector<int> identity(16), evens(16);
  for (int i = 0; i < 16; ++i) {
    identity[i] = i;
    evens[i] = 2 * i;
  }
  c.expect(indices_of(sample_k_frames(synthetic_video(16), 16)) == identity, "F=16, k=16");
  c.expect(indices_of(sample_k_frames(synthetic_video(31), 16)) == evens, "F=31, k=16");

  const auto source = test::gradient_image(96, 64);
  AugConfig cfg;
  cfg.k = 16;
  cfg.seed = 1;
  const auto first = augment_to_pseudo_video(source, "meme_x", cfg);
  const auto again = augment_to_pseudo_video(source, "meme_x", cfg);
  cfg.seed = 2;
  const auto other = augment_to_pseudo_video(source, "meme_x", cfg);
  c.expect(first.size() == 16, std::to_string(first.size()) + " frames");
  bool uniform = true;
  for (const auto& f : first) {
    uniform = uniform && f.width == first[0].width && f.height == first[0].height &&
              f.channels == first[0].channels;
  }
  c.expect(uniform, "frame dimensions vary");
  c.expect(first == again, "same seed gives different frames");
  c.expect(first != other, "different seeds give the same frames");

  const auto still = augment_to_pseudo_video(source, "meme_x", AugConfig::identity(16, 9));
  c.expect(still.size() == 16, "identity config frame count");
  bool same = !still.empty();
  for (const auto& f : still) same = same && f == still[0];
  c.expect(same, "zero-magnitude frames differ");
}

// 8 ---------------------------------------------------------------------------

std::map<std::string, BinaryLabel> scripted_answers(const TaskDef& task) {
  std::map<std::string, BinaryLabel> out;
  for (const auto& j : read_jsonl(test::data_dir() / "answers.jsonl")) {
    const auto word = j.at("label").get<std::string>();
    auto label = binary_label_from_string(word);
    if (!label) label = task.parse_word(word);
    out[j.at("item_id").get<std::string>()] = *label;
  }
  return out;
}

/// Re-enqueue, expire stale leases, answer everything pending, finalize.
std::map<std::string, std::string> complete(const fs::path& store_dir, const Dataset& memes,
                                            const std::map<std::string, Prediction>& preds,
                                            const std::map<std::string, BinaryLabel>& answers) {
  // Well past any lease the original run could have granted.
  ManualClock clock(std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::system_clock::now().time_since_epoch())
                        .count() +
                    86'400'000);
  Store store(store_dir, clock, Store::Options{0, false});
  store.expire_due();
  store.enqueue_disagreements(memes, preds);
  while (auto t = store.lease_next("recovery", 60)) {
    store.submit_annotation(AnnotationEvent{t->item_id, "recovery", answers.at(t->item_id), 1.0,
                                            clock.now_ms(), t->lease_token});
  }
  std::map<std::string, std::string> labels;
  for (const auto& item : finalize_dataset(store, memes).items) {
    labels[item.item_id] = item.original_label;
  }
  return labels;
}

void crash_safety(Checks& c) {
  TempDir dir("accept_crash");
  std::string predict_out;
  auto err = run_pipeline(dir.path(), &predict_out);
  c.expect(err.empty(), err);
  if (!err.empty()) return;

  const auto& task = test::mhc_task();
  const auto memes =
      load_dataset(dir / "memes_mhc.mft", LabelSchema::for_task(task), MediaKind::Meme);
  const auto preds = load_predictions(dir / "predict/predictions.jsonl", task);
  const auto answers = scripted_answers(task);
  std::map<std::string, std::string> reference;
  for (const auto& item : load_dataset(dir / "memes_final.mft", LabelSchema::for_task(task),
                                       MediaKind::Meme)
                              .items) {
    reference[item.item_id] = item.original_label;
  }

  const auto log = read_text_file(dir / "store/events.log");
  const auto lines = test::split_lines(log);
  c.expect(lines.size() == 60, std::to_string(lines.size()) + " log records");
  std::size_t checked = 0;
  for (std::size_t k = 0; k <= lines.size(); ++k) {
    const auto trial = dir / ("trial_" + std::to_string(k));
    fs::create_directories(trial);
    fs::copy_file(dir / "store/meta.json", trial / "meta.json");
    std::string prefix;
    for (std::size_t i = 0; i < k; ++i) prefix += lines[i] + "\n";
    test::write_text(trial / "events.log", prefix);
    try {
      auto labels = complete(trial, memes, preds, answers);
      c.expect(labels == reference, "prefix of " + std::to_string(k) + " record(s): labels differ");
    } catch (const std::exception& e) {
      c.expect(false, "prefix of " + std::to_string(k) + " record(s): " + e.what());
    }
    fs::remove_all(trial);
    ++checked;
  }
  c.expect(checked == lines.size() + 1, "not every boundary was tried");
}

// 9 ---------------------------------------------------------------------------

Dataset hundred_items(std::map<std::string, Prediction>& preds) {
  const auto& task = test::mhc_task();
  Dataset ds;
  ds.dataset_id = "hammer";
  ds.schema = LabelSchema::for_task(task);
  for (int i = 0; i < 100; ++i) {
    MediaItem m;
    char id[16];
    std::snprintf(id, sizeof(id), "h_%03d", i);
    m.item_id = id;
    m.text = "item " + std::to_string(i);
    const auto label = i % 2 ? P : N;
    m.original_label = task.render(label);
    ds.items.push_back(m);
    preds[id] = Prediction::ok(opposite(label));
  }
  return ds;
}

/// 32 threads leasing until the queue is empty; returns the granted ids.
std::vector<std::string> lease_all(Store& store, const std::string& tag, double ttl_s) {
  std::mutex mu;
  std::vector<std::string> granted;
  std::vector<std::thread> pool;
  for (int t = 0; t < 32; ++t) {
    pool.emplace_back([&, t] {
      while (auto task = store.lease_next(tag + std::to_string(t), ttl_s)) {
        std::lock_guard lock(mu);
        granted.push_back(task->item_id);
      }
    });
  }
  for (auto& th : pool) th.join();
  return granted;
}

void hammer(Checks& c) {
  TempDir dir("accept_hammer");
  Store::initialize(dir.path(), test::mhc_task());
  ManualClock clock;
  Store store(dir.path(), clock, Store::Options{0, false});
  std::map<std::string, Prediction> preds;
  const auto ds = hundred_items(preds);
  store.enqueue_disagreements(ds, preds);

  const auto first = lease_all(store, "a", 30);
  const std::set<std::string> distinct(first.begin(), first.end());
  c.expect(first.size() == 100, std::to_string(first.size()) + " leases granted");
  c.expect(distinct.size() == 100, std::to_string(first.size() - distinct.size()) +
                                       " duplicate leases");

  clock.advance_ms(30'000);
  c.expect(store.expire_due() == 100, "not every lease expired");
  const auto second = lease_all(store, "b", 30);
  std::map<std::string, int> times;
  for (const auto& id : second) ++times[id];
  bool once = times.size() == 100;
  for (const auto& [id, n] : times) once = once && n == 1;
  c.expect(once, "expired leases were not re-granted exactly once (" +
                     std::to_string(second.size()) + " grants)");
  c.expect(!store.lease_next("late", 30), "queue should be empty while leases are live");
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "cost model over the dataset-size sweep", 1.0, cost_model},
      {2, "vote resolver truth table", 1.0, vote_truth_table},
      {3, "metrics match the brute-force oracle", 5.0, metrics_oracle},
      {4, "optimal N on the few-shot sweeps", 0.0, optimal_n},
      {5, "MHC harmonization counts", 0.0, harmonization},
      {6, "end-to-end determinism on the mini corpus", 30.0, end_to_end},
      {7, "vision-prep properties", 10.0, vision_prep},
      {8, "crash safety at every log boundary", 0.0, crash_safety},
      {9, "concurrent lease hammer", 0.0, hammer},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    Checks checks;
    const auto start = std::chrono::steady_clock::now();
    try {
      cr.body(checks);
    } catch (const std::exception& e) {
      checks.expect(false, std::string("exception: ") + e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (cr.limit_s > 0 && secs >= cr.limit_s) {
      checks.expect(false, "took " + fmt(secs, 2) + " s, limit " + fmt(cr.limit_s, 0) + " s");
    }
    const bool pass = checks.failures.empty();
    failed += !pass;
    std::cout << "criterion " << cr.number << ": " << (pass ? "PASS" : "FAIL") << "  " << cr.name
              << " (" << fmt(secs, 3) << " s)\n";
    for (const auto& f : checks.failures) std::cout << "    " << f << "\n";
  }
  std::cout << (failed ? std::to_string(failed) + " criterion(s) failed" : "all criteria passed")
            << "\n";
  return failed ? 1 : 0;
}
