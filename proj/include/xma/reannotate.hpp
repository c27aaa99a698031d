#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "xma/core.hpp"
#include "xma/inference.hpp"
#include "xma/ingest.hpp"
#include "xma/jsonl.hpp"

namespace xma {

enum class RecordState { Agreed, Queued, Leased, Resolved, Failed };
std::string_view to_string(RecordState state);
RecordState record_state_from_string(std::string_view s);

struct VoteOutcome {
  std::string item_id;
  std::optional<BinaryLabel> final_label;  // nullopt = PENDING
  RecordState state = RecordState::Queued;

  bool needs_human() const { return !final_label; }
};

/// Majority vote over (dataset label, model vote, human label).
///  - model agrees with the dataset: final = dataset label, no human needed
///  - genuine conflict: pending until a human votes, then 2-of-3 (= human)
///  - model failed or unparseable: routed to a human; final = human
VoteOutcome resolve_vote(BinaryLabel original, const Prediction& model,
                         std::optional<BinaryLabel> human);

struct VoteRecord {
  std::string item_id;
  BinaryLabel original = BinaryLabel::Negative;
  Prediction model;
  std::optional<BinaryLabel> human;
  std::optional<BinaryLabel> final_label;
  RecordState state = RecordState::Queued;
  std::optional<std::string> annotator_id;
  std::optional<double> elapsed_s;
  // Annotator payload.
  std::string text;
  std::string image;
};

/// What an annotator sees. Candidate labels are always listed as
/// [positive_word, negative_word], never attributed to a source.
struct LeasedTask {
  std::string item_id;
  std::string lease_token;
  std::int64_t expires_at_ms = 0;
  std::string text;
  std::string image;
  std::string definition_text;
  std::vector<std::string> candidate_labels;
};

struct AnnotationEvent {
  std::string item_id;
  std::string annotator_id;
  BinaryLabel label = BinaryLabel::Negative;
  double elapsed_s = 0.0;
  std::int64_t submitted_at_ms = 0;  // 0: stamped by the store
  std::string lease_token;
};

struct QueueStats {
  std::size_t agreed = 0;
  std::size_t queued = 0;  // genuine conflicts
  std::size_t failed = 0;  // model failed or unparseable
  std::size_t added = 0;   // newly recorded by this call
};

struct StateCounts {
  std::size_t total = 0;
  std::size_t agreed = 0;
  std::size_t queued = 0;
  std::size_t leased = 0;
  std::size_t resolved = 0;
  std::size_t failed = 0;
  /// Records whose model vote is a label that differs from the dataset's.
  std::size_t disagreements = 0;
  /// Records whose model vote is missing (failed or unparseable).
  std::size_t model_failures = 0;
  /// Awaiting a human: queued + failed + leased.
  std::size_t awaiting_human() const { return queued + failed + leased; }
};

/// Milliseconds since the epoch. Tests drive a ManualClock.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::int64_t now_ms() const = 0;
};

class SystemClock : public Clock {
 public:
  std::int64_t now_ms() const override;
};

class ManualClock : public Clock {
 public:
  explicit ManualClock(std::int64_t start_ms = 1'700'000'000'000) : now_(start_ms) {}
  std::int64_t now_ms() const override { return now_.load(); }
  void advance_ms(std::int64_t ms) { now_ += ms; }

 private:
  std::atomic<std::int64_t> now_;
};

/// Durable vote store: `events.log` (append-only, one JSON record per
/// line), `state.snap` (full table at some seq), `meta.json` (the task).
/// All transitions go through one writer lock; every event is on disk
/// before the call returns.
class Store {
 public:
  struct Options {
    /// Write a snapshot after this many events; 0 disables periodic
    /// snapshots.
    std::size_t snapshot_every = 0;
    bool fsync = true;
  };

  /// Creates the directory and meta.json when needed. Opening an existing
  /// store for a different task is a ConfigError.
  static void initialize(const std::filesystem::path& dir, const TaskDef& task);

  /// Replays snapshot + log. Throws StoreCorruptError naming the bad line.
  Store(const std::filesystem::path& dir, const Clock& clock, Options options);
  Store(const std::filesystem::path& dir, const Clock& clock)
      : Store(dir, clock, Options{}) {}
  ~Store();
  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  const TaskDef& task() const { return task_; }
  const std::filesystem::path& dir() const { return dir_; }

  /// `dataset` labels are task words. Every item needs a prediction.
  /// Already-recorded items are left untouched.
  QueueStats enqueue_disagreements(const Dataset& dataset,
                                   const std::map<std::string, Prediction>& predictions);

  /// Oldest pending item (QUEUED or FAILED, ingest order) or nullopt.
  std::optional<LeasedTask> lease_next(const std::string& annotator_id, double ttl_s);

  VoteOutcome submit_annotation(const AnnotationEvent& event);

  /// Returns expired leases to the queue; called implicitly by lease_next.
  std::size_t expire_due();

  std::vector<VoteRecord> records() const;
  std::optional<VoteRecord> record(const std::string& item_id) const;
  StateCounts counts() const;
  std::uint64_t seq() const;

  void write_snapshot();

 private:
  struct Lease {
    std::string token;
    std::string annotator_id;
    std::int64_t expires_at_ms = 0;
    RecordState prior = RecordState::Queued;
  };
  enum class TokenState { Active, Expired, Used };
  struct TokenInfo {
    std::string item_id;
    TokenState state = TokenState::Active;
  };

  void load_snapshot();
  void replay_log();
  void append(ordered_json event);
  void apply(const json& event);
  std::size_t expire_due_locked();
  std::string new_token();
  json snapshot_json() const;

  std::filesystem::path dir_;
  const Clock& clock_;
  Options options_;
  TaskDef task_;

  mutable std::shared_mutex mu_;
  std::unique_ptr<AppendFile> log_;
  std::uint64_t seq_ = 0;
  std::size_t since_snapshot_ = 0;
  std::vector<VoteRecord> records_;
  std::map<std::string, std::size_t> index_;
  std::set<std::size_t> pending_;
  std::map<std::size_t, Lease> leases_;
  std::map<std::string, TokenInfo> tokens_;
  std::uint64_t token_counter_ = 0;
  std::uint64_t token_salt_ = 0;
};

/// Dataset with labels replaced by final labels and provenance AGREED or
/// RESOLVED. Throws IncompleteQueueError listing items without a final
/// label.
Dataset finalize_dataset(const Store& store, const Dataset& dataset);

/// Reads `{item_id, label}` predictions as written by the predict stage.
std::map<std::string, Prediction> load_predictions(const std::filesystem::path& path,
                                                   const TaskDef& task);
void save_predictions(const std::vector<ItemPrediction>& predictions,
                      const TaskDef& task, const std::filesystem::path& path);

}  // namespace xma
