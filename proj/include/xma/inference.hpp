#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "xma/core.hpp"
#include "xma/ingest.hpp"
#include "xma/jsonl.hpp"
#include "xma/visionprep.hpp"

namespace xma {

class RunLog;

enum class PromptMode { MultiImage, Description };
std::string_view to_string(PromptMode mode);
PromptMode prompt_mode_from_string(std::string_view s);

/// Instruction appended to every inference question. Answers are always
/// yes/no, whatever the task's vocabulary.
inline constexpr std::string_view kAnswerInstruction = "Answer yes or no.";
inline constexpr std::string_view kRetryInstruction =
    "Answer with exactly one word: yes or no.";

/// One demonstration (or, without a label, the query).
struct Demo {
  std::string item_id;
  MediaKind kind = MediaKind::Video;
  std::vector<FrameRef> vision;
  std::optional<std::string> description_text;
  std::string text;
  std::string question;
  std::optional<std::string> label_word;
};

struct PromptBundle {
  std::vector<Demo> demos;
  Demo query;
  TaskDef task;
  PromptMode mode = PromptMode::MultiImage;
};

struct EndpointConfig {
  std::string base_url = "http://127.0.0.1:8000";
  std::string model_name = "default";
  double timeout_s = 60.0;
  int max_retries = 3;
  double temperature = 0.0;
  int max_tokens = 16;
  int backoff_initial_ms = 200;
  int backoff_max_ms = 5000;
  std::string api_key;  // bearer token; the CLI reads XMA_API_KEY
};

void validate(const EndpointConfig& cfg);

struct AnswerMap {
  std::set<std::string> positive_words;
  std::set<std::string> negative_words;
  /// Words used when rendering a label as an answer.
  std::string positive_answer = "yes";
  std::string negative_answer = "no";

  /// {"yes", positive_word} / {"no", negative_word}.
  static AnswerMap for_task(const TaskDef& task);
  std::string render(BinaryLabel label) const;
};

void validate(const AnswerMap& answers);

struct RawResponse {
  std::string text;
  double latency_ms = 0.0;
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

enum class PredictionStatus { Ok, Unparseable, Failed };
std::string_view to_string(PredictionStatus status);

/// A model vote: a label, or the reason there is none.
struct Prediction {
  PredictionStatus status = PredictionStatus::Failed;
  BinaryLabel label = BinaryLabel::Negative;  // meaningful only when Ok

  static Prediction ok(BinaryLabel l) { return {PredictionStatus::Ok, l}; }
  static Prediction unparseable() { return {PredictionStatus::Unparseable, BinaryLabel::Negative}; }
  static Prediction failed() { return {PredictionStatus::Failed, BinaryLabel::Negative}; }

  bool has_label() const { return status == PredictionStatus::Ok; }
  /// Label word, or "UNPARSEABLE" / "PREDICTION_FAILED".
  std::string render(const TaskDef& task) const;
  static Prediction parse(std::string_view word, const TaskDef& task);

  friend bool operator==(const Prediction& a, const Prediction& b) {
    return a.status == b.status && (a.status != PredictionStatus::Ok || a.label == b.label);
  }
};

struct DemoOptions {
  bool balanced = true;
  /// Human-written visual descriptions keyed by item id (sidecar file).
  std::map<std::string, std::string> descriptions;
};

/// Picks n_shots demonstrations from a video training set whose labels are
/// task words. Balanced selection takes n/2 per class and alternates
/// POSITIVE, NEGATIVE, ... Each demo carries one sampled frame and, when
/// the sidecar has one, its description.
std::vector<Demo> select_demos(const Dataset& video_train, const TaskDef& task,
                               std::size_t n_shots, std::uint64_t seed,
                               const DemoOptions& options = {});

/// Builds the few-shot bundle. The query is the item's text and vision
/// (meme image; one sampled frame per video in MULTI_IMAGE mode, 16
/// uniform frames in DESCRIPTION mode) and never its label.
PromptBundle build_prompt(const MediaItem& item, const std::vector<Demo>& demos,
                          const TaskDef& task, PromptMode mode,
                          std::uint64_t seed = 0);

/// Throws IntegrityError if the query carries a label.
void check_no_label_leak(const PromptBundle& bundle);

/// Text/image part sequence of the prompt with images as file references.
/// This is what the prompt hash covers.
ordered_json canonical_prompt(const PromptBundle& bundle,
                              std::string_view extra_instruction = {});

/// Chat-completions request body with images inlined as base64 data URLs.
ordered_json to_chat_request(const PromptBundle& bundle, const EndpointConfig& cfg,
                             std::string_view extra_instruction = {});

std::string prompt_hash(const PromptBundle& bundle, std::string_view model_id,
                        std::string_view extra_instruction = {});

/// First token wins; otherwise the earliest whole-word match in the text;
/// otherwise UNPARSEABLE.
Prediction parse_label(std::string_view response, const AnswerMap& answers);

/// POSITIVE iff the text contains a lexicon term on word boundaries,
/// case-insensitively. Multi-word terms match as contiguous words.
BinaryLabel stub_predict_text(std::string_view text, const std::set<std::string>& lexicon);
BinaryLabel stub_predict(const MediaItem& item, const std::set<std::string>& lexicon);

/// Reads a lexicon file: one term per line, '#' comments.
std::set<std::string> load_lexicon(const std::filesystem::path& path);

/// Line-delimited `{id, description}` sidecar.
std::map<std::string, std::string> load_descriptions(const std::filesystem::path& path);

class ChatModel {
 public:
  virtual ~ChatModel() = default;
  /// Throws EndpointError subclasses once retries are exhausted.
  virtual RawResponse complete(const PromptBundle& bundle,
                               std::string_view extra_instruction) = 0;
  virtual std::string model_id() const = 0;
};

/// HTTP client for `{base_url}/v1/chat/completions`.
class EndpointModel : public ChatModel {
 public:
  explicit EndpointModel(EndpointConfig cfg);
  RawResponse complete(const PromptBundle& bundle,
                       std::string_view extra_instruction) override;
  std::string model_id() const override { return cfg_.model_name; }
  std::uint64_t calls() const { return calls_.load(); }

 private:
  RawResponse post_once(const std::string& body);

  EndpointConfig cfg_;
  std::string host_;
  std::string path_prefix_;
  std::atomic<std::uint64_t> calls_{0};
};

/// Deterministic offline model: answers yes iff the query text hits the
/// lexicon. Items in `fail_ids` raise a connectivity error; items in
/// `garble_ids` get an unparseable reply.
class StubModel : public ChatModel {
 public:
  explicit StubModel(std::set<std::string> lexicon) : lexicon_(std::move(lexicon)) {}
  RawResponse complete(const PromptBundle& bundle,
                       std::string_view extra_instruction) override;
  std::string model_id() const override { return "stub-lexicon"; }
  std::uint64_t calls() const { return calls_.load(); }

  std::set<std::string> fail_ids;
  std::set<std::string> garble_ids;

 private:
  std::set<std::string> lexicon_;
  std::atomic<std::uint64_t> calls_{0};
};

/// One request to an endpoint, with the configured retry policy.
RawResponse predict(const PromptBundle& bundle, const EndpointConfig& endpoint);

struct PredictJob {
  std::string item_id;
  PromptBundle bundle;
};

struct ItemPrediction {
  std::string item_id;
  Prediction prediction;
  std::string response_text;
  bool from_cache = false;
};

struct BatchOptions {
  std::size_t concurrency = 4;
  bool use_cache = true;
};

/// Runs every job with bounded concurrency. Log records are committed in
/// job order regardless of completion order. Cached responses (same prompt
/// hash already logged) are reused without calling the model. Unparseable
/// answers are retried once with kRetryInstruction; endpoint failures end
/// as PREDICTION_FAILED.
std::vector<ItemPrediction> predict_all(const std::vector<PredictJob>& jobs,
                                        ChatModel& model, RunLog& log,
                                        const AnswerMap& answers,
                                        const BatchOptions& options = {});

}  // namespace xma
