#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "xma/core.hpp"
#include "xma/inference.hpp"
#include "xma/ingest.hpp"
#include "xma/jsonl.hpp"
#include "xma/visionprep.hpp"

namespace xma {

// ---- annotation cost ------------------------------------------------------

struct CostParams {
  double meme_minutes_per_item = 0.5;
  double video_minutes_per_source_minute = 2.0;
  double video_annotations_per_item = 2.0;
  double video_duration_min = 1.0;
  /// Share of memes that reach a human annotator.
  double disagreement_rate = 1.0;
};

void validate(const CostParams& params);

/// VIDEO: n * duration * minutes_per_source_minute * annotations / 60.
/// MEME:  n * disagreement_rate * meme_minutes_per_item / 60.
double estimate_annotation_hours(MediaKind kind, std::size_t n, const CostParams& params);

/// Video hours using each item's own duration, falling back to
/// `params.video_duration_min` when an item has none.
double estimate_video_hours(const Dataset& videos, const CostParams& params);

// ---- training examples ----------------------------------------------------

enum class Profile { ImageModel, VideoModel };
std::string_view to_string(Profile profile);
Profile profile_from_string(std::string_view s);

enum class StrategyId { NoFt, VidFt, OmFt, RmFt, VidRmFt };
std::string_view to_string(StrategyId id);
StrategyId strategy_from_string(std::string_view s);
std::vector<StrategyId> all_strategies();

enum class LabelSource { None, VideoGroundTruth, OriginalRemapped, FinalVoted };
std::string_view to_string(LabelSource source);

struct Strategy {
  StrategyId id = StrategyId::NoFt;
  bool uses_videos = false;
  bool uses_memes = false;
  LabelSource meme_labels = LabelSource::None;

  static Strategy get(StrategyId id);
  bool trains() const { return uses_videos || uses_memes; }
};

struct TrainingExample {
  std::string item_id;
  MediaKind kind = MediaKind::Meme;
  std::string source;  // dataset id
  std::string input_text;
  std::vector<FrameRef> vision;
  std::string target_word;

  std::vector<std::string> input_words() const;
  /// input_words() followed by the target word.
  std::vector<std::string> target_sequence() const;
};

/// Question used in training records: the task question followed by an
/// instruction naming both vocabulary words.
std::string training_question(const TaskDef& task, MediaKind kind);

/// Everything build_training_example needs besides the item.
struct VisionContext {
  std::uint64_t frame_seed = 0;
  AugConfig aug;
  /// Pseudo-video frames land in `<frames_root>/<item_id>/`.
  std::filesystem::path frames_root;

  /// Pseudo-video frames already written, keyed by item id.
  std::map<std::string, std::vector<std::filesystem::path>> written;
  std::mutex mu;
};

/// VIDEO_MODEL: memes become a 16-frame pseudo-video, videos contribute 16
/// uniform frames. IMAGE_MODEL: memes use their image, videos one sampled
/// frame. Errors from vision preparation carry the item id.
TrainingExample build_training_example(const MediaItem& item, const std::string& source,
                                       const TaskDef& task, BinaryLabel label,
                                       Profile profile, VisionContext& vision);

// ---- manifests ------------------------------------------------------------

struct ExportSources {
  const Dataset* video_train = nullptr;    // labels are task words
  const Dataset* meme_original = nullptr;  // sampled memes, remapped labels
  const Dataset* meme_final = nullptr;     // output of finalize_dataset
  std::vector<const Dataset*> eval;        // video test sets
};

struct ExportConfig {
  std::filesystem::path out_dir;
  TaskDef task;
  Profile profile = Profile::VideoModel;
  std::uint64_t shuffle_seed = 0;
  std::uint64_t frame_seed = 0;
  AugConfig aug;
  /// NO_FT evaluation prompts.
  std::vector<Demo> demos;
  std::size_t optimal_n = 0;
  PromptMode mode = PromptMode::MultiImage;
};

struct ExportResult {
  StrategyId strategy = StrategyId::NoFt;
  std::filesystem::path train_manifest;  // empty for NO_FT
  std::vector<std::filesystem::path> eval_manifests;
  std::filesystem::path meta;
  std::size_t train_examples = 0;
  /// Item ids of the training records, in manifest order.
  std::vector<std::string> train_ids;
};

/// Builds the examples a strategy trains on, in manifest order.
std::vector<TrainingExample> strategy_examples(StrategyId id, const ExportSources& sources,
                                               const ExportConfig& config,
                                               VisionContext& vision);

/// Writes `<out>/<strategy>/train_<strategy>.mft`, one
/// `eval_<dataset>.mft` per evaluation set, and `meta.toml`. Shared frames
/// go to `<out>/frames/`. All paths in records are relative to the
/// manifest. RM strategies throw StalenessError unless the meme source is
/// finalized.
ExportResult export_manifest(StrategyId id, const ExportSources& sources,
                             const ExportConfig& config);

/// Chat-style fine-tuning record.
ordered_json training_record(const TrainingExample& ex, const std::filesystem::path& base,
                             StrategyId strategy, Profile profile);

}  // namespace xma
