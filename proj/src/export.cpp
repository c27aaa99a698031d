#include "xma/export.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "xma/errors.hpp"
#include "xma/image.hpp"
#include "xma/rng.hpp"

namespace xma {

namespace fs = std::filesystem;

void validate(const CostParams& p) {
  auto nonneg = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ValidationError(std::string(name) + " must be a non-negative number");
    }
  };
  nonneg(p.meme_minutes_per_item, "meme_minutes_per_item");
  nonneg(p.video_minutes_per_source_minute, "video_minutes_per_source_minute");
  nonneg(p.video_annotations_per_item, "video_annotations_per_item");
  nonneg(p.video_duration_min, "video_duration_min");
  nonneg(p.disagreement_rate, "disagreement_rate");
  if (p.disagreement_rate > 1.0) throw ValidationError("disagreement_rate must be in [0, 1]");
}

double estimate_annotation_hours(MediaKind kind, std::size_t n, const CostParams& p) {
  validate(p);
  const auto count = static_cast<double>(n);
  if (kind == MediaKind::Video) {
    return count * p.video_duration_min * p.video_minutes_per_source_minute *
           p.video_annotations_per_item / 60.0;
  }
  return count * p.disagreement_rate * p.meme_minutes_per_item / 60.0;
}

double estimate_video_hours(const Dataset& videos, const CostParams& p) {
  validate(p);
  double minutes = 0.0;
  for (const auto& item : videos.items) {
    const double duration = item.duration_s ? *item.duration_s / 60.0 : p.video_duration_min;
    minutes += duration * p.video_minutes_per_source_minute * p.video_annotations_per_item;
  }
  return minutes / 60.0;
}

std::string_view to_string(Profile profile) {
  return profile == Profile::ImageModel ? "IMAGE_MODEL" : "VIDEO_MODEL";
}

Profile profile_from_string(std::string_view s) {
  if (s == "IMAGE_MODEL" || s == "image") return Profile::ImageModel;
  if (s == "VIDEO_MODEL" || s == "video") return Profile::VideoModel;
  throw ValidationError("unknown profile '" + std::string(s) + "'");
}

std::string_view to_string(StrategyId id) {
  switch (id) {
    case StrategyId::NoFt:
      return "NO_FT";
    case StrategyId::VidFt:
      return "VID_FT";
    case StrategyId::OmFt:
      return "OM_FT";
    case StrategyId::RmFt:
      return "RM_FT";
    case StrategyId::VidRmFt:
      break;
  }
  return "VID_RM_FT";
}

StrategyId strategy_from_string(std::string_view s) {
  for (auto id : all_strategies()) {
    if (to_string(id) == s) return id;
  }
  throw ValidationError("unknown strategy '" + std::string(s) +
                        "' (expected NO_FT, VID_FT, OM_FT, RM_FT or VID_RM_FT)");
}

std::vector<StrategyId> all_strategies() {
  return {StrategyId::NoFt, StrategyId::VidFt, StrategyId::OmFt, StrategyId::RmFt,
          StrategyId::VidRmFt};
}

std::string_view to_string(LabelSource source) {
  switch (source) {
    case LabelSource::None:
      return "none";
    case LabelSource::VideoGroundTruth:
      return "video-ground-truth";
    case LabelSource::OriginalRemapped:
      return "original-remapped";
    case LabelSource::FinalVoted:
      break;
  }
  return "final-voted";
}

Strategy Strategy::get(StrategyId id) {
  switch (id) {
    case StrategyId::NoFt:
      return {id, false, false, LabelSource::None};
    case StrategyId::VidFt:
      return {id, true, false, LabelSource::None};
    case StrategyId::OmFt:
      return {id, false, true, LabelSource::OriginalRemapped};
    case StrategyId::RmFt:
      return {id, false, true, LabelSource::FinalVoted};
    case StrategyId::VidRmFt:
      break;
  }
  return {StrategyId::VidRmFt, true, true, LabelSource::FinalVoted};
}

std::vector<std::string> TrainingExample::input_words() const {
  std::vector<std::string> words;
  std::istringstream in(input_text);
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

std::vector<std::string> TrainingExample::target_sequence() const {
  auto seq = input_words();
  seq.push_back(target_word);
  return seq;
}

std::string training_question(const TaskDef& task, MediaKind kind) {
  return task.question(kind) + " Answer " + task.positive_word + " or " +
         task.negative_word + ".";
}

namespace {

std::vector<fs::path> pseudo_video_frames(const MediaItem& item, VisionContext& vision) {
  {
    std::lock_guard lock(vision.mu);
    auto it = vision.written.find(item.item_id);
    if (it != vision.written.end()) return it->second;
  }
  auto image = load_image(item.image);
  auto frames = augment_to_pseudo_video(image, item.item_id, vision.aug);
  auto paths = write_pseudo_video(frames, vision.frames_root, item.item_id);
  std::lock_guard lock(vision.mu);
  vision.written[item.item_id] = paths;
  return paths;
}

std::vector<FrameRef> prepare_vision(const MediaItem& item, Profile profile,
                                     VisionContext& vision) {
  if (item.kind == MediaKind::Video) {
    if (profile == Profile::ImageModel) return {sample_single_frame(item, vision.frame_seed)};
    return sample_k_frames(item, vision.aug.k);
  }
  if (profile == Profile::ImageModel) return {FrameRef{item.item_id, 0, item.image, false}};
  std::vector<FrameRef> refs;
  int j = 0;
  for (auto& p : pseudo_video_frames(item, vision)) {
    refs.push_back(FrameRef{item.item_id, j++, std::move(p), false});
  }
  return refs;
}

std::string relative_to(const fs::path& p, const fs::path& base) {
  auto rel = fs::weakly_canonical(p).lexically_relative(fs::weakly_canonical(base));
  return rel.empty() ? p.generic_string() : rel.generic_string();
}

ordered_json image_part(const FrameRef& f, const fs::path& base) {
  ordered_json part;
  if (f.in_container) {
    part["type"] = "video_frame";
    part["path"] = relative_to(f.path, base);
    part["frame_index"] = f.frame_index;
  } else {
    part["type"] = "image";
    part["path"] = relative_to(f.path, base);
  }
  return part;
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

std::string toml_string(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

void require_finalized(const ExportSources& sources, StrategyId id) {
  const auto name = std::string(to_string(id));
  if (!sources.meme_final) {
    throw StalenessError(name + " needs the finalized meme dataset; run finalize first");
  }
  for (const auto& item : sources.meme_final->items) {
    if (item.provenance != "AGREED" && item.provenance != "RESOLVED") {
      throw StalenessError(name + ": meme '" + item.item_id +
                           "' has no final vote; re-run finalize");
    }
  }
  if (sources.meme_original) {
    std::set<std::string> a, b;
    for (const auto& i : sources.meme_original->items) a.insert(i.item_id);
    for (const auto& i : sources.meme_final->items) b.insert(i.item_id);
    if (a != b) {
      throw StalenessError(name +
                           ": finalized memes do not match the sampled memes; re-run finalize");
    }
  }
}

void append_examples(std::vector<TrainingExample>& out, const Dataset& ds,
                     const ExportConfig& config, VisionContext& vision) {
  const auto labels = binary_labels(ds, config.task);
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    out.push_back(build_training_example(ds.items[i], ds.dataset_id, config.task, labels[i],
                                         config.profile, vision));
  }
}

}  // namespace

TrainingExample build_training_example(const MediaItem& item, const std::string& source,
                                       const TaskDef& task, BinaryLabel label,
                                       Profile profile, VisionContext& vision) {
  TrainingExample ex;
  ex.item_id = item.item_id;
  ex.kind = item.kind;
  ex.source = source;
  ex.input_text = item.full_text() + "\n" + training_question(task, item.kind);
  try {
    ex.vision = prepare_vision(item, profile, vision);
  } catch (const std::exception& e) {
    throw MediaError("item '" + item.item_id + "': " + e.what());
  }
  ex.target_word = task.render(label);
  return ex;
}

ordered_json training_record(const TrainingExample& ex, const fs::path& base,
                             StrategyId strategy, Profile profile) {
  ordered_json content = ordered_json::array();
  for (const auto& f : ex.vision) content.push_back(image_part(f, base));
  content.push_back(ordered_json{{"type", "text"}, {"text", ex.input_text}});
  ordered_json rec;
  rec["messages"] = ordered_json::array(
      {ordered_json{{"role", "user"}, {"content", std::move(content)}},
       ordered_json{{"role", "assistant"}, {"content", ex.target_word}}});
  rec["meta"] = ordered_json{{"item_id", ex.item_id},
                             {"kind", to_string(ex.kind)},
                             {"source", ex.source},
                             {"strategy", to_string(strategy)},
                             {"profile", to_string(profile)}};
  return rec;
}

std::vector<TrainingExample> strategy_examples(StrategyId id, const ExportSources& sources,
                                               const ExportConfig& config,
                                               VisionContext& vision) {
  const auto strategy = Strategy::get(id);
  std::vector<TrainingExample> out;
  if (strategy.uses_videos) {
    if (!sources.video_train) {
      throw ConfigError(std::string(to_string(id)) + " needs the video training split");
    }
    append_examples(out, *sources.video_train, config, vision);
  }
  if (strategy.meme_labels == LabelSource::OriginalRemapped) {
    if (!sources.meme_original) {
      throw ConfigError(std::string(to_string(id)) + " needs the sampled meme dataset");
    }
    append_examples(out, *sources.meme_original, config, vision);
  } else if (strategy.meme_labels == LabelSource::FinalVoted) {
    require_finalized(sources, id);
    append_examples(out, *sources.meme_final, config, vision);
  }
  if (id == StrategyId::VidRmFt) {
    Rng rng(derive_seed(config.shuffle_seed, to_string(id), 0));
    rng.shuffle(std::span<TrainingExample>(out));
  }
  return out;
}

ExportResult export_manifest(StrategyId id, const ExportSources& sources,
                             const ExportConfig& config) {
  validate_task(config.task);
  validate(config.aug);
  const auto name = std::string(to_string(id));
  const auto dir = config.out_dir / name;
  fs::create_directories(dir);

  VisionContext vision;
  vision.frame_seed = config.frame_seed;
  vision.aug = config.aug;
  vision.frames_root = config.out_dir / "frames";

  ExportResult result;
  result.strategy = id;
  const auto strategy = Strategy::get(id);

  if (strategy.trains()) {
    auto examples = strategy_examples(id, sources, config, vision);
    std::string body;
    for (const auto& ex : examples) {
      body += training_record(ex, dir, id, config.profile).dump() + "\n";
      result.train_ids.push_back(ex.item_id);
    }
    result.train_manifest = dir / ("train_" + name + ".mft");
    write_file_atomic(result.train_manifest, body);
    result.train_examples = examples.size();
  }

  for (const auto* ds : sources.eval) {
    std::string body;
    const auto labels = binary_labels(*ds, config.task);
    for (std::size_t i = 0; i < ds->items.size(); ++i) {
      const auto& item = ds->items[i];
      ordered_json rec;
      if (id == StrategyId::NoFt) {
        auto bundle = build_prompt(item, config.demos, config.task, config.mode,
                                   config.frame_seed);
        auto prompt = canonical_prompt(bundle);
        ordered_json content = ordered_json::array();
        for (const auto& part : prompt["parts"]) {
          if (part["type"] == "image") {
            FrameRef f{item.item_id, part["frame_index"].get<int>(),
                       fs::path(part["path"].get<std::string>()),
                       part.value("in_container", false)};
            content.push_back(image_part(f, dir));
          } else {
            content.push_back(part);
          }
        }
        rec["messages"] = ordered_json::array(
            {ordered_json{{"role", "system"}, {"content", prompt["system"]}},
             ordered_json{{"role", "user"}, {"content", std::move(content)}}});
      } else {
        auto ex = build_training_example(item, ds->dataset_id, config.task, labels[i],
                                         config.profile, vision);
        rec = training_record(ex, dir, id, config.profile);
        rec["messages"].erase(1);
      }
      rec["meta"] = ordered_json{{"item_id", item.item_id},
                                 {"dataset", ds->dataset_id},
                                 {"strategy", name},
                                 {"gold", config.task.render(labels[i])}};
      if (id == StrategyId::NoFt) rec["meta"]["n_shots"] = config.demos.size();
      body += rec.dump() + "\n";
    }
    auto path = dir / ("eval_" + ds->dataset_id + ".mft");
    write_file_atomic(path, body);
    result.eval_manifests.push_back(path);
  }

  std::vector<std::string> meta = {
      "strategy = " + toml_string(name),
      "task = " + toml_string(config.task.task_id),
      "profile = " + toml_string(to_string(config.profile)),
      "meme_labels = " + toml_string(to_string(strategy.meme_labels)),
      "train_examples = " + std::to_string(result.train_examples),
      "",
      "[training]",
      "epochs = 5",
      "batch_size = 8",
      "learning_rate = 2e-4",
      "adapter = \"LoRA q,v layers\"",
      "checkpoint_selection = \"keep the epoch that scores best on the video test set\"",
      "",
      "[seeds]",
      "shuffle = " + std::to_string(config.shuffle_seed),
      "frame = " + std::to_string(config.frame_seed),
      "augmentation = " + std::to_string(config.aug.seed),
      "",
      "[sources]",
  };
  if (sources.video_train && strategy.uses_videos) {
    meta.push_back("video_train = " + toml_string(sources.video_train->dataset_id));
  }
  if (strategy.meme_labels == LabelSource::OriginalRemapped) {
    meta.push_back("memes = " + toml_string(sources.meme_original->dataset_id));
  } else if (strategy.meme_labels == LabelSource::FinalVoted) {
    meta.push_back("memes = " + toml_string(sources.meme_final->dataset_id));
  }
  std::string evals;
  for (const auto* ds : sources.eval) {
    evals += (evals.empty() ? "" : ", ") + toml_string(ds->dataset_id);
  }
  meta.push_back("eval = [" + evals + "]");
  if (id == StrategyId::NoFt) {
    meta.push_back("");
    meta.push_back("[prompting]");
    meta.push_back("n_shots = " + std::to_string(config.optimal_n));
    meta.push_back("mode = " + toml_string(to_string(config.mode)));
    std::string ids;
    for (const auto& d : config.demos) ids += (ids.empty() ? "" : ", ") + toml_string(d.item_id);
    meta.push_back("demo_ids = [" + ids + "]");
  }
  result.meta = dir / "meta.toml";
  write_file_atomic(result.meta, join_lines(meta));
  return result;
}

}  // namespace xma
