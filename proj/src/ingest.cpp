#include "xma/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "xma/errors.hpp"
#include "xma/jsonl.hpp"
#include "xma/rng.hpp"

namespace xma {

namespace fs = std::filesystem;

namespace {

bool is_image_file(const fs::path& p) {
  auto ext = normalize_label(p.extension().string());
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" ||
         ext == ".webp" || ext == ".ppm";
}

std::vector<fs::path> list_frames(const fs::path& dir) {
  std::vector<fs::path> frames;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) {
      frames.push_back(entry.path());
    }
  }
  std::sort(frames.begin(), frames.end());
  return frames;
}

std::string where(const fs::path& manifest, std::size_t line) {
  return manifest.filename().string() + ":" + std::to_string(line);
}

std::string string_field(const json& j, const char* key, bool required,
                         const std::string& loc) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    if (required) throw ValidationError(loc + ": missing field '" + key + "'");
    return {};
  }
  if (!it->is_string()) throw ValidationError(loc + ": field '" + key + "' must be a string");
  return it->get<std::string>();
}

fs::path resolve_media(const fs::path& base, const std::string& rel,
                       const std::string& loc, const std::string& id) {
  auto p = (base / rel).lexically_normal();
  if (!fs::exists(p)) {
    throw ValidationError(loc + ": media path for item '" + id +
                          "' does not exist: " + p.string());
  }
  return p;
}

std::string rel_to(const fs::path& p, const fs::path& base) {
  auto r = p.lexically_relative(base);
  return (r.empty() ? p : r).generic_string();
}

MediaItem parse_record(const json& j, const fs::path& base, MediaKind kind,
                       const LabelSchema& schema, const std::string& loc) {
  MediaItem item;
  item.kind = kind;
  item.item_id = string_field(j, "id", true, loc);
  if (item.item_id.empty()) throw ValidationError(loc + ": empty item id");
  item.original_label = normalize_label(string_field(j, "label", true, loc));
  if (!schema.contains(item.original_label)) {
    throw SchemaError(loc + ": item '" + item.item_id + "' has label '" +
                      item.original_label + "' not in schema '" + schema.id() +
                      "'");
  }
  item.split = split_from_string(string_field(j, "split", false, loc));
  item.source_label = normalize_label(string_field(j, "source_label", false, loc));
  item.provenance = string_field(j, "provenance", false, loc);

  if (kind == MediaKind::Meme) {
    item.text = string_field(j, "text", false, loc);
    auto image = string_field(j, "image", false, loc);
    if (image.empty()) {
      throw ValidationError(loc + ": meme '" + item.item_id + "' has no image path");
    }
    if (j.contains("duration_s") || j.contains("frames_dir") || j.contains("video")) {
      throw ValidationError(loc + ": meme '" + item.item_id +
                            "' must have exactly one image and no duration");
    }
    item.image = resolve_media(base, image, loc, item.item_id);
    return item;
  }

  item.title = string_field(j, "title", false, loc);
  item.transcript = string_field(j, "transcript", false, loc);
  auto dur = j.find("duration_s");
  if (dur == j.end() || !dur->is_number()) {
    throw ValidationError(loc + ": video '" + item.item_id +
                          "' is missing numeric duration_s");
  }
  item.duration_s = dur->get<double>();
  if (!(*item.duration_s >= 0.0)) {
    throw ValidationError(loc + ": video '" + item.item_id + "' has negative duration_s");
  }
  auto frames_dir = string_field(j, "frames_dir", false, loc);
  auto video = string_field(j, "video", false, loc);
  if (frames_dir.empty() == video.empty()) {
    throw ValidationError(loc + ": video '" + item.item_id +
                          "' needs exactly one of frames_dir or video");
  }
  std::optional<int> declared;
  if (auto fc = j.find("frame_count"); fc != j.end() && !fc->is_null()) {
    if (!fc->is_number_integer()) {
      throw ValidationError(loc + ": frame_count must be an integer");
    }
    declared = fc->get<int>();
  }
  if (!frames_dir.empty()) {
    item.frames_dir = resolve_media(base, frames_dir, loc, item.item_id);
    item.frames = list_frames(item.frames_dir);
    item.frame_count = static_cast<int>(item.frames.size());
    if (declared && *declared != item.frame_count) {
      throw ValidationError(loc + ": video '" + item.item_id + "' declares " +
                            std::to_string(*declared) + " frames but " +
                            item.frames_dir.string() + " holds " +
                            std::to_string(item.frame_count));
    }
  } else {
    item.video = resolve_media(base, video, loc, item.item_id);
    if (!declared) {
      throw ValidationError(loc + ": video '" + item.item_id +
                            "' references a video file without frame_count");
    }
    item.frame_count = *declared;
  }
  if (item.frame_count < 1) {
    throw ValidationError(loc + ": video '" + item.item_id + "' has no frames");
  }
  return item;
}

ordered_json to_record(const MediaItem& item, const fs::path& base) {
  ordered_json j;
  j["id"] = item.item_id;
  if (item.kind == MediaKind::Meme) {
    j["image"] = rel_to(item.image, base);
    j["text"] = item.text;
  } else {
    j["title"] = item.title;
    j["transcript"] = item.transcript;
    if (!item.frames_dir.empty()) {
      j["frames_dir"] = rel_to(item.frames_dir, base);
    } else {
      j["video"] = rel_to(item.video, base);
    }
    j["frame_count"] = item.frame_count;
    j["duration_s"] = item.duration_s.value_or(0.0);
  }
  j["label"] = item.original_label;
  if (item.split != Split::Unsplit) j["split"] = std::string(to_string(item.split));
  if (!item.source_label.empty()) j["source_label"] = item.source_label;
  if (!item.provenance.empty()) {
    j["provenance"] = item.provenance;
    j["final_label"] = item.original_label;
  }
  return j;
}

}  // namespace

const MediaItem& Dataset::at(const std::string& item_id) const {
  for (const auto& item : items) {
    if (item.item_id == item_id) return item;
  }
  throw IntegrityError("dataset '" + dataset_id + "' has no item '" + item_id + "'");
}

Dataset load_dataset(const fs::path& manifest, const LabelSchema& schema,
                     MediaKind kind, std::string dataset_id) {
  if (!fs::exists(manifest)) throw ValidationError("manifest not found: " + manifest.string());
  Dataset ds;
  ds.dataset_id = dataset_id.empty() ? manifest.stem().string() : std::move(dataset_id);
  ds.schema = schema;
  ds.kind = kind;
  auto base = fs::absolute(manifest).parent_path().lexically_normal();
  std::set<std::string> seen;
  for_each_jsonl(manifest, [&](const json& j, std::size_t line) {
    auto loc = where(manifest, line);
    auto item = parse_record(j, base, kind, schema, loc);
    if (!seen.insert(item.item_id).second) {
      throw IntegrityError(loc + ": duplicate item id '" + item.item_id + "'");
    }
    ds.items.push_back(std::move(item));
  });
  return ds;
}

void save_dataset(const Dataset& dataset, const fs::path& manifest) {
  auto base = fs::absolute(manifest).parent_path().lexically_normal();
  std::string out;
  for (const auto& item : dataset.items) {
    out += to_record(item, base).dump();
    out += '\n';
  }
  write_file_atomic(manifest, out);
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset,
                                          const SplitSpec& spec) {
  if (dataset.items.empty()) throw ValidationError("cannot split an empty dataset");
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw ValidationError("train_fraction must lie in (0, 1)");
  }
  const auto n = dataset.items.size();
  const auto n_train = static_cast<std::size_t>(
      std::floor(spec.train_fraction * static_cast<double>(n) + 0.5));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(spec.seed);
  rng.shuffle(std::span(order));
  std::vector<bool> in_train(n, false);
  for (std::size_t i = 0; i < n_train; ++i) in_train[order[i]] = true;

  Dataset train{dataset.dataset_id + "_train", dataset.schema, dataset.kind, {}};
  Dataset test{dataset.dataset_id + "_test", dataset.schema, dataset.kind, {}};
  for (std::size_t i = 0; i < n; ++i) {
    auto item = dataset.items[i];
    item.split = in_train[i] ? Split::Train : Split::Test;
    (in_train[i] ? train : test).items.push_back(std::move(item));
  }
  return {std::move(train), std::move(test)};
}

Dataset sample_items(const Dataset& dataset, std::size_t n, std::uint64_t seed) {
  if (n > dataset.items.size()) {
    throw BoundsError("cannot sample " + std::to_string(n) + " items from '" +
                      dataset.dataset_id + "' of size " +
                      std::to_string(dataset.items.size()));
  }
  std::vector<std::size_t> order(dataset.items.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  // Partial Fisher-Yates: the first n slots are a uniform sample.
  for (std::size_t i = 0; i < n; ++i) {
    auto j = i + static_cast<std::size_t>(rng.below(order.size() - i));
    std::swap(order[i], order[j]);
  }
  Dataset out{dataset.dataset_id, dataset.schema, dataset.kind, {}};
  out.items.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.items.push_back(dataset.items[order[i]]);
  return out;
}

std::map<std::string, std::size_t> label_counts(const Dataset& dataset) {
  std::map<std::string, std::size_t> counts;
  for (const auto& l : dataset.schema.labels()) counts[l] = 0;
  for (const auto& item : dataset.items) ++counts[item.original_label];
  return counts;
}

Dataset remap_dataset(const Dataset& dataset, const LabelMapping& mapping,
                      const TaskDef& task) {
  auto report = validate_mapping(mapping, dataset.schema, task);
  if (!report.ok()) {
    throw MappingError("mapping " + mapping.source_schema + " -> " +
                       mapping.target_task + " is incomplete:\n" + report.describe());
  }
  Dataset out{dataset.dataset_id, LabelSchema::for_task(task), dataset.kind, {}};
  out.items.reserve(dataset.items.size());
  for (const auto& item : dataset.items) {
    auto copy = item;
    copy.source_label = item.original_label;
    copy.original_label = task.render(remap_label(item.original_label, mapping, task));
    out.items.push_back(std::move(copy));
  }
  return out;
}

std::vector<BinaryLabel> binary_labels(const Dataset& dataset, const TaskDef& task) {
  std::vector<BinaryLabel> out;
  out.reserve(dataset.items.size());
  for (const auto& item : dataset.items) {
    auto l = task.parse_word(item.original_label);
    if (!l) {
      throw SchemaError("item '" + item.item_id + "' label '" + item.original_label +
                        "' is not a word of task '" + task.task_id + "'");
    }
    out.push_back(*l);
  }
  return out;
}

}  // namespace xma
