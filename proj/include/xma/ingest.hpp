#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "xma/core.hpp"

namespace xma {

struct Dataset {
  std::string dataset_id;
  LabelSchema schema;
  MediaKind kind = MediaKind::Meme;
  std::vector<MediaItem> items;

  std::size_t size() const { return items.size(); }
  const MediaItem& at(const std::string& item_id) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

/// Reads a line-delimited manifest. Media paths are resolved against the
/// manifest's directory and must exist. Optional fields understood beyond
/// the base record: `split`, `source_label`, `provenance`.
Dataset load_dataset(const std::filesystem::path& manifest,
                     const LabelSchema& schema, MediaKind kind,
                     std::string dataset_id = {});

/// Inverse of load_dataset; media paths are written relative to the
/// manifest's directory.
void save_dataset(const Dataset& dataset, const std::filesystem::path& manifest);

/// Shuffles a copy with `spec.seed`, cuts at round-half-up(fraction * N).
/// Items keep their original relative order inside each part.
std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset,
                                          const SplitSpec& spec);

/// Uniform sample without replacement, in sampled order.
Dataset sample_items(const Dataset& dataset, std::size_t n, std::uint64_t seed);

std::map<std::string, std::size_t> label_counts(const Dataset& dataset);

/// Rewrites every label through `mapping` into `task`'s vocabulary. The old
/// label is kept in `source_label`.
Dataset remap_dataset(const Dataset& dataset, const LabelMapping& mapping,
                      const TaskDef& task);

/// Decodes a dataset whose labels are `task` words.
std::vector<BinaryLabel> binary_labels(const Dataset& dataset,
                                       const TaskDef& task);

}  // namespace xma
