#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "xma/core.hpp"
#include "xma/image.hpp"

namespace xma {

/// Pseudo-video augmentation family: rotation, area-preserving-aspect crop
/// resized back, horizontal flip, brightness jitter.
struct AugConfig {
  double rotation_deg_max = 15.0;
  double crop_area_min = 0.8;
  double hflip_prob = 0.5;
  double brightness_jitter = 0.1;
  int k = 16;
  std::uint64_t seed = 0;
  /// Canonical output size; 0 keeps the source dimension.
  int output_width = 0;
  int output_height = 0;

  /// Every magnitude zero: frames are exact copies of the source.
  static AugConfig identity(int k, std::uint64_t seed);
};

void validate(const AugConfig& cfg);

/// One frame of a video (or of a pseudo-video). `path` is the frame image
/// file, or the container file when `in_container` is set, in which case
/// the frame must be extracted before it can be read.
struct FrameRef {
  std::string item_id;
  int frame_index = 0;
  std::filesystem::path path;
  bool in_container = false;

  friend bool operator==(const FrameRef&, const FrameRef&) = default;
};

/// Uniformly random frame in [0, F); deterministic in (seed, item_id).
FrameRef sample_single_frame(const MediaItem& video, std::uint64_t seed);

/// idx_i = round(i * (F - 1) / (k - 1)), half-up; {0} for k = 1.
std::vector<int> uniform_frame_indices(int frame_count, int k);

std::vector<FrameRef> sample_k_frames(const MediaItem& video, int k);

/// Parameters drawn for one augmented frame.
struct AugParams {
  double angle_deg = 0.0;
  double crop_scale = 1.0;  // side length fraction, sqrt of the area fraction
  double crop_x = 0.0;      // top-left corner, fraction of the free margin
  double crop_y = 0.0;
  bool hflip = false;
  double brightness = 1.0;
};

AugParams draw_aug_params(const AugConfig& cfg, std::uint64_t frame_seed);

/// Applies one parameter set; output has the canonical dimensions and the
/// source's channel count.
Image augment_frame(const Image& source, const AugParams& params,
                    int out_width, int out_height);

/// Exactly cfg.k frames; frame j is drawn from derive_seed(cfg.seed,
/// item_id, j).
std::vector<Image> augment_to_pseudo_video(const Image& image,
                                           std::string_view item_id,
                                           const AugConfig& cfg);

/// Writes `<root>/<item_id>/frame_<j:04>.png` plus `index.txt` listing the
/// frame files in order. Returns the frame paths.
std::vector<std::filesystem::path> write_pseudo_video(
    const std::vector<Image>& frames, const std::filesystem::path& root,
    const std::string& item_id);

}  // namespace xma
