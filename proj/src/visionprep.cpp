#include "xma/visionprep.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "xma/errors.hpp"
#include "xma/jsonl.hpp"
#include "xma/rng.hpp"

namespace xma {

namespace fs = std::filesystem;

AugConfig AugConfig::identity(int k, std::uint64_t seed) {
  AugConfig cfg;
  cfg.rotation_deg_max = 0.0;
  cfg.crop_area_min = 1.0;
  cfg.hflip_prob = 0.0;
  cfg.brightness_jitter = 0.0;
  cfg.k = k;
  cfg.seed = seed;
  return cfg;
}

void validate(const AugConfig& cfg) {
  if (!(cfg.hflip_prob >= 0.0 && cfg.hflip_prob <= 1.0)) {
    throw ValidationError("hflip_prob must lie in [0, 1]");
  }
  if (!(cfg.crop_area_min > 0.0 && cfg.crop_area_min <= 1.0)) {
    throw ValidationError("crop_area_min must lie in (0, 1]");
  }
  if (cfg.k < 1) throw ValidationError("k must be at least 1");
  if (cfg.rotation_deg_max < 0.0 || cfg.brightness_jitter < 0.0 ||
      cfg.brightness_jitter > 1.0) {
    throw ValidationError("augmentation magnitudes out of range");
  }
  if (cfg.output_width < 0 || cfg.output_height < 0) {
    throw ValidationError("output size must be non-negative");
  }
}

namespace {

FrameRef frame_ref(const MediaItem& video, int index) {
  FrameRef ref;
  ref.item_id = video.item_id;
  ref.frame_index = index;
  if (!video.frames.empty()) {
    ref.path = video.frames.at(static_cast<std::size_t>(index));
  } else {
    ref.path = video.video;
    ref.in_container = true;
  }
  return ref;
}

void require_video(const MediaItem& item) {
  if (item.kind != MediaKind::Video) {
    throw ValidationError("item '" + item.item_id + "' is not a video");
  }
  if (item.frame_count < 1) {
    throw MediaError("video '" + item.item_id + "' has no frames");
  }
}

double sample_bilinear(const Image& img, double x, double y, int c) {
  x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = img.at(x0, y0, c) * (1.0 - fx) + img.at(x1, y0, c) * fx;
  const double bottom = img.at(x0, y1, c) * (1.0 - fx) + img.at(x1, y1, c) * fx;
  return top * (1.0 - fy) + bottom * fy;
}

}  // namespace

FrameRef sample_single_frame(const MediaItem& video, std::uint64_t seed) {
  require_video(video);
  Rng rng(derive_seed(seed, video.item_id, 0));
  return frame_ref(video, static_cast<int>(rng.below(
                              static_cast<std::uint64_t>(video.frame_count))));
}

std::vector<int> uniform_frame_indices(int frame_count, int k) {
  if (frame_count < 1) throw MediaError("cannot sample from zero frames");
  if (k < 1) throw ValidationError("k must be at least 1");
  std::vector<int> out(static_cast<std::size_t>(k), 0);
  if (k == 1) return out;
  const long long span = frame_count - 1;
  const long long denom = k - 1;
  for (long long i = 0; i < k; ++i) {
    // floor(i * span / denom + 1/2) in exact integer arithmetic.
    out[static_cast<std::size_t>(i)] =
        static_cast<int>((2 * i * span + denom) / (2 * denom));
  }
  return out;
}

std::vector<FrameRef> sample_k_frames(const MediaItem& video, int k) {
  require_video(video);
  std::vector<FrameRef> out;
  for (int idx : uniform_frame_indices(video.frame_count, k)) {
    out.push_back(frame_ref(video, idx));
  }
  return out;
}

AugParams draw_aug_params(const AugConfig& cfg, std::uint64_t frame_seed) {
  // Always six draws in a fixed order, so toggling one transform off does
  // not shift the others.
  Rng rng(frame_seed);
  AugParams p;
  p.angle_deg = rng.uniform(-cfg.rotation_deg_max, cfg.rotation_deg_max);
  p.crop_scale = std::sqrt(rng.uniform(cfg.crop_area_min, 1.0));
  p.crop_x = rng.uniform01();
  p.crop_y = rng.uniform01();
  p.hflip = rng.bernoulli(cfg.hflip_prob);
  p.brightness = rng.uniform(1.0 - cfg.brightness_jitter, 1.0 + cfg.brightness_jitter);
  return p;
}

Image augment_frame(const Image& source, const AugParams& params, int out_width,
                    int out_height) {
  if (source.empty()) throw MediaError("cannot augment an empty image");
  const int ow = out_width > 0 ? out_width : source.width;
  const int oh = out_height > 0 ? out_height : source.height;
  Image out(ow, oh, source.channels);

  const double w = source.width;
  const double h = source.height;
  const double crop_w = w * params.crop_scale;
  const double crop_h = h * params.crop_scale;
  const double x0 = params.crop_x * (w - crop_w);
  const double y0 = params.crop_y * (h - crop_h);
  const double theta = params.angle_deg * std::numbers::pi / 180.0;
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);
  const double cx = (w - 1.0) / 2.0;
  const double cy = (h - 1.0) / 2.0;
  const int colour_channels = source.channels == 4 ? 3 : source.channels;

  for (int v = 0; v < oh; ++v) {
    for (int u = 0; u < ow; ++u) {
      const int uf = params.hflip ? ow - 1 - u : u;
      // Output pixel -> crop window of the rotated image.
      const double px = x0 + (uf + 0.5) * (crop_w / ow) - 0.5;
      const double py = y0 + (v + 0.5) * (crop_h / oh) - 0.5;
      // Rotated image -> source, rotating about the centre.
      const double dx = px - cx;
      const double dy = py - cy;
      const double sx = cx + cos_t * dx + sin_t * dy;
      const double sy = cy - sin_t * dx + cos_t * dy;
      for (int c = 0; c < source.channels; ++c) {
        double value = sample_bilinear(source, sx, sy, c);
        if (c < colour_channels) value *= params.brightness;
        out.at(u, v, c) =
            static_cast<std::uint8_t>(std::clamp(std::floor(value + 0.5), 0.0, 255.0));
      }
    }
  }
  return out;
}

std::vector<Image> augment_to_pseudo_video(const Image& image,
                                           std::string_view item_id,
                                           const AugConfig& cfg) {
  validate(cfg);
  if (image.empty()) throw MediaError("cannot augment an empty image");
  std::vector<Image> frames;
  frames.reserve(static_cast<std::size_t>(cfg.k));
  for (int j = 0; j < cfg.k; ++j) {
    auto params = draw_aug_params(cfg, derive_seed(cfg.seed, item_id,
                                                   static_cast<std::uint64_t>(j)));
    frames.push_back(augment_frame(image, params, cfg.output_width, cfg.output_height));
  }
  return frames;
}

std::vector<fs::path> write_pseudo_video(const std::vector<Image>& frames,
                                         const fs::path& root,
                                         const std::string& item_id) {
  auto dir = root / item_id;
  fs::create_directories(dir);
  std::vector<fs::path> paths;
  std::string index;
  for (std::size_t j = 0; j < frames.size(); ++j) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04zu.png", j);
    auto path = dir / name;
    save_png(frames[j], path);
    paths.push_back(path);
    index += name;
    index += '\n';
  }
  write_file_atomic(dir / "index.txt", index);
  return paths;
}

}  // namespace xma
