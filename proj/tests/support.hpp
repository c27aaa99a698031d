#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>
#include <unistd.h>

#include "xma/config.hpp"
#include "xma/core.hpp"
#include "xma/image.hpp"
#include "xma/ingest.hpp"
#include "xma/jsonl.hpp"

namespace xma::test {

namespace fs = std::filesystem;

inline fs::path data_dir() { return fs::path(XMA_TEST_DATA); }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "xma") {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

inline const LabelConfig& shipped_config() {
  static const LabelConfig cfg = LabelConfig::load(XMA_DEFAULT_CONFIG_DIR);
  return cfg;
}

inline const TaskDef& mhc_task() { return shipped_config().task("mhc"); }
inline const TaskDef& hatemm_task() { return shipped_config().task("hatemm"); }

inline void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    out.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

/// Mini memes with labels in the mhc vocabulary.
inline Dataset mhc_memes() {
  const auto& cfg = shipped_config();
  auto raw = load_dataset(data_dir() / "memes.mft", cfg.schema("fhm"), MediaKind::Meme);
  return remap_dataset(raw, cfg.mapping("fhm", "mhc"), cfg.task("mhc"));
}

/// Mini videos with labels in the mhc vocabulary.
inline Dataset mhc_videos() {
  const auto& cfg = shipped_config();
  auto raw = load_dataset(data_dir() / "videos.mft", cfg.schema("mhc_raw"), MediaKind::Video);
  return remap_dataset(raw, cfg.mapping("mhc_raw", "mhc"), cfg.task("mhc"));
}

/// Small RGB test image with a gradient, written as PNG.
inline Image gradient_image(int w, int h, int channels = 3) {
  Image img(w, h, channels);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      img.at(x, y, 0) = static_cast<std::uint8_t>((x * 255) / std::max(1, w - 1));
      if (channels > 1) img.at(x, y, 1) = static_cast<std::uint8_t>((y * 255) / std::max(1, h - 1));
      if (channels > 2) img.at(x, y, 2) = static_cast<std::uint8_t>((x * y) % 256);
      if (channels > 3) img.at(x, y, 3) = 200;
    }
  }
  return img;
}

}  // namespace xma::test
