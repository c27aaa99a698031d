#include "xma/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <fstream>
#include <iterator>
#include <numeric>

#include "xma/errors.hpp"
#include "xma/jsonl.hpp"

namespace xma {

namespace {

// OpenCV stores colour as BGR(A); swap to RGB(A) at the boundary.
Image from_mat(const cv::Mat& raw) {
  cv::Mat mat = raw;
  if (mat.depth() != CV_8U) {
    double scale = mat.depth() == CV_16U ? 1.0 / 257.0 : 1.0;
    mat.convertTo(mat, CV_8U, scale);
  }
  const int c = mat.channels();
  if (c != 1 && c != 3 && c != 4) throw MediaError("unsupported channel count");
  Image img(mat.cols, mat.rows, c);
  for (int y = 0; y < mat.rows; ++y) {
    const auto* row = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < mat.cols; ++x) {
      for (int k = 0; k < c; ++k) {
        int src = (c >= 3 && k < 3) ? 2 - k : k;
        img.at(x, y, k) = row[x * c + src];
      }
    }
  }
  return img;
}

cv::Mat to_mat(const Image& img) {
  cv::Mat mat(img.height, img.width, CV_8UC(img.channels));
  const int c = img.channels;
  for (int y = 0; y < img.height; ++y) {
    auto* row = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.width; ++x) {
      for (int k = 0; k < c; ++k) {
        int dst = (c >= 3 && k < 3) ? 2 - k : k;
        row[x * c + dst] = img.at(x, y, k);
      }
    }
  }
  return mat;
}

}  // namespace

double Image::mean_intensity() const {
  if (pixels.empty()) return 0.0;
  double sum = std::accumulate(pixels.begin(), pixels.end(), 0.0);
  return sum / static_cast<double>(pixels.size());
}

Image decode_image(const std::vector<std::uint8_t>& bytes) {
  if (bytes.empty()) throw MediaError("empty image buffer");
  cv::Mat mat;
  try {
    mat = cv::imdecode(bytes, cv::IMREAD_UNCHANGED);
  } catch (const cv::Exception& e) {
    throw MediaError(std::string("image decode failed: ") + e.what());
  }
  if (mat.empty()) throw MediaError("undecodable image data");
  return from_mat(mat);
}

Image load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MediaError("cannot open image " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_image(bytes);
  } catch (const MediaError& e) {
    throw MediaError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_png(const Image& image) {
  if (image.empty()) throw MediaError("cannot encode an empty image");
  std::vector<std::uint8_t> out;
  const std::vector<int> params = {cv::IMWRITE_PNG_COMPRESSION, 6,
                                   cv::IMWRITE_PNG_STRATEGY,
                                   cv::IMWRITE_PNG_STRATEGY_DEFAULT};
  if (!cv::imencode(".png", to_mat(image), out, params)) {
    throw MediaError("PNG encoding failed");
  }
  return out;
}

void save_png(const Image& image, const std::filesystem::path& path) {
  auto bytes = encode_png(image);
  write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

}  // namespace xma
