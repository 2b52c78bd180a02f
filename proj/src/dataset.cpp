#include "chsnet/dataset.hpp"

#include <opencv2/imgcodecs.hpp>

#include "chsnet/annotations.hpp"
#include "chsnet/error.hpp"
#include "chsnet/synth_data.hpp"

namespace chsnet {

namespace fs = std::filesystem;

cv::Mat read_image(const fs::path& path) {
  cv::Mat image = cv::imread(path.string(), cv::IMREAD_COLOR);
  require(!image.empty(), ErrorKind::io, "cannot decode image " + path.string());
  return image;
}

std::vector<Sample> load_split(const fs::path& root, const std::string& file) {
  std::vector<Sample> samples;
  for (auto& record : read_annotation_file(root / file)) {
    Sample s;
    s.pixels = read_image(root / record.image);
    s.image = record.image;
    s.annotations = std::move(record.annotations);
    const int w = s.pixels.cols, h = s.pixels.rows;
    require((s.annotations.image_width == 0 || s.annotations.image_width == w) &&
                (s.annotations.image_height == 0 || s.annotations.image_height == h),
            ErrorKind::format, file + ": recorded size of " + s.image + " differs from the image");
    s.annotations.image_width = w;
    s.annotations.image_height = h;
    try {
      s.annotations.validate();
    } catch (const Error& e) {
      fail(ErrorKind::format, file + ": " + s.image + ": " + e.what());
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

Dataset load_dataset(const fs::path& root) {
  require(fs::is_directory(root), ErrorKind::io, "dataset directory " + root.string() + " not found");
  Dataset d;
  d.root = root;
  d.train = load_split(root, DatasetLayout::kTrain);
  d.val = load_split(root, DatasetLayout::kVal);
  return d;
}

Tensor images_to_tensor(std::span<const cv::Mat> images) {
  require(!images.empty(), ErrorKind::invalid_argument, "no images to stack");
  const int h = images.front().rows, w = images.front().cols;
  Tensor x({static_cast<int>(images.size()), 3, h, w});
  for (std::size_t n = 0; n < images.size(); ++n) {
    const cv::Mat& img = images[n];
    require(img.type() == CV_8UC3 && img.rows == h && img.cols == w, ErrorKind::shape,
            "batch images must share size and be 8-bit 3-channel");
    for (int y = 0; y < h; ++y) {
      const auto* row = img.ptr<cv::Vec3b>(y);
      for (int xx = 0; xx < w; ++xx)
        for (int c = 0; c < 3; ++c)
          x.at(static_cast<int>(n), c, y, xx) = (row[xx][c] / 255.0 - 0.5) / 0.25;
    }
  }
  return x;
}

}  // namespace chsnet
