#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "chsnet/density_map.hpp"
#include "chsnet/tensor.hpp"

namespace chsnet {

struct Sample {
  std::string image;  // path relative to the dataset root
  cv::Mat pixels;     // CV_8UC3
  PointAnnotations annotations;
};

struct Dataset {
  std::filesystem::path root;
  std::vector<Sample> train;  // possibly corrupted labels
  std::vector<Sample> val;    // clean labels
};

// Decodes every image of an annotation file and attaches its size to the
// annotations; points outside the decoded image are rejected.
std::vector<Sample> load_split(const std::filesystem::path& root, const std::string& file);
Dataset load_dataset(const std::filesystem::path& root);

cv::Mat read_image(const std::filesystem::path& path);

// Stacks 8-bit images into an N x 3 x H x W tensor, mapping v to (v/255 - 0.5) / 0.25.
Tensor images_to_tensor(std::span<const cv::Mat> images);

}  // namespace chsnet
