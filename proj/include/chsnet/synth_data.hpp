#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <opencv2/core.hpp>

#include "chsnet/density_map.hpp"
#include "chsnet/noise.hpp"

namespace chsnet {

enum class BackgroundTexture { flat, gradient, noise };

std::string to_string(BackgroundTexture texture);
BackgroundTexture parse_background(const std::string& name);

struct SceneSpec {
  int image_size = 128;
  int count_min = 10;
  int count_max = 60;
  double radius_min = 2.5;
  double radius_max = 4.0;
  BackgroundTexture background = BackgroundTexture::noise;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Scene {
  cv::Mat image;  // CV_8UC3, image_size x image_size
  PointAnnotations annotations;
};

// Draws N ~ U{count_min..count_max} soft-edged dark ellipses ("heads") on
// the chosen background. Centres are uniform over the image, at least
// radius_min apart, and returned exactly as the annotations.
Scene render_scene(const SceneSpec& spec);

struct DatasetLayout {
  static constexpr const char* kImages = "images";
  static constexpr const char* kTrain = "train.jsonl";
  static constexpr const char* kTrainClean = "train_clean.jsonl";
  static constexpr const char* kVal = "val.jsonl";
  static constexpr const char* kNoiseManifest = "noise_manifest.jsonl";
  static constexpr const char* kMeta = "dataset_meta.json";
};

struct DatasetSummary {
  int n_train = 0;
  int n_val = 0;
  std::size_t clean_points = 0;
  std::size_t train_points = 0;
};

// Writes images/NNNN.png (training images first), corrupted training labels,
// their clean originals, clean validation labels, the corruption manifest and
// a metadata file with the full generation spec. Scene i uses the seed
// derive_seed(spec.seed, scene-stream, i).
DatasetSummary build_dataset(const SceneSpec& spec, int n_train, int n_val, const NoiseSpec& noise,
                             const std::filesystem::path& dir, bool overwrite = false);

}  // namespace chsnet
