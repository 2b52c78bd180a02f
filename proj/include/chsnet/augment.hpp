#pragma once

#include <cstdint>

#include <opencv2/core.hpp>

#include "chsnet/density_map.hpp"

namespace chsnet {

struct AugmentParams {
  double scale_min = 1.0;
  double scale_max = 1.0;
  int crop_size = 128;
  double hflip_prob = 0.5;

  void validate() const;
};

struct Augmented {
  cv::Mat image;  // crop_size x crop_size
  PointAnnotations annotations;
};

// Random rescale (bilinear), random crop_size crop, horizontal flip. Points
// follow the same geometry; points that leave the crop are dropped. A side
// shorter than crop_size after scaling is zero-padded on the bottom/right.
// Draw order from the seeded stream: scale, crop x, crop y, flip.
Augmented augment(const cv::Mat& image, const PointAnnotations& ann, const AugmentParams& params,
                  std::uint64_t seed);

}  // namespace chsnet
