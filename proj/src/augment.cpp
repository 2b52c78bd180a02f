#include "chsnet/augment.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/imgproc.hpp>

#include "chsnet/error.hpp"
#include "chsnet/rng.hpp"

namespace chsnet {

void AugmentParams::validate() const {
  require(scale_min > 0.0 && scale_min <= scale_max, ErrorKind::invalid_argument,
          "scale range must satisfy 0 < min <= max");
  require(crop_size > 0, ErrorKind::invalid_argument, "crop_size must be positive");
  require(hflip_prob >= 0.0 && hflip_prob <= 1.0, ErrorKind::invalid_argument,
          "hflip_prob must lie in [0, 1]");
}

Augmented augment(const cv::Mat& image, const PointAnnotations& ann, const AugmentParams& params,
                  std::uint64_t seed) {
  params.validate();
  require(image.cols == ann.image_width && image.rows == ann.image_height, ErrorKind::shape,
          "augment: annotation size does not match the image");
  Rng rng(seed);
  const double scale = rng.uniform(params.scale_min, params.scale_max);
  const int scaled_w = std::max(1, static_cast<int>(std::lround(image.cols * scale)));
  const int scaled_h = std::max(1, static_cast<int>(std::lround(image.rows * scale)));
  cv::Mat scaled = image;
  if (scaled_w != image.cols || scaled_h != image.rows)
    cv::resize(image, scaled, cv::Size(scaled_w, scaled_h), 0, 0, cv::INTER_LINEAR);
  const double sx = static_cast<double>(scaled_w) / image.cols;
  const double sy = static_cast<double>(scaled_h) / image.rows;

  const int crop = params.crop_size;
  const int ox = scaled_w > crop ? static_cast<int>(rng.range(0, scaled_w - crop)) : 0;
  const int oy = scaled_h > crop ? static_cast<int>(rng.range(0, scaled_h - crop)) : 0;
  const bool flip = rng.bernoulli(params.hflip_prob);

  Augmented out;
  out.image = cv::Mat::zeros(crop, crop, image.type());
  const int copy_w = std::min(crop, scaled_w - ox), copy_h = std::min(crop, scaled_h - oy);
  scaled(cv::Rect(ox, oy, copy_w, copy_h)).copyTo(out.image(cv::Rect(0, 0, copy_w, copy_h)));
  if (flip) cv::flip(out.image, out.image, 1);

  out.annotations.image_width = crop;
  out.annotations.image_height = crop;
  for (const Point& p : ann.points) {
    Point q{p.x * sx - ox, p.y * sy - oy};
    if (q.x < 0.0 || q.x >= crop || q.y < 0.0 || q.y >= crop) continue;
    if (flip) q.x = std::max(0.0, (crop - 1) - q.x);
    out.annotations.points.push_back(q);
  }
  return out;
}

}  // namespace chsnet
