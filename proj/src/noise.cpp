#include "chsnet/noise.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "chsnet/error.hpp"
#include "chsnet/rng.hpp"

namespace chsnet {

namespace {

constexpr std::uint64_t kMissingStream = 0x6d697373;  // "miss"
constexpr std::uint64_t kShiftStream = 0x73686966;    // "shif"

double clamp_below(double v, int limit) {
  return std::clamp(v, 0.0, std::nextafter(static_cast<double>(limit), 0.0));
}

}  // namespace

void NoiseSpec::validate() const {
  require(missing_rate >= 0.0 && missing_rate <= 1.0, ErrorKind::invalid_argument,
          "missing_rate must lie in [0, 1], got " + std::to_string(missing_rate));
  require(shift_sigma >= 0.0, ErrorKind::invalid_argument,
          "shift_sigma must be non-negative, got " + std::to_string(shift_sigma));
}

std::size_t missing_count(double rate, std::size_t n) {
  const auto k = static_cast<std::size_t>(std::floor(rate * static_cast<double>(n) + 1e-9));
  return std::min(k, n);
}

MissingResult inject_missing(const PointAnnotations& ann, double rate, std::uint64_t seed) {
  require(rate >= 0.0 && rate <= 1.0, ErrorKind::invalid_argument,
          "missing rate must lie in [0, 1], got " + std::to_string(rate));
  const std::size_t n = ann.count();
  const std::size_t k = missing_count(rate, n);

  std::vector<int> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
  Rng rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(order[i], order[j]);
  }

  MissingResult result;
  result.removed_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(result.removed_indices.begin(), result.removed_indices.end());
  std::vector<bool> removed(n, false);
  for (int idx : result.removed_indices) removed[static_cast<std::size_t>(idx)] = true;

  result.corrupted.image_width = ann.image_width;
  result.corrupted.image_height = ann.image_height;
  for (std::size_t i = 0; i < n; ++i)
    if (!removed[i]) result.corrupted.points.push_back(ann.points[i]);
  return result;
}

ShiftResult inject_shift(const PointAnnotations& ann, double sigma, std::uint64_t seed) {
  require(sigma >= 0.0, ErrorKind::invalid_argument,
          "shift sigma must be non-negative, got " + std::to_string(sigma));
  ShiftResult result;
  result.corrupted = ann;
  result.applied_shifts.reserve(ann.count());
  Rng rng(seed);
  for (Point& p : result.corrupted.points) {
    const double dx = sigma * rng.normal();
    const double dy = sigma * rng.normal();
    const Point moved{clamp_below(p.x + dx, ann.image_width), clamp_below(p.y + dy, ann.image_height)};
    result.applied_shifts.push_back({moved.x - p.x, moved.y - p.y});
    p = moved;
  }
  return result;
}

CorruptionResult corrupt(const PointAnnotations& ann, const NoiseSpec& spec, std::uint64_t item) {
  spec.validate();
  auto missing = inject_missing(ann, spec.missing_rate, derive_seed(spec.seed, kMissingStream, item));
  auto shifted = inject_shift(missing.corrupted, spec.shift_sigma,
                              derive_seed(spec.seed, kShiftStream, item));
  CorruptionResult result;
  result.corrupted = std::move(shifted.corrupted);
  result.record.removed_indices = std::move(missing.removed_indices);
  result.record.applied_shifts = std::move(shifted.applied_shifts);
  return result;
}

std::string format_corruption_record(const std::string& image, const CorruptionRecord& record) {
  nlohmann::json doc;
  doc["image"] = image;
  doc["removed_indices"] = record.removed_indices;
  nlohmann::json shifts = nlohmann::json::array();
  for (const Point& s : record.applied_shifts) shifts.push_back({s.x, s.y});
  doc["applied_shifts"] = std::move(shifts);
  return doc.dump();
}

}  // namespace chsnet
