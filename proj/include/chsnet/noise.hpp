#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chsnet/density_map.hpp"

namespace chsnet {

struct NoiseSpec {
  double missing_rate = 0.0;  // fraction of points dropped, in [0, 1]
  double shift_sigma = 0.0;   // per-axis std of the Gaussian offset, pixels
  std::uint64_t seed = 0;

  void validate() const;
};

struct MissingResult {
  PointAnnotations corrupted;
  std::vector<int> removed_indices;  // ascending, into the input point list
};

struct ShiftResult {
  PointAnnotations corrupted;
  std::vector<Point> applied_shifts;  // realised displacement after clamping
};

// Number of points removed for a rate: floor(rate * n). A 1e-9 slack absorbs
// representation error so that e.g. rate = 0.29, n = 100 removes 29.
std::size_t missing_count(double rate, std::size_t n);

// Removes exactly missing_count(rate, N) points chosen uniformly without
// replacement (partial Fisher-Yates on the seeded stream). Survivors keep
// their relative order.
MissingResult inject_missing(const PointAnnotations& ann, double rate, std::uint64_t seed);

// Adds an independent N(0, sigma^2) offset to each coordinate, then clamps
// the point into [0, width) x [0, height).
ShiftResult inject_shift(const PointAnnotations& ann, double sigma, std::uint64_t seed);

struct CorruptionRecord {
  std::vector<int> removed_indices;
  std::vector<Point> applied_shifts;  // one per surviving point
};

struct CorruptionResult {
  PointAnnotations corrupted;
  CorruptionRecord record;
};

// Missing annotations first, then location shifts on the survivors. Each
// stage draws from its own stream derived from spec.seed and `item`.
CorruptionResult corrupt(const PointAnnotations& ann, const NoiseSpec& spec, std::uint64_t item);

// One manifest line: {"image": ..., "removed_indices": [...], "applied_shifts": [[dx, dy], ...]}
std::string format_corruption_record(const std::string& image, const CorruptionRecord& record);

}  // namespace chsnet
