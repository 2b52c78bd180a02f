#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace chsnet {

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

// Head-centre annotations for one image, in input-pixel coordinates.
struct PointAnnotations {
  std::vector<Point> points;
  int image_width = 0;
  int image_height = 0;

  std::size_t count() const { return points.size(); }
  bool contains(const Point& p) const {
    return p.x >= 0.0 && p.x < image_width && p.y >= 0.0 && p.y < image_height;
  }
  // Throws if the image size is not positive or any point lies outside it.
  void validate() const;
  bool operator==(const PointAnnotations&) const = default;
};

// Non-negative grid whose sum approximates the number of people. `stride` is
// the number of input pixels covered by one cell along each axis.
struct DensityMap {
  int height = 0;
  int width = 0;
  int stride = 1;
  std::vector<double> cells;

  DensityMap() = default;
  DensityMap(int h, int w, int cell_stride = 1, double fill = 0.0);

  std::size_t size() const { return cells.size(); }
  double& at(int y, int x) { return cells[static_cast<std::size_t>(y) * width + x]; }
  double at(int y, int x) const { return cells[static_cast<std::size_t>(y) * width + x]; }
  bool same_shape(const DensityMap& other) const {
    return height == other.height && width == other.width;
  }
  bool operator==(const DensityMap&) const = default;
};

struct GaussianKernel {
  int size = 15;
  double sigma = 4.0;
};

// Each point is snapped to its nearest pixel and deposits a size x size
// Gaussian window, clipped to the image and renormalised to unit mass. The
// full-resolution map is then block-summed down to `stride`.
DensityMap generate_density_map(const PointAnnotations& ann, const GaussianKernel& kernel,
                                int stride = 1);

// Output cell = sum of the corresponding factor x factor block.
DensityMap count_preserving_downsample(const DensityMap& map, int factor);

double total_count(const DensityMap& map);

// Text format, one header line then one row per line:
//   chsnet-density-map 1 <height> <width> <stride>
// Values are written with 17 significant digits so a reload is bit-identical.
void write_density_map(const std::filesystem::path& path, const DensityMap& map);
DensityMap read_density_map(const std::filesystem::path& path);

}  // namespace chsnet
