#include "chsnet/density_map.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "chsnet/error.hpp"

namespace chsnet {

void PointAnnotations::validate() const {
  require(image_width > 0 && image_height > 0, ErrorKind::invalid_argument,
          "annotation image size must be positive, got " + std::to_string(image_width) + "x" +
              std::to_string(image_height));
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Point& p = points[i];
    if (!contains(p)) {
      std::ostringstream os;
      os << "point " << i << " (" << p.x << ", " << p.y << ") lies outside the " << image_width
         << "x" << image_height << " image";
      fail(ErrorKind::invalid_argument, os.str());
    }
  }
}

DensityMap::DensityMap(int h, int w, int cell_stride, double fill)
    : height(h), width(w), stride(cell_stride) {
  require(h >= 0 && w >= 0 && cell_stride > 0, ErrorKind::invalid_argument,
          "density map dimensions must be non-negative and stride positive");
  cells.assign(static_cast<std::size_t>(h) * w, fill);
}

DensityMap generate_density_map(const PointAnnotations& ann, const GaussianKernel& kernel,
                                int stride) {
  require(kernel.size > 0 && kernel.size % 2 == 1, ErrorKind::invalid_argument,
          "kernel size must be odd and positive, got " + std::to_string(kernel.size));
  require(kernel.sigma > 0.0, ErrorKind::invalid_argument, "kernel sigma must be positive");
  require(stride > 0, ErrorKind::invalid_argument, "stride must be positive");
  ann.validate();
  require(ann.image_width % stride == 0 && ann.image_height % stride == 0,
          ErrorKind::invalid_argument,
          "stride " + std::to_string(stride) + " does not divide image size " +
              std::to_string(ann.image_width) + "x" + std::to_string(ann.image_height));

  const int w = ann.image_width, h = ann.image_height;
  const int radius = kernel.size / 2;
  std::vector<double> profile(static_cast<std::size_t>(kernel.size));
  for (int i = -radius; i <= radius; ++i)
    profile[static_cast<std::size_t>(i + radius)] =
        std::exp(-0.5 * i * i / (kernel.sigma * kernel.sigma));

  DensityMap full(h, w, 1);
  for (const Point& p : ann.points) {
    const int cx = std::clamp(static_cast<int>(std::floor(p.x + 0.5)), 0, w - 1);
    const int cy = std::clamp(static_cast<int>(std::floor(p.y + 0.5)), 0, h - 1);
    const int x0 = std::max(0, cx - radius), x1 = std::min(w - 1, cx + radius);
    const int y0 = std::max(0, cy - radius), y1 = std::min(h - 1, cy + radius);
    double mass = 0.0;
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        mass += profile[static_cast<std::size_t>(y - cy + radius)] *
                profile[static_cast<std::size_t>(x - cx + radius)];
    const double norm = 1.0 / mass;
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        full.at(y, x) += profile[static_cast<std::size_t>(y - cy + radius)] *
                         profile[static_cast<std::size_t>(x - cx + radius)] * norm;
  }
  return count_preserving_downsample(full, stride);
}

DensityMap count_preserving_downsample(const DensityMap& map, int factor) {
  require(factor > 0, ErrorKind::invalid_argument, "downsample factor must be positive");
  require(map.height % factor == 0 && map.width % factor == 0, ErrorKind::invalid_argument,
          "downsample factor " + std::to_string(factor) + " does not divide map size " +
              std::to_string(map.height) + "x" + std::to_string(map.width));
  if (factor == 1) return map;
  DensityMap out(map.height / factor, map.width / factor, map.stride * factor);
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x) out.at(y / factor, x / factor) += map.at(y, x);
  return out;
}

double total_count(const DensityMap& map) {
  double sum = 0.0;
  for (double v : map.cells) sum += v;
  return sum;
}

void write_density_map(const std::filesystem::path& path, const DensityMap& map) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::io, "cannot open " + path.string() + " for writing");
  out << "chsnet-density-map 1 " << map.height << ' ' << map.width << ' ' << map.stride << '\n';
  char buf[32];
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      std::snprintf(buf, sizeof(buf), "%.17g", map.at(y, x));
      if (x) out << ' ';
      out << buf;
    }
    out << '\n';
  }
  require(out.good(), ErrorKind::io, "failed writing " + path.string());
}

DensityMap read_density_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::io, "cannot open " + path.string());
  std::string magic;
  int version = 0, h = -1, w = -1, stride = 0;
  in >> magic >> version >> h >> w >> stride;
  require(in.good() && magic == "chsnet-density-map" && version == 1 && h >= 0 && w >= 0 &&
              stride > 0,
          ErrorKind::format, path.string() + ": not a density map file");
  DensityMap map(h, w, stride);
  std::string token;
  for (std::size_t i = 0; i < map.size(); ++i) {
    require(static_cast<bool>(in >> token), ErrorKind::format,
            path.string() + ": truncated after " + std::to_string(i) + " values");
    char* end = nullptr;
    map.cells[i] = std::strtod(token.c_str(), &end);
    require(end != nullptr && *end == '\0', ErrorKind::format,
            path.string() + ": bad value '" + token + "'");
  }
  return map;
}

}  // namespace chsnet
