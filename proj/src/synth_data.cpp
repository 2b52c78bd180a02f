#include "chsnet/synth_data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <opencv2/imgcodecs.hpp>
#include <vector>

#include "chsnet/annotations.hpp"
#include "chsnet/error.hpp"
#include "chsnet/rng.hpp"

namespace chsnet {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSceneStream = 0x7363656e;  // "scen"
constexpr int kPlacementAttempts = 2000;

using Rgb = std::array<double, 3>;

Rgb random_color(Rng& rng, double lo, double hi) {
  return {rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
}

std::vector<Rgb> render_background(const SceneSpec& spec, Rng& rng) {
  const int n = spec.image_size;
  std::vector<Rgb> pixels(static_cast<std::size_t>(n) * n);
  const Rgb base = random_color(rng, 0.55, 0.9);
  switch (spec.background) {
    case BackgroundTexture::flat:
      std::fill(pixels.begin(), pixels.end(), base);
      break;
    case BackgroundTexture::gradient: {
      const Rgb other = random_color(rng, 0.45, 0.95);
      const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double cx = std::cos(angle), sy = std::sin(angle);
      const double span = (std::abs(cx) + std::abs(sy)) * (n - 1);
      const double offset = std::min(0.0, cx) * (n - 1) + std::min(0.0, sy) * (n - 1);
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
          const double t = span > 0.0 ? (x * cx + y * sy - offset) / span : 0.0;
          Rgb& p = pixels[static_cast<std::size_t>(y) * n + x];
          for (int c = 0; c < 3; ++c) p[c] = (1.0 - t) * base[c] + t * other[c];
        }
      break;
    }
    case BackgroundTexture::noise:
      for (Rgb& p : pixels) {
        const double jitter = rng.uniform(-0.08, 0.08);
        for (int c = 0; c < 3; ++c) p[c] = base[c] + jitter + rng.uniform(-0.03, 0.03);
      }
      break;
  }
  return pixels;
}

void draw_head(std::vector<Rgb>& pixels, int size, const Point& centre, double radius, Rng& rng) {
  const double aspect = rng.uniform(0.8, 1.25);
  const double angle = rng.uniform(0.0, std::numbers::pi);
  const double contrast = rng.uniform(0.35, 0.65);
  const Rgb tint = random_color(rng, 0.85, 1.0);
  const double rx = radius, ry = radius * aspect;
  const double ca = std::cos(angle), sa = std::sin(angle);
  const double reach = std::max(rx, ry) + 2.0;
  const int x0 = std::max(0, static_cast<int>(std::floor(centre.x - reach)));
  const int x1 = std::min(size - 1, static_cast<int>(std::ceil(centre.x + reach)));
  const int y0 = std::max(0, static_cast<int>(std::floor(centre.y - reach)));
  const int y1 = std::min(size - 1, static_cast<int>(std::ceil(centre.y + reach)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - centre.x, dy = y - centre.y;
      const double u = (dx * ca + dy * sa) / rx;
      const double v = (-dx * sa + dy * ca) / ry;
      const double d = std::sqrt(u * u + v * v);
      // Logistic edge about 0.6 px wide.
      const double alpha = 1.0 / (1.0 + std::exp((d - 1.0) * radius / 0.6));
      if (alpha < 1e-4) continue;
      Rgb& p = pixels[static_cast<std::size_t>(y) * size + x];
      for (int c = 0; c < 3; ++c) {
        const double head = p[c] * (1.0 - contrast) * tint[c];
        p[c] = (1.0 - alpha) * p[c] + alpha * head;
      }
    }
  }
}

}  // namespace

std::string to_string(BackgroundTexture texture) {
  switch (texture) {
    case BackgroundTexture::flat: return "flat";
    case BackgroundTexture::gradient: return "gradient";
    case BackgroundTexture::noise: return "noise";
  }
  return "flat";
}

BackgroundTexture parse_background(const std::string& name) {
  if (name == "flat") return BackgroundTexture::flat;
  if (name == "gradient") return BackgroundTexture::gradient;
  if (name == "noise") return BackgroundTexture::noise;
  fail(ErrorKind::invalid_argument, "unknown background texture '" + name + "'");
}

void SceneSpec::validate() const {
  require(image_size >= 64, ErrorKind::invalid_argument,
          "scene image_size must be >= 64, got " + std::to_string(image_size));
  require(count_min >= 0 && count_min <= count_max, ErrorKind::invalid_argument,
          "scene count range must satisfy 0 <= min <= max");
  require(radius_min > 0.0 && radius_min <= radius_max, ErrorKind::invalid_argument,
          "scene head radius range must satisfy 0 < min <= max");
}

Scene render_scene(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const int size = spec.image_size;
  std::vector<Rgb> pixels = render_background(spec, rng);
  const int count = static_cast<int>(rng.range(spec.count_min, spec.count_max));

  // A disc packing bound rules out hopeless requests before sampling.
  const double min_sep = spec.radius_min;
  const double disc = std::numbers::pi * 0.25 * min_sep * min_sep;
  require(count * disc <= 0.7 * size * size, ErrorKind::invalid_argument,
          "cannot place " + std::to_string(count) + " heads " + std::to_string(min_sep) +
              " px apart in a " + std::to_string(size) + "x" + std::to_string(size) + " image");

  Scene scene;
  scene.annotations.image_width = size;
  scene.annotations.image_height = size;
  auto& centres = scene.annotations.points;
  centres.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
      const Point c{rng.uniform(0.0, size), rng.uniform(0.0, size)};
      placed = std::none_of(centres.begin(), centres.end(), [&](const Point& o) {
        return std::hypot(o.x - c.x, o.y - c.y) < min_sep;
      });
      if (placed) centres.push_back(c);
    }
    require(placed, ErrorKind::invalid_argument,
            "placement failed after " + std::to_string(i) + " of " + std::to_string(count) +
                " heads; lower count_max or radius_min");
  }
  for (const Point& c : centres) draw_head(pixels, size, c, rng.uniform(spec.radius_min, spec.radius_max), rng);

  scene.image = cv::Mat(size, size, CV_8UC3);
  for (int y = 0; y < size; ++y) {
    auto* row = scene.image.ptr<cv::Vec3b>(y);
    for (int x = 0; x < size; ++x) {
      const Rgb& p = pixels[static_cast<std::size_t>(y) * size + x];
      for (int c = 0; c < 3; ++c)
        row[x][c] = static_cast<unsigned char>(std::lround(std::clamp(p[c], 0.0, 1.0) * 255.0));
    }
  }
  return scene;
}

DatasetSummary build_dataset(const SceneSpec& spec, int n_train, int n_val, const NoiseSpec& noise,
                             const fs::path& dir, bool overwrite) {
  spec.validate();
  noise.validate();
  require(n_train > 0 && n_val > 0, ErrorKind::invalid_argument,
          "n_train and n_val must both be positive");
  if (fs::exists(dir)) {
    require(fs::is_directory(dir), ErrorKind::io, dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir)) {
      require(overwrite, ErrorKind::io,
              "dataset directory " + dir.string() + " is not empty (set overwrite to replace it)");
      fs::remove_all(dir);
    }
  }
  fs::create_directories(dir / DatasetLayout::kImages);

  std::vector<AnnotationRecord> train, train_clean, val;
  std::ofstream manifest(dir / DatasetLayout::kNoiseManifest);
  require(manifest.good(), ErrorKind::io, "cannot write noise manifest in " + dir.string());

  DatasetSummary summary{n_train, n_val, 0, 0};
  const int total = n_train + n_val;
  for (int i = 0; i < total; ++i) {
    SceneSpec item = spec;
    item.seed = derive_seed(spec.seed, kSceneStream, static_cast<std::uint64_t>(i));
    Scene scene = render_scene(item);
    char name[32];
    std::snprintf(name, sizeof(name), "%s/%04d.png", DatasetLayout::kImages, i);
    require(cv::imwrite((dir / name).string(), scene.image), ErrorKind::io,
            "failed to write " + (dir / name).string());

    AnnotationRecord clean{name, scene.annotations};
    if (i < n_train) {
      auto corrupted = corrupt(scene.annotations, noise, static_cast<std::uint64_t>(i));
      manifest << format_corruption_record(name, corrupted.record) << '\n';
      summary.clean_points += clean.annotations.count();
      summary.train_points += corrupted.corrupted.count();
      train.push_back({name, std::move(corrupted.corrupted)});
      train_clean.push_back(std::move(clean));
    } else {
      val.push_back(std::move(clean));
    }
  }
  require(manifest.good(), ErrorKind::io, "failed writing noise manifest");

  write_annotation_file(dir / DatasetLayout::kTrain, train);
  write_annotation_file(dir / DatasetLayout::kTrainClean, train_clean);
  write_annotation_file(dir / DatasetLayout::kVal, val);

  nlohmann::json meta;
  meta["format_version"] = 1;
  meta["scene"] = {{"image_size", spec.image_size},
                   {"count_min", spec.count_min},
                   {"count_max", spec.count_max},
                   {"radius_min", spec.radius_min},
                   {"radius_max", spec.radius_max},
                   {"background", to_string(spec.background)},
                   {"seed", spec.seed}};
  meta["noise"] = {{"missing_rate", noise.missing_rate},
                   {"shift_sigma", noise.shift_sigma},
                   {"seed", noise.seed}};
  meta["n_train"] = n_train;
  meta["n_val"] = n_val;
  std::ofstream(dir / DatasetLayout::kMeta) << meta.dump(2) << '\n';
  return summary;
}

}  // namespace chsnet
