#include <doctest.h>

#include <json.hpp>
#include <numeric>
#include <set>

#include "chsnet/error.hpp"
#include "chsnet/noise.hpp"
#include "chsnet/rng.hpp"

using namespace chsnet;

namespace {

PointAnnotations grid_points(int n, int size = 256) {
  PointAnnotations ann{{}, size, size};
  for (int i = 0; i < n; ++i) ann.points.push_back({10.0 + (i % 20) * 11.0, 10.0 + (i / 20) * 11.0});
  return ann;
}

}  // namespace

TEST_SUITE("noise") {
  TEST_CASE("rate 0 and rate 1") {
    const auto ann = grid_points(30);
    const auto none = inject_missing(ann, 0.0, 1);
    CHECK(none.corrupted == ann);
    CHECK(none.removed_indices.empty());
    const auto all = inject_missing(ann, 1.0, 1);
    CHECK(all.corrupted.count() == 0);
    std::vector<int> every(30);
    std::iota(every.begin(), every.end(), 0);
    CHECK(all.removed_indices == every);
  }

  TEST_CASE("exactly floor(rate * N) points are removed") {
    CHECK(inject_missing(grid_points(100), 0.5, 3).corrupted.count() == 50);
    Rng rng(4);
    for (int t = 0; t < 300; ++t) {
      const int n = static_cast<int>(rng.range(0, 150));
      const double rate = t % 10 == 0 ? (t % 20) / 20.0 : rng.uniform();
      const auto ann = grid_points(n);
      const auto out = inject_missing(ann, rate, static_cast<std::uint64_t>(t));
      const auto k = static_cast<std::size_t>(std::floor(rate * n + 1e-9));
      CHECK(out.removed_indices.size() == k);
      CHECK(out.corrupted.count() == static_cast<std::size_t>(n) - k);
      CHECK(std::is_sorted(out.removed_indices.begin(), out.removed_indices.end()));
      CHECK(std::set<int>(out.removed_indices.begin(), out.removed_indices.end()).size() == k);
      // Survivors keep their relative order.
      std::size_t j = 0, r = 0;
      for (int i = 0; i < n; ++i) {
        if (r < k && out.removed_indices[r] == i) {
          ++r;
          continue;
        }
        CHECK(out.corrupted.points[j++] == ann.points[static_cast<std::size_t>(i)]);
      }
    }
    CHECK(missing_count(0.1, 100) == 10);
    CHECK(missing_count(0.3, 10) == 3);
  }

  TEST_CASE("corruption is deterministic per seed") {
    const auto ann = grid_points(80);
    CHECK(inject_missing(ann, 0.3, 9).removed_indices == inject_missing(ann, 0.3, 9).removed_indices);
    CHECK(inject_missing(ann, 0.3, 9).removed_indices != inject_missing(ann, 0.3, 10).removed_indices);
    CHECK(inject_shift(ann, 2.0, 9).corrupted == inject_shift(ann, 2.0, 9).corrupted);
    const NoiseSpec spec{0.2, 1.5, 11};
    CHECK(corrupt(ann, spec, 4).corrupted == corrupt(ann, spec, 4).corrupted);
    CHECK(!(corrupt(ann, spec, 4).corrupted == corrupt(ann, spec, 5).corrupted));
  }

  TEST_CASE("shift with sigma 0 is the identity and never changes the count") {
    const auto ann = grid_points(40);
    CHECK(inject_shift(ann, 0.0, 1).corrupted == ann);
    CHECK(inject_shift(ann, 5.0, 1).corrupted.count() == ann.count());
  }

  TEST_CASE("shift sample statistics") {
    PointAnnotations ann{{}, 4096, 4096};
    for (int i = 0; i < 1000; ++i) ann.points.push_back({2048.0, 2048.0});
    const auto out = inject_shift(ann, 8.0, 21);
    double sx = 0, sy = 0, sxx = 0, syy = 0;
    for (const auto& s : out.applied_shifts) {
      sx += s.x;
      sy += s.y;
      sxx += s.x * s.x;
      syy += s.y * s.y;
    }
    const double n = 1000.0;
    const double std_x = std::sqrt(sxx / n - (sx / n) * (sx / n));
    const double std_y = std::sqrt(syy / n - (sy / n) * (sy / n));
    CHECK(std::abs(std_x - 8.0) < 0.8);
    CHECK(std::abs(std_y - 8.0) < 0.8);
  }

  TEST_CASE("shifted points stay inside the image") {
    PointAnnotations ann{{{0, 0}, {31.9, 31.9}, {0, 31}, {16, 16}}, 32, 32};
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      const auto out = inject_shift(ann, 20.0, seed);
      for (const auto& p : out.corrupted.points) CHECK(out.corrupted.contains(p));
      for (std::size_t i = 0; i < ann.count(); ++i) {
        CHECK(out.corrupted.points[i].x == ann.points[i].x + out.applied_shifts[i].x);
        CHECK(out.corrupted.points[i].y == ann.points[i].y + out.applied_shifts[i].y);
      }
    }
  }

  TEST_CASE("invalid parameters are rejected") {
    const auto ann = grid_points(5);
    CHECK_THROWS_AS(inject_missing(ann, -0.1, 1), Error);
    CHECK_THROWS_AS(inject_missing(ann, 1.5, 1), Error);
    CHECK_THROWS_AS(inject_shift(ann, -1.0, 1), Error);
  }

  TEST_CASE("manifest record lists removals and shifts") {
    const auto out = corrupt(grid_points(10), {0.3, 1.0, 2}, 0);
    const auto doc = nlohmann::json::parse(format_corruption_record("images/0000.png", out.record));
    CHECK(doc["image"] == "images/0000.png");
    CHECK(doc["removed_indices"].size() == 3);
    CHECK(doc["applied_shifts"].size() == 7);
  }
}
