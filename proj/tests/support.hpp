#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "chsnet/layers.hpp"
#include "chsnet/rng.hpp"
#include "chsnet/tensor.hpp"

namespace testing {

inline chsnet::Tensor random_tensor(std::vector<int> shape, std::uint64_t seed, double lo = -1.0,
                                    double hi = 1.0) {
  chsnet::Tensor t(std::move(shape));
  chsnet::Rng rng(seed);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

inline double dot(const chsnet::Tensor& a, const chsnet::Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// |a - f| <= abs_tol, or within rel_tol of the larger magnitude.
inline bool grad_close(double analytic, double numeric, double rel_tol = 1e-3, double abs_tol = 1e-5) {
  const double diff = std::abs(analytic - numeric);
  return diff <= abs_tol || diff <= rel_tol * std::max(std::abs(analytic), std::abs(numeric));
}

struct GradReport {
  std::size_t checked = 0;
  std::size_t failures = 0;
  std::string first_failure;
};

// Central differences of `loss` with respect to every entry of `values`
// (or an evenly spaced subset of at most max_entries), compared against
// `analytic`.
inline void compare_entries(const std::string& name, std::span<double> values,
                            std::span<const double> analytic, const std::function<double()>& loss,
                            GradReport& report, std::size_t max_entries = 64, double h = 1e-5) {
  const std::size_t n = values.size();
  const std::size_t step = std::max<std::size_t>(1, n / max_entries);
  for (std::size_t i = 0; i < n; i += step) {
    const double saved = values[i];
    values[i] = saved + h;
    const double up = loss();
    values[i] = saved - h;
    const double down = loss();
    values[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    ++report.checked;
    if (!grad_close(analytic[i], numeric)) {
      if (report.failures++ == 0)
        report.first_failure = name + "[" + std::to_string(i) + "]: analytic " +
                               std::to_string(analytic[i]) + " numeric " + std::to_string(numeric);
    }
  }
}

// Checks a layer's input and parameter gradients for L = <r, layer(x)>.
inline GradReport check_layer(chsnet::Layer& layer, chsnet::Tensor x, chsnet::Mode mode,
                              std::uint64_t seed) {
  using chsnet::Tensor;
  const Tensor y0 = layer.forward(x, mode);
  const Tensor r = random_tensor(y0.shape(), seed);
  std::vector<chsnet::Param*> params;
  layer.collect_params(params);
  for (auto* p : params) p->grad.fill(0.0);
  layer.forward(x, mode);
  const Tensor gx = layer.backward(r);

  auto loss = [&] { return dot(layer.forward(x, mode), r); };
  GradReport report;
  compare_entries("input", x.values(), gx.values(), loss, report);
  for (auto* p : params) {
    const Tensor g = p->grad;
    compare_entries(p->name, p->value.values(), g.values(), loss, report);
  }
  return report;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() /
           ("chsnet_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

}  // namespace testing
