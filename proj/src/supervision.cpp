#include "chsnet/supervision.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "chsnet/error.hpp"

namespace chsnet {

std::string to_string(Reduction reduction) {
  return reduction == Reduction::mean ? "mean" : "sum";
}

Reduction parse_reduction(const std::string& name) {
  if (name == "mean") return Reduction::mean;
  if (name == "sum") return Reduction::sum;
  fail(ErrorKind::invalid_argument, "unknown reduction '" + name + "'");
}

namespace {

void require_same_shape(const DensityMap& a, const DensityMap& b, const char* what) {
  require(a.same_shape(b) && a.cells.size() == b.cells.size(), ErrorKind::shape,
          std::string(what) + ": shape mismatch " + std::to_string(a.height) + "x" +
              std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
              std::to_string(b.width));
}

void check_unit_interval(double v, const char* name) {
  require(v >= 0.0 && v <= 1.0, ErrorKind::invalid_argument,
          std::string(name) + " must lie in [0, 1], got " + std::to_string(v));
}

}  // namespace

DeviationMap compute_deviation(const DensityMap& pred, const DensityMap& gt) {
  require_same_shape(pred, gt, "compute_deviation");
  DeviationMap dev{pred.height, pred.width, std::vector<double>(pred.size())};
  for (std::size_t i = 0; i < pred.size(); ++i) dev.cells[i] = std::abs(pred.cells[i] - gt.cells[i]);
  return dev;
}

std::size_t selection_count(double delta, std::size_t cells) {
  const auto k = static_cast<std::size_t>(std::floor(delta * static_cast<double>(cells) + 1e-9));
  return std::min(k, cells);
}

SelectionMask select_mask(const DeviationMap& deviation, double delta) {
  check_unit_interval(delta, "delta");
  const std::size_t n = deviation.cells.size();
  for (double v : deviation.cells)
    require(std::isfinite(v), ErrorKind::numeric, "select_mask: non-finite deviation");
  const std::size_t k = selection_count(delta, n);

  SelectionMask mask{deviation.height, deviation.width, std::vector<std::uint8_t>(n, 0), k};
  if (k == 0) return mask;
  if (k == n) {
    std::fill(mask.cells.begin(), mask.cells.end(), 1);
    return mask;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto& v = deviation.cells;
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return v[a] > v[b] || (v[a] == v[b] && a < b);
                   });
  for (std::size_t i = 0; i < k; ++i) mask.cells[order[i]] = 1;
  return mask;
}

RefinedTarget refine_target(const DensityMap& other_pred, const DensityMap& gt,
                            const SelectionMask& mask, double alpha) {
  require_same_shape(other_pred, gt, "refine_target");
  require(mask.height == gt.height && mask.width == gt.width && mask.cells.size() == gt.size(),
          ErrorKind::shape, "refine_target: mask shape mismatch");
  check_unit_interval(alpha, "alpha");
  RefinedTarget target{gt, alpha};
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double m = mask.cells[i] ? alpha : 0.0;
    target.map.cells[i] = m * other_pred.cells[i] + (1.0 - m) * gt.cells[i];
  }
  return target;
}

double squared_error(const DensityMap& pred, const DensityMap& target, Reduction reduction) {
  require_same_shape(pred, target, "squared_error");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.cells[i] - target.cells[i];
    sum += d * d;
  }
  return reduction == Reduction::mean && pred.size() > 0 ? sum / static_cast<double>(pred.size())
                                                         : sum;
}

ChsLoss chs_loss(const DensityMap& conv_pred, const DensityMap& tran_pred, const DensityMap& gt,
                 double delta, double alpha, Reduction reduction) {
  require_same_shape(conv_pred, gt, "chs_loss");
  require_same_shape(tran_pred, gt, "chs_loss");
  ChsLoss out;
  out.conv.deviation = compute_deviation(conv_pred, gt);
  out.conv.mask = select_mask(out.conv.deviation, delta);
  out.conv.target = refine_target(tran_pred, gt, out.conv.mask, alpha);
  out.conv.loss = squared_error(conv_pred, out.conv.target.map, reduction);

  out.tran.deviation = compute_deviation(tran_pred, gt);
  out.tran.mask = select_mask(out.tran.deviation, delta);
  out.tran.target = refine_target(conv_pred, gt, out.tran.mask, alpha);
  out.tran.loss = squared_error(tran_pred, out.tran.target.map, reduction);

  out.loss = out.conv.loss + out.tran.loss;
  return out;
}

namespace {

void check_batch(const Prediction& pred, std::span<const DensityMap> gts) {
  require(pred.conv.rank() == 4 && pred.conv.same_shape(pred.tran) && pred.conv.dim(1) == 1,
          ErrorKind::shape, "prediction heads must be N x 1 x H x W with identical shapes");
  require(static_cast<std::size_t>(pred.conv.dim(0)) == gts.size() && !gts.empty(),
          ErrorKind::shape, "batch size does not match the number of ground-truth maps");
  for (const auto& g : gts)
    require(g.height == pred.conv.dim(2) && g.width == pred.conv.dim(3), ErrorKind::shape,
            "ground truth " + std::to_string(g.height) + "x" + std::to_string(g.width) +
                " does not match prediction " + shape_string(pred.conv.shape()));
}

DensityMap slice(const Tensor& maps, int n) {
  const int h = maps.dim(2), w = maps.dim(3);
  DensityMap m(h, w);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::copy_n(maps.data() + n * plane, plane, m.cells.begin());
  return m;
}

}  // namespace

BatchLoss chs_loss_batch(const Prediction& pred, std::span<const DensityMap> gts, double delta,
                         double alpha, Reduction reduction) {
  check_batch(pred, gts);
  const int batch = pred.conv.dim(0);
  const std::size_t plane = static_cast<std::size_t>(pred.conv.dim(2)) * pred.conv.dim(3);
  const double cell_scale = reduction == Reduction::mean ? 1.0 / static_cast<double>(plane) : 1.0;
  const double grad_scale = 2.0 * cell_scale / batch;

  BatchLoss out;
  out.grad_conv = Tensor(pred.conv.shape());
  out.grad_tran = Tensor(pred.tran.shape());
  for (int n = 0; n < batch; ++n) {
    const DensityMap conv = slice(pred.conv, n);
    const DensityMap tran = slice(pred.tran, n);
    const ChsLoss item = chs_loss(conv, tran, gts[static_cast<std::size_t>(n)], delta, alpha, reduction);
    out.conv_loss += item.conv.loss;
    out.tran_loss += item.tran.loss;
    if (item.conv.mask.selected > 0) {
      std::size_t both = 0;
      for (std::size_t i = 0; i < plane; ++i) both += item.conv.mask.cells[i] & item.tran.mask.cells[i];
      out.mask_overlap += static_cast<double>(both) / static_cast<double>(item.conv.mask.selected);
    }
    double* gc = out.grad_conv.data() + n * plane;
    double* gt = out.grad_tran.data() + n * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      gc[i] = grad_scale * (conv.cells[i] - item.conv.target.map.cells[i]);
      gt[i] = grad_scale * (tran.cells[i] - item.tran.target.map.cells[i]);
    }
  }
  out.conv_loss /= batch;
  out.tran_loss /= batch;
  out.mask_overlap /= batch;
  out.loss = out.conv_loss + out.tran_loss;
  return out;
}

BatchLoss dual_mse_loss_batch(const Prediction& pred, std::span<const DensityMap> gts,
                              Reduction reduction) {
  check_batch(pred, gts);
  const int batch = pred.conv.dim(0);
  const std::size_t plane = static_cast<std::size_t>(pred.conv.dim(2)) * pred.conv.dim(3);
  const double cell_scale = reduction == Reduction::mean ? 1.0 / static_cast<double>(plane) : 1.0;
  const double grad_scale = 2.0 * cell_scale / batch;

  BatchLoss out;
  out.grad_conv = Tensor(pred.conv.shape());
  out.grad_tran = Tensor(pred.tran.shape());
  for (int n = 0; n < batch; ++n) {
    const double* g = gts[static_cast<std::size_t>(n)].cells.data();
    const double* pc = pred.conv.data() + n * plane;
    const double* pt = pred.tran.data() + n * plane;
    double sc = 0.0, st = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double dc = pc[i] - g[i];
      sc += dc * dc;
      out.grad_conv[n * plane + i] = grad_scale * dc;
    }
    for (std::size_t i = 0; i < plane; ++i) {
      const double dt = pt[i] - g[i];
      st += dt * dt;
      out.grad_tran[n * plane + i] = grad_scale * dt;
    }
    out.conv_loss += reduction == Reduction::mean ? sc / static_cast<double>(plane) : sc;
    out.tran_loss += reduction == Reduction::mean ? st / static_cast<double>(plane) : st;
  }
  out.conv_loss /= batch;
  out.tran_loss /= batch;
  out.loss = out.conv_loss + out.tran_loss;
  return out;
}

ScheduleValues schedule(int epoch, int total_epochs, double delta_max, double alpha_max) {
  require(total_epochs >= 1, ErrorKind::invalid_argument, "schedule needs T >= 1");
  require(epoch >= 0, ErrorKind::invalid_argument, "schedule epoch must be non-negative");
  check_unit_interval(delta_max, "delta_max");
  check_unit_interval(alpha_max, "alpha_max");
  ScheduleValues out;
  if (epoch > total_epochs) {
    std::cerr << "warning: schedule epoch " << epoch << " exceeds T = " << total_epochs
              << "; clamping to T\n";
    epoch = total_epochs;
    out.clamped = true;
  }
  // i / T is exactly 1 at i = T, so the endpoint hits the maxima exactly.
  const double progress = static_cast<double>(epoch) / static_cast<double>(total_epochs);
  out.delta = delta_max * progress;
  out.alpha = alpha_max * progress;
  return out;
}

}  // namespace chsnet
