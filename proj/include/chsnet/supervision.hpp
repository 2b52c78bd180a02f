#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "chsnet/density_map.hpp"
#include "chsnet/model.hpp"

namespace chsnet {

// Cross-head supervision.
//
// For each head h with prediction P_h and the other head's prediction P_o:
//   deviation  E_h = |P_h - G|
//   mask       M_h = the floor(delta * cells) largest entries of E_h
//   target     T_h = alpha * M_h * P_o + (1 - alpha * M_h) * G
//   loss       L   = ||P_conv - T_conv||^2 + ||P_tran - T_tran||^2
// Targets are constants for back-propagation: the other head's prediction
// receives no gradient through T_h.

enum class Reduction { mean, sum };

std::string to_string(Reduction reduction);
Reduction parse_reduction(const std::string& name);

struct DeviationMap {
  int height = 0;
  int width = 0;
  std::vector<double> cells;
};

struct SelectionMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> cells;
  std::size_t selected = 0;
};

struct RefinedTarget {
  DensityMap map;
  double alpha = 0.0;
};

DeviationMap compute_deviation(const DensityMap& pred, const DensityMap& gt);

// floor(delta * cells) with a 1e-9 slack for representation error, so that
// delta = j / cells always selects exactly j.
std::size_t selection_count(double delta, std::size_t cells);

// Exactly selection_count(delta, H*W) ones at the largest deviations. Equal
// deviations are ranked by ascending row-major index.
SelectionMask select_mask(const DeviationMap& deviation, double delta);

RefinedTarget refine_target(const DensityMap& other_pred, const DensityMap& gt,
                            const SelectionMask& mask, double alpha);

// Squared error of one head against a fixed target, summed or averaged over
// cells.
double squared_error(const DensityMap& pred, const DensityMap& target, Reduction reduction);

struct HeadSupervision {
  DeviationMap deviation;
  SelectionMask mask;
  RefinedTarget target;
  double loss = 0.0;
};

struct ChsLoss {
  double loss = 0.0;
  HeadSupervision conv;
  HeadSupervision tran;
};

// Single-image loss. Each head's mask comes from its own deviation, its
// blended target from the other head's prediction.
ChsLoss chs_loss(const DensityMap& conv_pred, const DensityMap& tran_pred, const DensityMap& gt,
                 double delta, double alpha, Reduction reduction = Reduction::mean);

struct BatchLoss {
  double loss = 0.0;       // conv_loss + tran_loss
  double conv_loss = 0.0;  // batch mean of the conv term
  double tran_loss = 0.0;
  double mask_overlap = 0.0;  // batch mean of |M_conv & M_tran| / k, 0 when k = 0
  Tensor grad_conv;           // dL/dP_conv, N x 1 x H x W
  Tensor grad_tran;
};

BatchLoss chs_loss_batch(const Prediction& pred, std::span<const DensityMap> gts, double delta,
                         double alpha, Reduction reduction = Reduction::mean);

// Plain dual-head regression against the ground truth. Written independently
// of chs_loss_batch and used as the reference the delta = 0 / alpha = 0 case
// must reproduce.
BatchLoss dual_mse_loss_batch(const Prediction& pred, std::span<const DensityMap> gts,
                              Reduction reduction = Reduction::mean);

struct ScheduleValues {
  double delta = 0.0;
  double alpha = 0.0;
  bool clamped = false;  // epoch was past the end of training
};

// delta_i = delta_max * i / T and alpha_i = alpha_max * i / T for
// 0 <= i <= T. Epochs past T are clamped to T with a warning on stderr.
ScheduleValues schedule(int epoch, int total_epochs, double delta_max, double alpha_max);

}  // namespace chsnet
