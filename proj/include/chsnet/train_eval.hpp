#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chsnet/augment.hpp"
#include "chsnet/checkpoint.hpp"
#include "chsnet/dataset.hpp"
#include "chsnet/model.hpp"
#include "chsnet/optimizer.hpp"
#include "chsnet/supervision.hpp"

namespace chsnet {

// `plain` trains both heads against the ground truth with the independent
// dual-MSE loss; it exists as the reference for the degenerate schedule.
enum class LossMode { chs, plain };

std::string to_string(LossMode mode);
LossMode parse_loss_mode(const std::string& name);

struct TrainConfig {
  double learning_rate = 4.0e-5;
  double weight_decay = 1.0e-5;
  int max_epochs = 50;
  LrSchedule lr_schedule = LrSchedule::cosine;
  int crop_size = 128;
  double scale_min = 0.8;
  double scale_max = 1.2;
  double hflip_prob = 0.5;
  int batch_size = 8;
  std::uint64_t seed = 0;
  double delta_max = 0.1;
  double alpha_max = 1.0;
  Reduction reduction = Reduction::mean;
  LossMode loss = LossMode::chs;
  GaussianKernel kernel;
  bool deterministic = true;

  void validate(const ModelConfig& model) const;
  AugmentParams augment_params() const;
  nlohmann::json to_json() const;
};

struct EpochMetrics {
  int epoch = 0;
  double delta = 0.0;
  double alpha = 0.0;
  double learning_rate = 0.0;
  double train_loss = 0.0;
  double conv_loss = 0.0;
  double tran_loss = 0.0;
  double mask_overlap = 0.0;
  double val_mae = 0.0;  // averaged head
  double val_mse = 0.0;
  double val_mae_conv = 0.0;
  double val_mae_tran = 0.0;
};

struct TrainOptions {
  std::optional<std::filesystem::path> resume_from;
  // Stop after this epoch (0 runs to max_epochs). The schedule still uses T.
  int stop_after_epoch = 0;
  bool verbose = false;
};

struct TrainResult {
  std::vector<EpochMetrics> epochs;
  std::vector<double> step_losses;
  std::filesystem::path last_checkpoint;
  std::filesystem::path best_checkpoint;
  double best_val_mae = -1.0;
};

// Files written to out_dir:
//   metrics.jsonl      {epoch, delta_i, alpha_i, lr, train_loss, val_mae, val_mse, ...} per epoch
//   supervision.jsonl  {epoch, delta_i, alpha_i, mask_overlap, conv_loss, tran_loss} per epoch
//   steps.jsonl        {epoch, step, loss} per optimizer step
//   last.ckpt, best.ckpt (best = lowest averaged-head validation MAE)
// Logs are appended when resuming, truncated otherwise.
TrainResult train(const ModelConfig& model_config, const TrainConfig& config, const Dataset& data,
                  const std::filesystem::path& out_dir, const TrainOptions& options = {});

enum class EvalHead { conv, tran, average };

std::string to_string(EvalHead head);
EvalHead parse_eval_head(const std::string& name);

struct CountErrors {
  double mae = 0.0;
  double mse = 0.0;  // root of the mean squared count error
};

CountErrors count_errors(std::span<const double> predicted, std::span<const double> truth);

// true = hard. The floor(n/2) images with the most people are hard; ties in
// count are broken by lower index first.
std::vector<bool> hard_split(std::span<const double> true_counts);

struct EvalReport {
  EvalHead head = EvalHead::average;
  double mae = 0.0;
  double mse = 0.0;
  std::vector<std::pair<double, double>> counts;  // (predicted, true) per image
  double easy_mae = 0.0, easy_mse = 0.0;
  double hard_mae = 0.0, hard_mse = 0.0;
  std::size_t n_easy = 0, n_hard = 0;
};

EvalReport make_report(EvalHead head, std::span<const double> predicted,
                       std::span<const double> truth);

// Evaluation-mode forward over the samples in batches; returns reports for
// conv, tran and average (in that order). The true count is the number of
// annotation points.
std::array<EvalReport, 3> evaluate_model(ChsNet& model, std::span<const Sample> samples,
                                         int batch_size = 4);

EvalReport evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset_dir,
                    EvalHead head);

// Rebuilds a model from a checkpoint file.
ChsNet load_model(const std::filesystem::path& checkpoint);

}  // namespace chsnet
