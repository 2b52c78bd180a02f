#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <omp.h>

#include "chsnet/error.hpp"
#include "chsnet/rng.hpp"
#include "chsnet/train_eval.hpp"

namespace chsnet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kModelStream = 0x6d6f64656c;  // "model"
constexpr std::uint64_t kOrderStream = 0x6f72646572;  // "order"
constexpr std::uint64_t kAugmentStream = 0x61756700;  // "aug"

bool all_finite(const Tensor& t) {
  for (double v : t.values())
    if (!std::isfinite(v)) return false;
  return true;
}

std::ofstream open_log(const fs::path& path, bool append) {
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  require(out.good(), ErrorKind::io, "cannot open log " + path.string());
  return out;
}

}  // namespace

std::string to_string(LossMode mode) { return mode == LossMode::chs ? "chs" : "plain"; }

LossMode parse_loss_mode(const std::string& name) {
  if (name == "chs") return LossMode::chs;
  if (name == "plain") return LossMode::plain;
  fail(ErrorKind::invalid_argument, "unknown loss mode '" + name + "'");
}

void TrainConfig::validate(const ModelConfig& model) const {
  require(learning_rate > 0.0, ErrorKind::invalid_argument, "learning_rate must be positive");
  require(weight_decay >= 0.0, ErrorKind::invalid_argument, "weight_decay must be non-negative");
  require(max_epochs >= 1, ErrorKind::invalid_argument, "max_epochs must be >= 1");
  require(batch_size >= 1, ErrorKind::invalid_argument, "batch_size must be >= 1");
  require(delta_max >= 0.0 && delta_max <= 1.0, ErrorKind::invalid_argument,
          "delta_max must lie in [0, 1]");
  require(alpha_max >= 0.0 && alpha_max <= 1.0, ErrorKind::invalid_argument,
          "alpha_max must lie in [0, 1]");
  require(crop_size % model.encoder_stride == 0, ErrorKind::invalid_argument,
          "crop_size " + std::to_string(crop_size) + " is not divisible by encoder stride " +
              std::to_string(model.encoder_stride));
  augment_params().validate();
}

AugmentParams TrainConfig::augment_params() const {
  return {scale_min, scale_max, crop_size, hflip_prob};
}

json TrainConfig::to_json() const {
  return json{{"learning_rate", learning_rate}, {"weight_decay", weight_decay},
              {"max_epochs", max_epochs},       {"lr_schedule", to_string(lr_schedule)},
              {"crop_size", crop_size},         {"scale_min", scale_min},
              {"scale_max", scale_max},         {"hflip_prob", hflip_prob},
              {"batch_size", batch_size},       {"seed", seed},
              {"delta_max", delta_max},         {"alpha_max", alpha_max},
              {"reduction", to_string(reduction)}, {"loss", to_string(loss)},
              {"kernel_size", kernel.size},     {"kernel_sigma", kernel.sigma},
              {"deterministic", deterministic}};
}

TrainResult train(const ModelConfig& model_config, const TrainConfig& config, const Dataset& data,
                  const fs::path& out_dir, const TrainOptions& options) {
  config.validate(model_config);
  require(!data.train.empty(), ErrorKind::invalid_argument, "training split is empty");
  if (config.deterministic) omp_set_dynamic(0);
  fs::create_directories(out_dir);

  ChsNet model(model_config, derive_seed(config.seed, kModelStream));
  AdamW optimizer(model.params(), {.weight_decay = config.weight_decay});
  const int stride = model_config.output_stride();
  const int total = config.max_epochs;

  TrainResult result;
  int start_epoch = 0;
  if (options.resume_from) {
    const Checkpoint ckpt = load_checkpoint(*options.resume_from);
    require(ckpt.state.total_epochs == total, ErrorKind::config,
            "resume: checkpoint was trained for T = " + std::to_string(ckpt.state.total_epochs) +
                ", config asks for " + std::to_string(total));
    require(ckpt.state.train_config.value("seed", config.seed) == config.seed, ErrorKind::config,
            "resume: checkpoint seed differs from the configured seed");
    restore_checkpoint(ckpt, model, &optimizer);
    start_epoch = ckpt.state.epoch;
    result.best_val_mae = ckpt.state.best_val_mae;
  }
  const bool append = options.resume_from.has_value();
  auto metrics_log = open_log(out_dir / "metrics.jsonl", append);
  auto supervision_log = open_log(out_dir / "supervision.jsonl", append);
  auto steps_log = open_log(out_dir / "steps.jsonl", append);
  result.last_checkpoint = out_dir / "last.ckpt";
  result.best_checkpoint = out_dir / "best.ckpt";

  const int end_epoch = options.stop_after_epoch > 0 ? std::min(total, options.stop_after_epoch) : total;
  const int n = static_cast<int>(data.train.size());
  const AugmentParams augment_params = config.augment_params();

  for (int epoch = start_epoch + 1; epoch <= end_epoch; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const ScheduleValues sched = schedule(epoch, total, config.delta_max, config.alpha_max);
    const double lr = learning_rate_at(config.lr_schedule, config.learning_rate, epoch, total);
    const std::vector<int> order =
        Rng(derive_seed(config.seed, kOrderStream, static_cast<std::uint64_t>(epoch))).permutation(n);
    const std::uint64_t epoch_seed =
        derive_seed(config.seed, kAugmentStream, static_cast<std::uint64_t>(epoch));

    EpochMetrics m;
    m.epoch = epoch;
    m.delta = sched.delta;
    m.alpha = sched.alpha;
    m.learning_rate = lr;
    int steps = 0;
    for (int begin = 0; begin < n; begin += config.batch_size) {
      const int end = std::min(n, begin + config.batch_size);
      std::vector<cv::Mat> images;
      std::vector<DensityMap> gts;
      for (int k = begin; k < end; ++k) {
        const Sample& s = data.train[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])];
        Augmented a = augment(s.pixels, s.annotations, augment_params,
                              derive_seed(epoch_seed, static_cast<std::uint64_t>(order[static_cast<std::size_t>(k)])));
        gts.push_back(generate_density_map(a.annotations, config.kernel, stride));
        images.push_back(std::move(a.image));
      }
      const Tensor x = images_to_tensor(images);
      const Prediction pred = model.forward(x, Mode::train);
      auto diverged = [&](double conv_term, double tran_term) {
        std::ostringstream os;
        os << "non-finite loss at epoch " << epoch << ", batch " << steps << " (delta_i "
           << sched.delta << ", alpha_i " << sched.alpha << ", lr " << lr << ", conv term "
           << conv_term << ", tran term " << tran_term << ")";
        fail(ErrorKind::numeric, os.str());
      };
      if (!all_finite(pred.conv) || !all_finite(pred.tran))
        diverged(std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN());
      const BatchLoss loss = config.loss == LossMode::plain
                                 ? dual_mse_loss_batch(pred, gts, config.reduction)
                                 : chs_loss_batch(pred, gts, sched.delta, sched.alpha, config.reduction);
      if (!std::isfinite(loss.loss)) diverged(loss.conv_loss, loss.tran_loss);
      model.zero_grad();
      model.backward(loss.grad_conv, loss.grad_tran);
      optimizer.step(lr);

      steps_log << json{{"epoch", epoch}, {"step", optimizer.steps()}, {"loss", loss.loss}}.dump() << '\n';
      result.step_losses.push_back(loss.loss);
      m.train_loss += loss.loss;
      m.conv_loss += loss.conv_loss;
      m.tran_loss += loss.tran_loss;
      m.mask_overlap += loss.mask_overlap;
      ++steps;
    }
    m.train_loss /= steps;
    m.conv_loss /= steps;
    m.tran_loss /= steps;
    m.mask_overlap /= steps;

    if (!data.val.empty()) {
      const auto reports = evaluate_model(model, data.val);
      m.val_mae_conv = reports[0].mae;
      m.val_mae_tran = reports[1].mae;
      m.val_mae = reports[2].mae;
      m.val_mse = reports[2].mse;
    }
    result.epochs.push_back(m);

    metrics_log << json{{"epoch", m.epoch},
                        {"delta_i", m.delta},
                        {"alpha_i", m.alpha},
                        {"lr", m.learning_rate},
                        {"train_loss", m.train_loss},
                        {"val_mae", m.val_mae},
                        {"val_mse", m.val_mse},
                        {"val_mae_conv", m.val_mae_conv},
                        {"val_mae_tran", m.val_mae_tran}}
                       .dump()
                << '\n';
    supervision_log << json{{"epoch", m.epoch},
                            {"delta_i", m.delta},
                            {"alpha_i", m.alpha},
                            {"mask_overlap", m.mask_overlap},
                            {"conv_loss", m.conv_loss},
                            {"tran_loss", m.tran_loss}}
                           .dump()
                    << '\n';
    metrics_log.flush();
    supervision_log.flush();
    steps_log.flush();

    TrainingState state;
    state.epoch = epoch;
    state.total_epochs = total;
    state.delta = sched.delta;
    state.alpha = sched.alpha;
    state.delta_max = config.delta_max;
    state.alpha_max = config.alpha_max;
    state.train_config = config.to_json();
    const bool improved = result.best_val_mae < 0.0 || m.val_mae < result.best_val_mae;
    if (improved) result.best_val_mae = m.val_mae;
    state.best_val_mae = result.best_val_mae;
    const Checkpoint ckpt = capture_checkpoint(model, &optimizer, state);
    save_checkpoint(result.last_checkpoint, ckpt);
    if (improved) save_checkpoint(result.best_checkpoint, ckpt);

    if (options.verbose) {
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      std::cerr << "epoch " << epoch << "/" << total << "  loss " << m.train_loss << "  val MAE "
                << m.val_mae << " (conv " << m.val_mae_conv << ", tran " << m.val_mae_tran
                << ")  delta " << m.delta << "  alpha " << m.alpha << "  " << secs << "s\n";
    }
  }
  return result;
}

}  // namespace chsnet
