#include <algorithm>
#include <cmath>
#include <numeric>

#include "chsnet/error.hpp"
#include "chsnet/train_eval.hpp"

namespace chsnet {

std::string to_string(EvalHead head) {
  switch (head) {
    case EvalHead::conv: return "conv";
    case EvalHead::tran: return "tran";
    case EvalHead::average: return "average";
  }
  return "average";
}

EvalHead parse_eval_head(const std::string& name) {
  if (name == "conv") return EvalHead::conv;
  if (name == "tran") return EvalHead::tran;
  if (name == "average") return EvalHead::average;
  fail(ErrorKind::invalid_argument, "unknown evaluation head '" + name + "'");
}

CountErrors count_errors(std::span<const double> predicted, std::span<const double> truth) {
  require(predicted.size() == truth.size(), ErrorKind::shape, "count vectors differ in length");
  require(!truth.empty(), ErrorKind::invalid_argument, "cannot score an empty set");
  double abs_sum = 0.0, sq_sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double e = predicted[i] - truth[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
  }
  const double n = static_cast<double>(truth.size());
  return {abs_sum / n, std::sqrt(sq_sum / n)};
}

std::vector<bool> hard_split(std::span<const double> true_counts) {
  std::vector<std::size_t> order(true_counts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return true_counts[a] > true_counts[b]; });
  std::vector<bool> hard(true_counts.size(), false);
  for (std::size_t i = 0; i < true_counts.size() / 2; ++i) hard[order[i]] = true;
  return hard;
}

EvalReport make_report(EvalHead head, std::span<const double> predicted,
                       std::span<const double> truth) {
  EvalReport report;
  report.head = head;
  const CountErrors all = count_errors(predicted, truth);
  report.mae = all.mae;
  report.mse = all.mse;
  for (std::size_t i = 0; i < truth.size(); ++i) report.counts.emplace_back(predicted[i], truth[i]);

  const auto hard = hard_split(truth);
  std::vector<double> ep, et, hp, ht;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    (hard[i] ? hp : ep).push_back(predicted[i]);
    (hard[i] ? ht : et).push_back(truth[i]);
  }
  report.n_easy = et.size();
  report.n_hard = ht.size();
  if (!et.empty()) {
    const auto e = count_errors(ep, et);
    report.easy_mae = e.mae;
    report.easy_mse = e.mse;
  }
  if (!ht.empty()) {
    const auto h = count_errors(hp, ht);
    report.hard_mae = h.mae;
    report.hard_mse = h.mse;
  }
  return report;
}

std::array<EvalReport, 3> evaluate_model(ChsNet& model, std::span<const Sample> samples,
                                         int batch_size) {
  require(!samples.empty(), ErrorKind::invalid_argument, "evaluation set is empty");
  require(batch_size >= 1, ErrorKind::invalid_argument, "batch_size must be >= 1");
  const int stride = model.config().output_stride();
  std::vector<double> conv, tran, average, truth;
  for (std::size_t begin = 0; begin < samples.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(samples.size(), begin + static_cast<std::size_t>(batch_size));
    std::vector<cv::Mat> images;
    for (std::size_t i = begin; i < end; ++i) images.push_back(samples[i].pixels);
    const Prediction pred = model.forward(images_to_tensor(images), Mode::eval);
    const auto conv_maps = to_density_maps(pred.conv, stride);
    const auto tran_maps = to_density_maps(pred.tran, stride);
    for (std::size_t k = 0; k < conv_maps.size(); ++k) {
      DensityMap avg = conv_maps[k];
      for (std::size_t i = 0; i < avg.size(); ++i)
        avg.cells[i] = 0.5 * (conv_maps[k].cells[i] + tran_maps[k].cells[i]);
      conv.push_back(total_count(conv_maps[k]));
      tran.push_back(total_count(tran_maps[k]));
      average.push_back(total_count(avg));
      truth.push_back(static_cast<double>(samples[begin + k].annotations.count()));
    }
  }
  return {make_report(EvalHead::conv, conv, truth), make_report(EvalHead::tran, tran, truth),
          make_report(EvalHead::average, average, truth)};
}

ChsNet load_model(const std::filesystem::path& checkpoint) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  ChsNet model(ckpt.model_config, 0);
  restore_checkpoint(ckpt, model, nullptr);
  return model;
}

EvalReport evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset_dir,
                    EvalHead head) {
  ChsNet model = load_model(checkpoint);
  const auto val = load_split(dataset_dir, "val.jsonl");
  require(!val.empty(), ErrorKind::invalid_argument, "validation split is empty");
  for (const auto& s : val)
    require(s.pixels.rows % model.config().encoder_stride == 0 &&
                s.pixels.cols % model.config().encoder_stride == 0,
            ErrorKind::config,
            s.image + " is not a multiple of the checkpoint's encoder stride " +
                std::to_string(model.config().encoder_stride));
  const auto reports = evaluate_model(model, val);
  return reports[static_cast<std::size_t>(head)];
}

}  // namespace chsnet
