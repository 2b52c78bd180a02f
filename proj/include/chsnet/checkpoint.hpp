#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <map>
#include <string>

#include "chsnet/model.hpp"
#include "chsnet/optimizer.hpp"

namespace chsnet {

struct TrainingState {
  int epoch = 0;         // last completed epoch
  int total_epochs = 0;  // T
  double delta = 0.0;    // schedule values used in that epoch
  double alpha = 0.0;
  double delta_max = 0.0;
  double alpha_max = 0.0;
  double best_val_mae = -1.0;
  std::int64_t optimizer_steps = 0;
  nlohmann::json train_config;
};

// Binary container:
//   "CHSNETCK" | u32 format_version | u64 header bytes | JSON header | f64 payload
// The header holds the model config, its hash, the training state and the
// name/shape of every payload tensor in order. Tensor names are canonical
// parameter/buffer names; optimizer moments use "adam.m/<name>", "adam.v/<name>".
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  ModelConfig model_config;
  TrainingState state;
  std::map<std::string, Tensor> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
// Validates magic, version, config hash and payload length.
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint capture_checkpoint(ChsNet& model, AdamW* optimizer, const TrainingState& state);
// Copies weights (and optimizer moments when given) into an existing model;
// configs must match.
void restore_checkpoint(const Checkpoint& checkpoint, ChsNet& model, AdamW* optimizer);

}  // namespace chsnet
