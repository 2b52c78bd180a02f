#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "chsnet/model.hpp"
#include "chsnet/noise.hpp"
#include "chsnet/synth_data.hpp"
#include "chsnet/train_eval.hpp"

namespace chsnet {

struct AblationSettings {
  std::vector<double> delta_max{0.0, 0.05, 0.1, 0.15, 0.3};
  int seeds = 3;
  std::uint64_t master_seed = 0;
};

// Everything a subcommand can be configured with. Keys are dotted
// (`train.learning_rate`, `model.channels`, ...); `seed` sets the scene,
// noise and training seeds at once.
struct Settings {
  SceneSpec scene;
  NoiseSpec noise{0.1, 0.0, 0};
  int n_train = 200;
  int n_val = 50;
  bool overwrite = false;
  ModelConfig model;
  TrainConfig train;
  EvalHead eval_head = EvalHead::average;
  std::filesystem::path dataset_dir = "data";
  std::filesystem::path checkpoint;
  std::filesystem::path image;
  AblationSettings ablation;
  int plot_count = 4;

  // Throws Error{config} on an unknown key or unparsable value.
  void set(const std::string& key, const std::string& value);
  void apply_file(const std::filesystem::path& path);
  // "key=value"
  void apply_override(const std::string& assignment);

  std::map<std::string, std::string> dump() const;
  static std::vector<std::string> keys();
};

}  // namespace chsnet
