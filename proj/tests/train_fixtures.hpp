#pragma once

#include "chsnet/synth_data.hpp"
#include "chsnet/train_eval.hpp"
#include "model_fixtures.hpp"

namespace testing {

inline void make_tiny_dataset(const std::filesystem::path& dir, int n_train = 4, int n_val = 3,
                              double missing = 0.25) {
  chsnet::SceneSpec spec;
  spec.image_size = 64;
  spec.count_min = 3;
  spec.count_max = 9;
  spec.seed = 17;
  chsnet::build_dataset(spec, n_train, n_val, {missing, 0.0, 3}, dir);
}

inline chsnet::TrainConfig tiny_train_config(int epochs) {
  chsnet::TrainConfig c;
  c.learning_rate = 1e-3;
  c.max_epochs = epochs;
  c.crop_size = 64;
  c.batch_size = 2;
  c.seed = 5;
  return c;
}

}  // namespace testing
