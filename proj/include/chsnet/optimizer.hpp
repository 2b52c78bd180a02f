#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chsnet/layers.hpp"

namespace chsnet {

enum class LrSchedule { cosine, constant };

std::string to_string(LrSchedule schedule);
LrSchedule parse_lr_schedule(const std::string& name);

// Learning rate for a 1-based epoch: cosine decays from base_lr at epoch 1
// towards 0 after epoch T.
double learning_rate_at(LrSchedule schedule, double base_lr, int epoch, int total_epochs);

// Adam with decoupled weight decay (AdamW). Decay only touches parameters
// flagged Param::decay (conv and linear weights).
class AdamW {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
  };

  AdamW(std::vector<Param*> params, Options options);

  void step(double learning_rate);
  std::int64_t steps() const { return steps_; }

  // Moment buffers, parallel to the parameter list, for checkpointing.
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  void set_steps(std::int64_t steps) { steps_ = steps; }

 private:
  std::vector<Param*> params_;
  Options options_;
  std::vector<Tensor> m_, v_;
  std::int64_t steps_ = 0;
};

}  // namespace chsnet
