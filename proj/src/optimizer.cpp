#include "chsnet/optimizer.hpp"

#include <cmath>
#include <numbers>

#include "chsnet/error.hpp"

namespace chsnet {

std::string to_string(LrSchedule schedule) {
  return schedule == LrSchedule::cosine ? "cosine" : "constant";
}

LrSchedule parse_lr_schedule(const std::string& name) {
  if (name == "cosine") return LrSchedule::cosine;
  if (name == "constant") return LrSchedule::constant;
  fail(ErrorKind::invalid_argument, "unknown lr schedule '" + name + "'");
}

double learning_rate_at(LrSchedule schedule, double base_lr, int epoch, int total_epochs) {
  if (schedule == LrSchedule::constant || total_epochs <= 0) return base_lr;
  const double progress = static_cast<double>(epoch - 1) / static_cast<double>(total_epochs);
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(std::vector<Param*> params, Options options)
    : params_(std::move(params)), options_(options) {
  for (Param* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void AdamW::step(double learning_rate) {
  ++steps_;
  const double bias1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
  const double bias2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Param& p = *params_[k];
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    const double decay = p.decay ? learning_rate * options_.weight_decay : 0.0;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g;
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g * g;
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      p.value[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + options_.eps) + decay * p.value[i];
    }
  }
}

}  // namespace chsnet
