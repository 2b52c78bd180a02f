#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "chsnet/kernels.hpp"
#include "chsnet/rng.hpp"
#include "chsnet/tensor.hpp"

namespace chsnet {

enum class Mode { train, eval };

// A trainable tensor and its accumulated gradient. Names are canonical
// dotted paths ("encoder.block0.conv.weight") used by checkpoints.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  bool decay = true;

  Param(std::string n, std::vector<int> shape, bool apply_decay = true)
      : name(std::move(n)), value(shape), grad(shape), decay(apply_decay) {}
};

// Non-trainable persistent state (batch-norm running statistics).
struct Buffer {
  std::string name;
  Tensor* tensor;
};

// Layers cache what they need from the most recent forward() call, so one
// instance serves one forward/backward pass at a time.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  // Returns dL/dx and accumulates parameter gradients.
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual void collect_params(std::vector<Param*>& /*out*/) {}
  virtual void collect_buffers(std::vector<Buffer>& /*out*/) {}
};

class Conv2d : public Layer {
 public:
  Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, int stride,
         int dilation, Rng& rng, bool bias = true);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_params(std::vector<Param*>& out) override;

  Param& weight() { return weight_; }
  Param* bias() { return bias_ ? &*bias_ : nullptr; }
  int in_channels() const { return in_channels_; }
  int out_channels() const { return out_channels_; }

 private:
  kernels::ConvGeometry geometry(const Tensor& x) const;

  int in_channels_, out_channels_, kernel_, stride_, dilation_;
  Param weight_;
  std::optional<Param> bias_;
  Tensor input_;
};

class BatchNorm2d : public Layer {
 public:
  BatchNorm2d(const std::string& name, int channels, double momentum = 0.1, double eps = 1e-5);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_params(std::vector<Param*>& out) override;
  void collect_buffers(std::vector<Buffer>& out) override;

  Param& gamma() { return gamma_; }
  Param& beta() { return beta_; }
  Tensor& running_mean() { return running_mean_; }
  Tensor& running_var() { return running_var_; }

 private:
  std::string name_;
  int channels_;
  double momentum_, eps_;
  Param gamma_, beta_;
  Tensor running_mean_, running_var_;
  Tensor normalized_;
  std::vector<double> inv_std_;
  Mode last_mode_ = Mode::train;
};

class Relu : public Layer {
 public:
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  Tensor output_;
};

// 2x2 max pooling with stride 2; odd spatial sizes are rejected.
class MaxPool2d : public Layer {
 public:
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  std::vector<int> input_shape_;
  std::vector<std::size_t> argmax_;
};

// Nearest-neighbour upsampling by an integer factor.
class Upsample : public Layer {
 public:
  explicit Upsample(int factor);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  int factor() const { return factor_; }

 private:
  int factor_;
  std::vector<int> input_shape_;
};

class Sequential : public Layer {
 public:
  Sequential() = default;

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_params(std::vector<Param*>& out) override;
  void collect_buffers(std::vector<Buffer>& out) override;

  std::size_t size() const { return layers_.size(); }
  Layer& at(std::size_t i) { return *layers_.at(i); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace chsnet
