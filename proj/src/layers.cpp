#include "chsnet/layers.hpp"

#include <cmath>
#include <limits>

#include "chsnet/error.hpp"

namespace chsnet {

namespace {

void require_nchw(const Tensor& x, const char* layer) {
  require(x.rank() == 4, ErrorKind::shape,
          std::string(layer) + " expects an NCHW tensor, got " + shape_string(x.shape()));
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, int stride,
               int dilation, Rng& rng, bool bias)
    : in_channels_(in_channels),
      out_channels_(out_channels),
      kernel_(kernel),
      stride_(stride),
      dilation_(dilation),
      weight_(name + ".weight", {out_channels, in_channels, kernel, kernel}) {
  require(in_channels > 0 && out_channels > 0, ErrorKind::invalid_argument,
          name + ": channel counts must be positive");
  require(kernel % 2 == 1, ErrorKind::invalid_argument, name + ": kernel size must be odd");
  // He-normal initialisation for ReLU networks.
  const double std_dev = std::sqrt(2.0 / (static_cast<double>(in_channels) * kernel * kernel));
  for (double& w : weight_.value.values()) w = std_dev * rng.normal();
  if (bias) bias_.emplace(name + ".bias", std::vector<int>{out_channels}, false);
}

kernels::ConvGeometry Conv2d::geometry(const Tensor& x) const {
  kernels::ConvGeometry g;
  g.in_channels = in_channels_;
  g.out_channels = out_channels_;
  g.in_height = x.dim(2);
  g.in_width = x.dim(3);
  g.kernel = kernel_;
  g.stride = stride_;
  g.dilation = dilation_;
  g.pad = dilation_ * (kernel_ - 1) / 2;
  return g;
}

Tensor Conv2d::forward(const Tensor& x, Mode /*mode*/) {
  require_nchw(x, "Conv2d");
  require(x.dim(1) == in_channels_, ErrorKind::shape,
          weight_.name + ": expected " + std::to_string(in_channels_) + " input channels, got " +
              std::to_string(x.dim(1)));
  input_ = x;
  const auto g = geometry(x);
  Tensor y({x.dim(0), out_channels_, g.out_height(), g.out_width()});
  kernels::conv2d_forward(g, x.dim(0), x.data(), weight_.value.data(),
                          bias_ ? bias_->value.data() : nullptr, y.data());
  return y;
}

Tensor Conv2d::backward(const Tensor& grad_out) {
  const auto g = geometry(input_);
  Tensor grad_in(input_.shape());
  kernels::conv2d_backward(g, input_.dim(0), input_.data(), weight_.value.data(), grad_out.data(),
                           grad_in.data(), weight_.grad.data(),
                           bias_ ? bias_->grad.data() : nullptr);
  return grad_in;
}

void Conv2d::collect_params(std::vector<Param*>& out) {
  out.push_back(&weight_);
  if (bias_) out.push_back(&*bias_);
}

// ---------------------------------------------------------------- BatchNorm2d

BatchNorm2d::BatchNorm2d(const std::string& name, int channels, double momentum, double eps)
    : name_(name),
      channels_(channels),
      momentum_(momentum),
      eps_(eps),
      gamma_(name + ".gamma", {channels}, false),
      beta_(name + ".beta", {channels}, false),
      running_mean_({channels}, 0.0),
      running_var_({channels}, 1.0) {
  gamma_.value.fill(1.0);
}

Tensor BatchNorm2d::forward(const Tensor& x, Mode mode) {
  require_nchw(x, "BatchNorm2d");
  require(x.dim(1) == channels_, ErrorKind::shape, name_ + ": channel mismatch");
  const int batch = x.dim(0);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  const double count = static_cast<double>(batch) * static_cast<double>(plane);

  last_mode_ = mode;
  normalized_ = Tensor(x.shape());
  inv_std_.assign(static_cast<std::size_t>(channels_), 0.0);
  Tensor y(x.shape());

#pragma omp parallel for schedule(static) if (x.size() > (1u << 15))
  for (int c = 0; c < channels_; ++c) {
    double mean, var;
    if (mode == Mode::train) {
      double sum = 0.0;
      for (int n = 0; n < batch; ++n) {
        const double* xc = x.data() + (static_cast<std::size_t>(n) * channels_ + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) sum += xc[i];
      }
      mean = sum / count;
      double sq = 0.0;
      for (int n = 0; n < batch; ++n) {
        const double* xc = x.data() + (static_cast<std::size_t>(n) * channels_ + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) sq += (xc[i] - mean) * (xc[i] - mean);
      }
      var = sq / count;
      const double unbiased = count > 1.0 ? sq / (count - 1.0) : var;
      running_mean_[c] = (1.0 - momentum_) * running_mean_[c] + momentum_ * mean;
      running_var_[c] = (1.0 - momentum_) * running_var_[c] + momentum_ * unbiased;
    } else {
      mean = running_mean_[c];
      var = running_var_[c];
    }
    const double inv_std = 1.0 / std::sqrt(var + eps_);
    inv_std_[static_cast<std::size_t>(c)] = inv_std;
    const double g = gamma_.value[c];
    const double b = beta_.value[c];
    for (int n = 0; n < batch; ++n) {
      const std::size_t off = (static_cast<std::size_t>(n) * channels_ + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double xh = (x[off + i] - mean) * inv_std;
        normalized_[off + i] = xh;
        y[off + i] = g * xh + b;
      }
    }
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& grad_out) {
  const int batch = grad_out.dim(0);
  const std::size_t plane = static_cast<std::size_t>(grad_out.dim(2)) * grad_out.dim(3);
  const double count = static_cast<double>(batch) * static_cast<double>(plane);
  Tensor grad_in(grad_out.shape());

#pragma omp parallel for schedule(static) if (grad_out.size() > (1u << 15))
  for (int c = 0; c < channels_; ++c) {
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (int n = 0; n < batch; ++n) {
      const std::size_t off = (static_cast<std::size_t>(n) * channels_ + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += grad_out[off + i];
        sum_dy_xh += grad_out[off + i] * normalized_[off + i];
      }
    }
    gamma_.grad[c] += sum_dy_xh;
    beta_.grad[c] += sum_dy;
    const double g = gamma_.value[c];
    const double inv_std = inv_std_[static_cast<std::size_t>(c)];
    for (int n = 0; n < batch; ++n) {
      const std::size_t off = (static_cast<std::size_t>(n) * channels_ + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        if (last_mode_ == Mode::train) {
          grad_in[off + i] = g * inv_std / count *
                             (count * grad_out[off + i] - sum_dy - normalized_[off + i] * sum_dy_xh);
        } else {
          grad_in[off + i] = g * inv_std * grad_out[off + i];
        }
      }
    }
  }
  return grad_in;
}

void BatchNorm2d::collect_params(std::vector<Param*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

void BatchNorm2d::collect_buffers(std::vector<Buffer>& out) {
  out.push_back({name_ + ".running_mean", &running_mean_});
  out.push_back({name_ + ".running_var", &running_var_});
}

// ---------------------------------------------------------------- Relu

Tensor Relu::forward(const Tensor& x, Mode /*mode*/) {
  output_ = x;
  for (double& v : output_.values()) v = v > 0.0 ? v : 0.0;
  return output_;
}

Tensor Relu::backward(const Tensor& grad_out) {
  Tensor grad_in(grad_out.shape());
  for (std::size_t i = 0; i < grad_out.size(); ++i)
    grad_in[i] = output_[i] > 0.0 ? grad_out[i] : 0.0;
  return grad_in;
}

// ---------------------------------------------------------------- MaxPool2d

Tensor MaxPool2d::forward(const Tensor& x, Mode /*mode*/) {
  require_nchw(x, "MaxPool2d");
  const int h = x.dim(2), w = x.dim(3);
  require(h % 2 == 0 && w % 2 == 0, ErrorKind::shape,
          "MaxPool2d needs even spatial size, got " + shape_string(x.shape()));
  input_shape_ = x.shape();
  const int oh = h / 2, ow = w / 2;
  const int planes = x.dim(0) * x.dim(1);
  Tensor y({x.dim(0), x.dim(1), oh, ow});
  argmax_.assign(y.size(), 0);
  for (int p = 0; p < planes; ++p) {
    const std::size_t in_off = static_cast<std::size_t>(p) * h * w;
    const std::size_t out_off = static_cast<std::size_t>(p) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        std::size_t best = in_off + static_cast<std::size_t>(2 * oy) * w + 2 * ox;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const std::size_t idx = in_off + static_cast<std::size_t>(2 * oy + dy) * w + 2 * ox + dx;
            if (x[idx] > x[best]) best = idx;
          }
        const std::size_t o = out_off + static_cast<std::size_t>(oy) * ow + ox;
        y[o] = x[best];
        argmax_[o] = best;
      }
    }
  }
  return y;
}

Tensor MaxPool2d::backward(const Tensor& grad_out) {
  Tensor grad_in(input_shape_);
  for (std::size_t o = 0; o < grad_out.size(); ++o) grad_in[argmax_[o]] += grad_out[o];
  return grad_in;
}

// ---------------------------------------------------------------- Upsample

Upsample::Upsample(int factor) : factor_(factor) {
  require(factor >= 1, ErrorKind::invalid_argument, "upsample factor must be >= 1");
}

Tensor Upsample::forward(const Tensor& x, Mode /*mode*/) {
  require_nchw(x, "Upsample");
  input_shape_ = x.shape();
  if (factor_ == 1) return x;
  const int h = x.dim(2), w = x.dim(3);
  const int oh = h * factor_, ow = w * factor_;
  const int planes = x.dim(0) * x.dim(1);
  Tensor y({x.dim(0), x.dim(1), oh, ow});
  for (int p = 0; p < planes; ++p) {
    const double* src = x.data() + static_cast<std::size_t>(p) * h * w;
    double* dst = y.data() + static_cast<std::size_t>(p) * oh * ow;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox)
        dst[static_cast<std::size_t>(oy) * ow + ox] =
            src[static_cast<std::size_t>(oy / factor_) * w + ox / factor_];
  }
  return y;
}

Tensor Upsample::backward(const Tensor& grad_out) {
  if (factor_ == 1) return grad_out;
  const int h = input_shape_[2], w = input_shape_[3];
  const int oh = h * factor_, ow = w * factor_;
  const int planes = input_shape_[0] * input_shape_[1];
  Tensor grad_in(input_shape_);
  for (int p = 0; p < planes; ++p) {
    const double* src = grad_out.data() + static_cast<std::size_t>(p) * oh * ow;
    double* dst = grad_in.data() + static_cast<std::size_t>(p) * h * w;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox)
        dst[static_cast<std::size_t>(oy / factor_) * w + ox / factor_] +=
            src[static_cast<std::size_t>(oy) * ow + ox];
  }
  return grad_in;
}

// ---------------------------------------------------------------- Sequential

Tensor Sequential::forward(const Tensor& x, Mode mode) {
  Tensor h = x;
  for (auto& layer : layers_) h = layer->forward(h, mode);
  return h;
}

Tensor Sequential::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

void Sequential::collect_params(std::vector<Param*>& out) {
  for (auto& layer : layers_) layer->collect_params(out);
}

void Sequential::collect_buffers(std::vector<Buffer>& out) {
  for (auto& layer : layers_) layer->collect_buffers(out);
}

}  // namespace chsnet
