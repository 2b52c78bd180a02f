#pragma once

#include <string>

#include "chsnet/layers.hpp"

namespace chsnet {

// Token-sequence layers. Inputs are N x L x D tensors.

class Linear : public Layer {
 public:
  Linear(const std::string& name, int in_features, int out_features, Rng& rng);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_params(std::vector<Param*>& out) override;

  Param& weight() { return weight_; }
  Param& bias() { return bias_; }

 private:
  int in_features_, out_features_;
  Param weight_;  // out x in
  Param bias_;
  Tensor input_;
};

class LayerNorm : public Layer {
 public:
  LayerNorm(const std::string& name, int features, double eps = 1e-5);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_params(std::vector<Param*>& out) override;

 private:
  int features_;
  double eps_;
  Param gamma_, beta_;
  Tensor normalized_;
  std::vector<double> inv_std_;
};

// Multi-head scaled dot-product self-attention with a fused QKV projection.
class MultiHeadSelfAttention : public Layer {
 public:
  MultiHeadSelfAttention(const std::string& name, int features, int heads, Rng& rng);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_params(std::vector<Param*>& out) override;

 private:
  int features_, heads_, head_dim_;
  Linear qkv_;
  Linear out_;
  Tensor qkv_cache_;    // N x L x 3D
  Tensor attention_;    // N x heads x L x L, post-softmax
};

// Post-norm encoder layer: x = LN(x + MHSA(x)); x = LN(x + FFN(x)).
class TransformerLayer : public Layer {
 public:
  TransformerLayer(const std::string& name, int features, int heads, int ffn_multiplier, Rng& rng);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_params(std::vector<Param*>& out) override;

 private:
  MultiHeadSelfAttention attention_;
  LayerNorm norm1_;
  Sequential ffn_;
  LayerNorm norm2_;
};

// N x C x H x W  <->  N x (H*W) x C, tokens in row-major spatial order.
Tensor to_tokens(const Tensor& features);
Tensor from_tokens(const Tensor& tokens, int height, int width);

// Fixed 2-D sinusoidal table of shape (H*W) x D. The first D/2 channels
// encode the row, the rest the column, each as interleaved sin/cos pairs with
// wavelengths 10000^(2i/(D/2)). D must be divisible by 4.
Tensor sinusoidal_position_table(int height, int width, int features);

}  // namespace chsnet
