#pragma once

#include <array>
#include <cstdint>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "chsnet/density_map.hpp"
#include "chsnet/layers.hpp"
#include "chsnet/transformer.hpp"

namespace chsnet {

enum class EncoderKind { toy_cnn, vgg16_style };
enum class PositionalEncodingKind { sinusoidal_2d, learned };

std::string to_string(EncoderKind kind);
std::string to_string(PositionalEncodingKind kind);
EncoderKind parse_encoder(const std::string& name);
PositionalEncodingKind parse_positional_encoding(const std::string& name);

struct ConvHeadConfig {
  int n_blocks = 4;
  int dilation = 2;
  // Output channels per block; empty means C/2, C/4, C/4, ...
  std::vector<int> channel_schedule;
};

struct TranHeadConfig {
  int n_layers = 2;
  int n_attention_heads = 4;
  int ffn_multiplier = 2;
  PositionalEncodingKind positional_encoding = PositionalEncodingKind::sinusoidal_2d;
};

struct ModelConfig {
  EncoderKind encoder = EncoderKind::toy_cnn;
  int channels = 128;        // C, width of the shared features
  int encoder_stride = 16;   // 8 or 16
  ConvHeadConfig conv_head;
  TranHeadConfig tran_head;
  int regression_upsample = 2;
  // Only consulted by learned positional encodings, whose table is sized for
  // input_size / encoder_stride tokens per side.
  int input_size = 128;

  void validate() const;
  int output_stride() const { return encoder_stride / regression_upsample; }
  std::vector<int> conv_channels() const;
  int regression_channels() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& doc);
  // FNV-1a over the canonical JSON dump.
  std::uint64_t hash() const;
  bool operator==(const ModelConfig& other) const { return to_json() == other.to_json(); }
};

// {C, H, W} of the encoder features for an input of the given size; throws
// with the padding needed when the size is not a multiple of the stride.
std::array<int, 3> feature_shape(const ModelConfig& config, int input_height, int input_width);
// {H, W} of either head's density map.
std::array<int, 2> density_shape(const ModelConfig& config, int input_height, int input_width);

// Both heads' outputs, N x 1 x H x W each.
struct Prediction {
  Tensor conv;
  Tensor tran;
};

// Upsample, two 3x3 conv + ReLU blocks halving the width, a 1x1 conv to one
// channel and a final ReLU. Both heads end in one of these.
class RegressionBlock : public Layer {
 public:
  RegressionBlock(const std::string& name, int in_channels, int upsample, Rng& rng);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_params(std::vector<Param*>& out) override;

 private:
  Sequential layers_;
};

class TransformerHead : public Layer {
 public:
  TransformerHead(const std::string& name, const ModelConfig& config, Rng& rng);
  Tensor forward(const Tensor& features, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_params(std::vector<Param*>& out) override;

 private:
  int channels_;
  PositionalEncodingKind encoding_;
  std::optional<Param> learned_positions_;  // (H*W) x C
  Tensor fixed_positions_;
  Sequential layers_;
  Linear projection_;
  Relu projection_activation_;
  RegressionBlock regression_;
  int height_ = 0, width_ = 0;
};

class ChsNet {
 public:
  ChsNet(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  Tensor encode(const Tensor& images, Mode mode);
  Tensor conv_head_forward(const Tensor& features, Mode mode);
  Tensor tran_head_forward(const Tensor& features, Mode mode);
  // One encoder pass shared by both heads.
  Prediction forward(const Tensor& images, Mode mode);

  // Back-propagates both heads' output gradients through the heads and the
  // shared encoder, accumulating into Param::grad. Must follow forward().
  void backward(const Tensor& grad_conv, const Tensor& grad_tran);

  std::vector<Param*> params();
  std::vector<Param*> encoder_params();
  std::vector<Param*> conv_head_params();
  std::vector<Param*> tran_head_params();
  std::vector<Buffer> buffers();
  void zero_grad();
  std::size_t parameter_count();

 private:
  ModelConfig config_;
  Sequential encoder_;
  Sequential conv_head_;
  std::unique_ptr<TransformerHead> tran_head_;
  std::vector<int> input_shape_;
};

// Splits an N x 1 x H x W prediction into per-image density maps.
std::vector<DensityMap> to_density_maps(const Tensor& maps, int stride);

}  // namespace chsnet
