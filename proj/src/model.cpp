#include "chsnet/model.hpp"

#include <algorithm>

#include "chsnet/error.hpp"

namespace chsnet {

using nlohmann::json;

namespace {

constexpr int kPool = -1;

// VGG16 convolutional plan without its fifth pooling layer (stride 16). For
// stride 8 the fourth pooling layer is dropped as well.
std::vector<int> vgg16_plan(int stride) {
  std::vector<int> plan = {64,  64,  kPool, 128, 128, kPool, 256, 256, 256, kPool,
                           512, 512, 512,   kPool, 512, 512, 512};
  if (stride == 8) plan.erase(plan.begin() + 13);
  return plan;
}

}  // namespace

std::string to_string(EncoderKind kind) {
  return kind == EncoderKind::toy_cnn ? "toy_cnn" : "vgg16_style";
}

std::string to_string(PositionalEncodingKind kind) {
  return kind == PositionalEncodingKind::sinusoidal_2d ? "sinusoidal_2d" : "learned";
}

EncoderKind parse_encoder(const std::string& name) {
  if (name == "toy_cnn") return EncoderKind::toy_cnn;
  if (name == "vgg16_style") return EncoderKind::vgg16_style;
  fail(ErrorKind::invalid_argument, "unknown encoder '" + name + "'");
}

PositionalEncodingKind parse_positional_encoding(const std::string& name) {
  if (name == "sinusoidal_2d") return PositionalEncodingKind::sinusoidal_2d;
  if (name == "learned") return PositionalEncodingKind::learned;
  fail(ErrorKind::invalid_argument, "unknown positional encoding '" + name + "'");
}

// ---------------------------------------------------------------- config

void ModelConfig::validate() const {
  require(encoder_stride == 8 || encoder_stride == 16, ErrorKind::invalid_argument,
          "encoder_stride must be 8 or 16, got " + std::to_string(encoder_stride));
  require(regression_upsample >= 1 && encoder_stride % regression_upsample == 0,
          ErrorKind::invalid_argument,
          "encoder_stride must be divisible by regression_upsample");
  if (encoder == EncoderKind::toy_cnn) {
    require(channels >= 8 && channels % 8 == 0, ErrorKind::invalid_argument,
            "toy_cnn needs channels divisible by 8, got " + std::to_string(channels));
  } else {
    require(channels == 512, ErrorKind::invalid_argument, "vgg16_style produces 512 channels");
  }
  require(conv_head.n_blocks >= 0 && conv_head.dilation >= 1, ErrorKind::invalid_argument,
          "conv head needs n_blocks >= 0 and dilation >= 1");
  require(conv_head.channel_schedule.empty() ||
              static_cast<int>(conv_head.channel_schedule.size()) == conv_head.n_blocks,
          ErrorKind::invalid_argument, "conv head channel schedule must have n_blocks entries");
  for (int c : conv_channels())
    require(c >= 1, ErrorKind::invalid_argument, "conv head channels must be positive");
  require(tran_head.n_layers >= 0 && tran_head.ffn_multiplier >= 1, ErrorKind::invalid_argument,
          "transformer head needs n_layers >= 0 and ffn_multiplier >= 1");
  require(tran_head.n_attention_heads >= 1 && channels % tran_head.n_attention_heads == 0,
          ErrorKind::invalid_argument,
          "channels (" + std::to_string(channels) + ") must be divisible by n_attention_heads (" +
              std::to_string(tran_head.n_attention_heads) + ")");
  if (tran_head.positional_encoding == PositionalEncodingKind::sinusoidal_2d) {
    require(channels % 4 == 0, ErrorKind::invalid_argument,
            "sinusoidal_2d positional encoding needs channels divisible by 4");
  } else {
    require(input_size > 0 && input_size % encoder_stride == 0, ErrorKind::invalid_argument,
            "learned positional encoding needs input_size divisible by encoder_stride");
  }
}

std::vector<int> ModelConfig::conv_channels() const {
  if (!conv_head.channel_schedule.empty()) return conv_head.channel_schedule;
  std::vector<int> schedule;
  for (int i = 0; i < conv_head.n_blocks; ++i)
    schedule.push_back(std::max(1, i == 0 ? channels / 2 : channels / 4));
  return schedule;
}

int ModelConfig::regression_channels() const {
  const auto schedule = conv_channels();
  return schedule.empty() ? channels : schedule.back();
}

json ModelConfig::to_json() const {
  return json{{"encoder", to_string(encoder)},
              {"channels", channels},
              {"encoder_stride", encoder_stride},
              {"conv_head",
               {{"n_blocks", conv_head.n_blocks},
                {"dilation", conv_head.dilation},
                {"channel_schedule", conv_channels()}}},
              {"tran_head",
               {{"n_layers", tran_head.n_layers},
                {"n_attention_heads", tran_head.n_attention_heads},
                {"ffn_multiplier", tran_head.ffn_multiplier},
                {"positional_encoding", to_string(tran_head.positional_encoding)}}},
              {"regression_upsample", regression_upsample},
              {"input_size", input_size}};
}

ModelConfig ModelConfig::from_json(const json& doc) {
  try {
    ModelConfig c;
    c.encoder = parse_encoder(doc.at("encoder").get<std::string>());
    c.channels = doc.at("channels").get<int>();
    c.encoder_stride = doc.at("encoder_stride").get<int>();
    const auto& ch = doc.at("conv_head");
    c.conv_head.n_blocks = ch.at("n_blocks").get<int>();
    c.conv_head.dilation = ch.at("dilation").get<int>();
    c.conv_head.channel_schedule = ch.at("channel_schedule").get<std::vector<int>>();
    const auto& th = doc.at("tran_head");
    c.tran_head.n_layers = th.at("n_layers").get<int>();
    c.tran_head.n_attention_heads = th.at("n_attention_heads").get<int>();
    c.tran_head.ffn_multiplier = th.at("ffn_multiplier").get<int>();
    c.tran_head.positional_encoding =
        parse_positional_encoding(th.at("positional_encoding").get<std::string>());
    c.regression_upsample = doc.at("regression_upsample").get<int>();
    c.input_size = doc.at("input_size").get<int>();
    return c;
  } catch (const json::exception& e) {
    fail(ErrorKind::format, std::string("bad model config: ") + e.what());
  }
}

std::uint64_t ModelConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_json().dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::array<int, 3> feature_shape(const ModelConfig& config, int input_height, int input_width) {
  const int s = config.encoder_stride;
  if (input_height % s != 0 || input_width % s != 0) {
    const int pad_h = (s - input_height % s) % s, pad_w = (s - input_width % s) % s;
    fail(ErrorKind::shape, "input " + std::to_string(input_height) + "x" +
                               std::to_string(input_width) + " is not a multiple of stride " +
                               std::to_string(s) + "; pad by " + std::to_string(pad_h) +
                               " rows and " + std::to_string(pad_w) + " columns");
  }
  return {config.channels, input_height / s, input_width / s};
}

std::array<int, 2> density_shape(const ModelConfig& config, int input_height, int input_width) {
  const auto f = feature_shape(config, input_height, input_width);
  return {f[1] * config.regression_upsample, f[2] * config.regression_upsample};
}

// ---------------------------------------------------------------- regression block

RegressionBlock::RegressionBlock(const std::string& name, int in_channels, int upsample, Rng& rng) {
  const int mid = std::max(1, in_channels / 2);
  const int narrow = std::max(1, in_channels / 4);
  layers_.add<Upsample>(upsample);
  layers_.add<Conv2d>(name + ".conv1", in_channels, mid, 3, 1, 1, rng);
  layers_.add<Relu>();
  layers_.add<Conv2d>(name + ".conv2", mid, narrow, 3, 1, 1, rng);
  layers_.add<Relu>();
  auto& out = layers_.add<Conv2d>(name + ".conv3", narrow, 1, 1, 1, 1, rng);
  // Non-negative initial weights on non-negative inputs: the final ReLU
  // starts live everywhere the features are.
  for (double& w : out.weight().value.values()) w = std::abs(w);
  layers_.add<Relu>();
}

Tensor RegressionBlock::forward(const Tensor& x, Mode mode) { return layers_.forward(x, mode); }
Tensor RegressionBlock::backward(const Tensor& grad_out) { return layers_.backward(grad_out); }
void RegressionBlock::collect_params(std::vector<Param*>& out) { layers_.collect_params(out); }

// ---------------------------------------------------------------- transformer head

TransformerHead::TransformerHead(const std::string& name, const ModelConfig& config, Rng& rng)
    : channels_(config.channels),
      encoding_(config.tran_head.positional_encoding),
      projection_(name + ".proj", config.channels, config.regression_channels(), rng),
      regression_(name + ".regression", config.regression_channels(), config.regression_upsample,
                  rng) {
  for (int i = 0; i < config.tran_head.n_layers; ++i)
    layers_.add<TransformerLayer>(name + ".layer" + std::to_string(i), config.channels,
                                  config.tran_head.n_attention_heads,
                                  config.tran_head.ffn_multiplier, rng);
  if (encoding_ == PositionalEncodingKind::learned) {
    const int side = config.input_size / config.encoder_stride;
    learned_positions_.emplace(name + ".positions", std::vector<int>{side * side, channels_}, false);
    for (double& v : learned_positions_->value.values()) v = 0.02 * rng.normal();
  }
}

Tensor TransformerHead::forward(const Tensor& features, Mode mode) {
  height_ = features.dim(2);
  width_ = features.dim(3);
  Tensor tokens = to_tokens(features);
  const std::size_t table = static_cast<std::size_t>(height_) * width_ * channels_;
  const Tensor* positions = nullptr;
  if (encoding_ == PositionalEncodingKind::learned) {
    require(learned_positions_->value.size() == table, ErrorKind::shape,
            "learned positional table does not match a " + std::to_string(height_) + "x" +
                std::to_string(width_) + " feature map");
    positions = &learned_positions_->value;
  } else {
    if (fixed_positions_.size() != table)
      fixed_positions_ = sinusoidal_position_table(height_, width_, channels_);
    positions = &fixed_positions_;
  }
  for (int n = 0; n < tokens.dim(0); ++n) {
    double* t = tokens.data() + static_cast<std::size_t>(n) * table;
    for (std::size_t i = 0; i < table; ++i) t[i] += (*positions)[i];
  }
  const Tensor mixed = layers_.forward(tokens, mode);
  const Tensor projected = projection_activation_.forward(projection_.forward(mixed, mode), mode);
  return regression_.forward(from_tokens(projected, height_, width_), mode);
}

Tensor TransformerHead::backward(const Tensor& grad_out) {
  const Tensor g_proj = to_tokens(regression_.backward(grad_out));
  const Tensor g_mixed = projection_.backward(projection_activation_.backward(g_proj));
  const Tensor g_tokens = layers_.backward(g_mixed);
  if (learned_positions_) {
    const std::size_t table = learned_positions_->value.size();
    for (int n = 0; n < g_tokens.dim(0); ++n) {
      const double* g = g_tokens.data() + static_cast<std::size_t>(n) * table;
      for (std::size_t i = 0; i < table; ++i) learned_positions_->grad[i] += g[i];
    }
  }
  return from_tokens(g_tokens, height_, width_);
}

void TransformerHead::collect_params(std::vector<Param*>& out) {
  if (learned_positions_) out.push_back(&*learned_positions_);
  layers_.collect_params(out);
  projection_.collect_params(out);
  regression_.collect_params(out);
}

// ---------------------------------------------------------------- ChsNet

ChsNet::ChsNet(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);

  if (config_.encoder == EncoderKind::toy_cnn) {
    const int c = config_.channels;
    const std::array<int, 4> widths = {c / 8, c / 4, c / 2, c};
    int in = 3;
    for (int i = 0; i < 4; ++i) {
      const std::string name = "encoder.block" + std::to_string(i);
      const int stride = (i == 0 && config_.encoder_stride == 16) ? 2 : 1;
      encoder_.add<Conv2d>(name + ".conv", in, widths[i], 3, stride, 1, rng);
      encoder_.add<BatchNorm2d>(name + ".bn", widths[i]);
      encoder_.add<Relu>();
      if (i < 3) encoder_.add<MaxPool2d>();
      in = widths[i];
    }
  } else {
    int in = 3, index = 0;
    for (int width : vgg16_plan(config_.encoder_stride)) {
      if (width == kPool) {
        encoder_.add<MaxPool2d>();
        continue;
      }
      encoder_.add<Conv2d>("encoder.conv" + std::to_string(index++), in, width, 3, 1, 1, rng);
      encoder_.add<Relu>();
      in = width;
    }
  }

  int in = config_.channels;
  const auto schedule = config_.conv_channels();
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    const std::string name = "conv_head.block" + std::to_string(i);
    conv_head_.add<Conv2d>(name + ".conv", in, schedule[i], 3, 1, config_.conv_head.dilation, rng);
    conv_head_.add<BatchNorm2d>(name + ".bn", schedule[i]);
    conv_head_.add<Relu>();
    in = schedule[i];
  }
  conv_head_.add<RegressionBlock>("conv_head.regression", in, config_.regression_upsample, rng);

  tran_head_ = std::make_unique<TransformerHead>("tran_head", config_, rng);
}

Tensor ChsNet::encode(const Tensor& images, Mode mode) {
  require(images.rank() == 4 && images.dim(1) == 3, ErrorKind::shape,
          "encode expects N x 3 x H x W images, got " + shape_string(images.shape()));
  feature_shape(config_, images.dim(2), images.dim(3));
  input_shape_ = images.shape();
  return encoder_.forward(images, mode);
}

Tensor ChsNet::conv_head_forward(const Tensor& features, Mode mode) {
  require(features.rank() == 4 && features.dim(1) == config_.channels, ErrorKind::shape,
          "conv head expects " + std::to_string(config_.channels) + "-channel features, got " +
              shape_string(features.shape()));
  return conv_head_.forward(features, mode);
}

Tensor ChsNet::tran_head_forward(const Tensor& features, Mode mode) {
  require(features.rank() == 4 && features.dim(1) == config_.channels, ErrorKind::shape,
          "transformer head expects " + std::to_string(config_.channels) +
              "-channel features, got " + shape_string(features.shape()));
  return tran_head_->forward(features, mode);
}

Prediction ChsNet::forward(const Tensor& images, Mode mode) {
  const Tensor features = encode(images, mode);
  return {conv_head_forward(features, mode), tran_head_forward(features, mode)};
}

void ChsNet::backward(const Tensor& grad_conv, const Tensor& grad_tran) {
  Tensor g_features = conv_head_.backward(grad_conv);
  g_features += tran_head_->backward(grad_tran);
  encoder_.backward(g_features);
}

std::vector<Param*> ChsNet::encoder_params() {
  std::vector<Param*> out;
  encoder_.collect_params(out);
  return out;
}

std::vector<Param*> ChsNet::conv_head_params() {
  std::vector<Param*> out;
  conv_head_.collect_params(out);
  return out;
}

std::vector<Param*> ChsNet::tran_head_params() {
  std::vector<Param*> out;
  tran_head_->collect_params(out);
  return out;
}

std::vector<Param*> ChsNet::params() {
  std::vector<Param*> out = encoder_params();
  for (Param* p : conv_head_params()) out.push_back(p);
  for (Param* p : tran_head_params()) out.push_back(p);
  return out;
}

std::vector<Buffer> ChsNet::buffers() {
  std::vector<Buffer> out;
  encoder_.collect_buffers(out);
  conv_head_.collect_buffers(out);
  tran_head_->collect_buffers(out);
  return out;
}

void ChsNet::zero_grad() {
  for (Param* p : params()) p->grad.fill(0.0);
}

std::size_t ChsNet::parameter_count() {
  std::size_t n = 0;
  for (Param* p : params()) n += p->value.size();
  return n;
}

std::vector<DensityMap> to_density_maps(const Tensor& maps, int stride) {
  require(maps.rank() == 4 && maps.dim(1) == 1, ErrorKind::shape,
          "expected N x 1 x H x W maps, got " + shape_string(maps.shape()));
  std::vector<DensityMap> out;
  const int h = maps.dim(2), w = maps.dim(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int n = 0; n < maps.dim(0); ++n) {
    DensityMap m(h, w, stride);
    std::copy_n(maps.data() + n * plane, plane, m.cells.begin());
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace chsnet
