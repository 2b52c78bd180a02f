#include "chsnet/transformer.hpp"

#include <algorithm>
#include <cmath>

#include "chsnet/error.hpp"

namespace chsnet {

using kernels::Trans;

namespace {

void require_tokens(const Tensor& x, int features, const std::string& who) {
  require(x.rank() == 3, ErrorKind::shape,
          who + " expects N x L x D tokens, got " + shape_string(x.shape()));
  require(x.dim(2) == features, ErrorKind::shape,
          who + ": expected width " + std::to_string(features) + ", got " + std::to_string(x.dim(2)));
}

}  // namespace

// ---------------------------------------------------------------- Linear

Linear::Linear(const std::string& name, int in_features, int out_features, Rng& rng)
    : in_features_(in_features),
      out_features_(out_features),
      weight_(name + ".weight", {out_features, in_features}),
      bias_(name + ".bias", {out_features}, false) {
  const double bound = std::sqrt(6.0 / (in_features + out_features));
  for (double& w : weight_.value.values()) w = rng.uniform(-bound, bound);
}

Tensor Linear::forward(const Tensor& x, Mode /*mode*/) {
  require_tokens(x, in_features_, weight_.name);
  input_ = x;
  const int rows = x.dim(0) * x.dim(1);
  Tensor y({x.dim(0), x.dim(1), out_features_});
  kernels::gemm(Trans::no, Trans::yes, rows, out_features_, in_features_, x.data(),
                weight_.value.data(), 0.0, y.data());
  for (int r = 0; r < rows; ++r) {
    double* yr = y.data() + static_cast<std::size_t>(r) * out_features_;
    for (int j = 0; j < out_features_; ++j) yr[j] += bias_.value[j];
  }
  return y;
}

Tensor Linear::backward(const Tensor& grad_out) {
  const int rows = input_.dim(0) * input_.dim(1);
  kernels::gemm(Trans::yes, Trans::no, out_features_, in_features_, rows, grad_out.data(),
                input_.data(), 1.0, weight_.grad.data());
  for (int j = 0; j < out_features_; ++j) {
    double acc = bias_.grad[j];
    for (int r = 0; r < rows; ++r) acc += grad_out[static_cast<std::size_t>(r) * out_features_ + j];
    bias_.grad[j] = acc;
  }
  Tensor grad_in(input_.shape());
  kernels::gemm(Trans::no, Trans::no, rows, in_features_, out_features_, grad_out.data(),
                weight_.value.data(), 0.0, grad_in.data());
  return grad_in;
}

void Linear::collect_params(std::vector<Param*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ---------------------------------------------------------------- LayerNorm

LayerNorm::LayerNorm(const std::string& name, int features, double eps)
    : features_(features),
      eps_(eps),
      gamma_(name + ".gamma", {features}, false),
      beta_(name + ".beta", {features}, false) {
  gamma_.value.fill(1.0);
}

Tensor LayerNorm::forward(const Tensor& x, Mode /*mode*/) {
  require_tokens(x, features_, gamma_.name);
  const int rows = x.dim(0) * x.dim(1);
  normalized_ = Tensor(x.shape());
  inv_std_.assign(static_cast<std::size_t>(rows), 0.0);
  Tensor y(x.shape());
  for (int r = 0; r < rows; ++r) {
    const double* xr = x.data() + static_cast<std::size_t>(r) * features_;
    double mean = 0.0;
    for (int j = 0; j < features_; ++j) mean += xr[j];
    mean /= features_;
    double var = 0.0;
    for (int j = 0; j < features_; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= features_;
    const double inv_std = 1.0 / std::sqrt(var + eps_);
    inv_std_[static_cast<std::size_t>(r)] = inv_std;
    double* nr = normalized_.data() + static_cast<std::size_t>(r) * features_;
    double* yr = y.data() + static_cast<std::size_t>(r) * features_;
    for (int j = 0; j < features_; ++j) {
      nr[j] = (xr[j] - mean) * inv_std;
      yr[j] = gamma_.value[j] * nr[j] + beta_.value[j];
    }
  }
  return y;
}

Tensor LayerNorm::backward(const Tensor& grad_out) {
  const int rows = grad_out.dim(0) * grad_out.dim(1);
  Tensor grad_in(grad_out.shape());
  std::vector<double> dxhat(static_cast<std::size_t>(features_));
  for (int r = 0; r < rows; ++r) {
    const double* dy = grad_out.data() + static_cast<std::size_t>(r) * features_;
    const double* nr = normalized_.data() + static_cast<std::size_t>(r) * features_;
    double sum = 0.0, sum_xh = 0.0;
    for (int j = 0; j < features_; ++j) {
      gamma_.grad[j] += dy[j] * nr[j];
      beta_.grad[j] += dy[j];
      dxhat[static_cast<std::size_t>(j)] = dy[j] * gamma_.value[j];
      sum += dxhat[static_cast<std::size_t>(j)];
      sum_xh += dxhat[static_cast<std::size_t>(j)] * nr[j];
    }
    const double scale = inv_std_[static_cast<std::size_t>(r)] / features_;
    double* dx = grad_in.data() + static_cast<std::size_t>(r) * features_;
    for (int j = 0; j < features_; ++j)
      dx[j] = scale * (features_ * dxhat[static_cast<std::size_t>(j)] - sum - nr[j] * sum_xh);
  }
  return grad_in;
}

void LayerNorm::collect_params(std::vector<Param*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

// ---------------------------------------------------------------- attention

MultiHeadSelfAttention::MultiHeadSelfAttention(const std::string& name, int features, int heads,
                                               Rng& rng)
    : features_(features),
      heads_(heads),
      head_dim_(heads > 0 ? features / heads : 0),
      qkv_(name + ".qkv", features, 3 * features, rng),
      out_(name + ".out", features, features, rng) {
  require(heads > 0 && features % heads == 0, ErrorKind::invalid_argument,
          name + ": width " + std::to_string(features) + " not divisible by " +
              std::to_string(heads) + " heads");
}

Tensor MultiHeadSelfAttention::forward(const Tensor& x, Mode mode) {
  require_tokens(x, features_, "attention");
  const int batch = x.dim(0), len = x.dim(1);
  qkv_cache_ = qkv_.forward(x, mode);
  attention_ = Tensor({batch, heads_, len, len});
  Tensor mixed({batch, len, features_});
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim_));
  const int d3 = 3 * features_;

#pragma omp parallel
  {
    std::vector<double> q(static_cast<std::size_t>(len) * head_dim_);
    std::vector<double> k(q.size()), v(q.size()), o(q.size());
#pragma omp for schedule(static)
    for (int nh = 0; nh < batch * heads_; ++nh) {
      const int n = nh / heads_, h = nh % heads_;
      const double* base = qkv_cache_.data() + static_cast<std::size_t>(n) * len * d3;
      for (int t = 0; t < len; ++t)
        for (int j = 0; j < head_dim_; ++j) {
          const std::size_t src = static_cast<std::size_t>(t) * d3 + h * head_dim_ + j;
          const std::size_t dst = static_cast<std::size_t>(t) * head_dim_ + j;
          q[dst] = base[src];
          k[dst] = base[src + features_];
          v[dst] = base[src + 2 * features_];
        }
      double* att = attention_.data() + static_cast<std::size_t>(nh) * len * len;
      kernels::gemm(Trans::no, Trans::yes, len, len, head_dim_, q.data(), k.data(), 0.0, att);
      for (int r = 0; r < len; ++r) {
        double* row = att + static_cast<std::size_t>(r) * len;
        double peak = row[0] * scale;
        for (int c = 1; c < len; ++c) peak = std::max(peak, row[c] * scale);
        double total = 0.0;
        for (int c = 0; c < len; ++c) {
          row[c] = std::exp(row[c] * scale - peak);
          total += row[c];
        }
        for (int c = 0; c < len; ++c) row[c] /= total;
      }
      kernels::gemm(Trans::no, Trans::no, len, head_dim_, len, att, v.data(), 0.0, o.data());
      double* dst = mixed.data() + static_cast<std::size_t>(n) * len * features_;
      for (int t = 0; t < len; ++t)
        for (int j = 0; j < head_dim_; ++j)
          dst[static_cast<std::size_t>(t) * features_ + h * head_dim_ + j] =
              o[static_cast<std::size_t>(t) * head_dim_ + j];
    }
  }
  return out_.forward(mixed, mode);
}

Tensor MultiHeadSelfAttention::backward(const Tensor& grad_out) {
  const Tensor grad_mixed = out_.backward(grad_out);
  const int batch = grad_mixed.dim(0), len = grad_mixed.dim(1);
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim_));
  const int d3 = 3 * features_;
  Tensor grad_qkv({batch, len, d3});

#pragma omp parallel
  {
    const std::size_t block = static_cast<std::size_t>(len) * head_dim_;
    std::vector<double> q(block), k(block), v(block), dout(block);
    std::vector<double> dq(block), dk(block), dv(block);
    std::vector<double> dp(static_cast<std::size_t>(len) * len);
#pragma omp for schedule(static)
    for (int nh = 0; nh < batch * heads_; ++nh) {
      const int n = nh / heads_, h = nh % heads_;
      const double* base = qkv_cache_.data() + static_cast<std::size_t>(n) * len * d3;
      const double* gm = grad_mixed.data() + static_cast<std::size_t>(n) * len * features_;
      for (int t = 0; t < len; ++t)
        for (int j = 0; j < head_dim_; ++j) {
          const std::size_t src = static_cast<std::size_t>(t) * d3 + h * head_dim_ + j;
          const std::size_t dst = static_cast<std::size_t>(t) * head_dim_ + j;
          q[dst] = base[src];
          k[dst] = base[src + features_];
          v[dst] = base[src + 2 * features_];
          dout[dst] = gm[static_cast<std::size_t>(t) * features_ + h * head_dim_ + j];
        }
      const double* att = attention_.data() + static_cast<std::size_t>(nh) * len * len;
      // dV = P^T dO, dP = dO V^T
      kernels::gemm(Trans::yes, Trans::no, len, head_dim_, len, att, dout.data(), 0.0, dv.data());
      kernels::gemm(Trans::no, Trans::yes, len, len, head_dim_, dout.data(), v.data(), 0.0, dp.data());
      // Softmax backward, then fold in the score scale: dS = P * (dP - <dP, P>) * scale.
      for (int r = 0; r < len; ++r) {
        const double* pr = att + static_cast<std::size_t>(r) * len;
        double* dr = dp.data() + static_cast<std::size_t>(r) * len;
        double dot = 0.0;
        for (int c = 0; c < len; ++c) dot += dr[c] * pr[c];
        for (int c = 0; c < len; ++c) dr[c] = pr[c] * (dr[c] - dot) * scale;
      }
      // dQ = dS K, dK = dS^T Q
      kernels::gemm(Trans::no, Trans::no, len, head_dim_, len, dp.data(), k.data(), 0.0, dq.data());
      kernels::gemm(Trans::yes, Trans::no, len, head_dim_, len, dp.data(), q.data(), 0.0, dk.data());
      double* g = grad_qkv.data() + static_cast<std::size_t>(n) * len * d3;
      for (int t = 0; t < len; ++t)
        for (int j = 0; j < head_dim_; ++j) {
          const std::size_t dst = static_cast<std::size_t>(t) * d3 + h * head_dim_ + j;
          const std::size_t src = static_cast<std::size_t>(t) * head_dim_ + j;
          g[dst] = dq[src];
          g[dst + features_] = dk[src];
          g[dst + 2 * features_] = dv[src];
        }
    }
  }
  return qkv_.backward(grad_qkv);
}

void MultiHeadSelfAttention::collect_params(std::vector<Param*>& out) {
  qkv_.collect_params(out);
  out_.collect_params(out);
}

// ---------------------------------------------------------------- encoder layer

TransformerLayer::TransformerLayer(const std::string& name, int features, int heads,
                                   int ffn_multiplier, Rng& rng)
    : attention_(name + ".attn", features, heads, rng),
      norm1_(name + ".norm1", features),
      norm2_(name + ".norm2", features) {
  require(ffn_multiplier >= 1, ErrorKind::invalid_argument, name + ": ffn multiplier must be >= 1");
  ffn_.add<Linear>(name + ".ffn.fc1", features, features * ffn_multiplier, rng);
  ffn_.add<Relu>();
  ffn_.add<Linear>(name + ".ffn.fc2", features * ffn_multiplier, features, rng);
}

Tensor TransformerLayer::forward(const Tensor& x, Mode mode) {
  Tensor a = attention_.forward(x, mode);
  a += x;
  const Tensor h = norm1_.forward(a, mode);
  Tensor b = ffn_.forward(h, mode);
  b += h;
  return norm2_.forward(b, mode);
}

Tensor TransformerLayer::backward(const Tensor& grad_out) {
  const Tensor gb = norm2_.backward(grad_out);
  Tensor gh = ffn_.backward(gb);
  gh += gb;
  const Tensor ga = norm1_.backward(gh);
  Tensor gx = attention_.backward(ga);
  gx += ga;
  return gx;
}

void TransformerLayer::collect_params(std::vector<Param*>& out) {
  attention_.collect_params(out);
  norm1_.collect_params(out);
  ffn_.collect_params(out);
  norm2_.collect_params(out);
}

// ---------------------------------------------------------------- helpers

Tensor to_tokens(const Tensor& features) {
  require(features.rank() == 4, ErrorKind::shape, "to_tokens expects NCHW");
  const int n = features.dim(0), c = features.dim(1), h = features.dim(2), w = features.dim(3);
  const int len = h * w;
  Tensor tokens({n, len, c});
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch) {
      const double* src = features.data() + (static_cast<std::size_t>(b) * c + ch) * len;
      double* dst = tokens.data() + static_cast<std::size_t>(b) * len * c + ch;
      for (int t = 0; t < len; ++t) dst[static_cast<std::size_t>(t) * c] = src[t];
    }
  return tokens;
}

Tensor from_tokens(const Tensor& tokens, int height, int width) {
  require(tokens.rank() == 3 && tokens.dim(1) == height * width, ErrorKind::shape,
          "from_tokens: " + shape_string(tokens.shape()) + " does not hold " +
              std::to_string(height) + "x" + std::to_string(width) + " tokens");
  const int n = tokens.dim(0), len = tokens.dim(1), c = tokens.dim(2);
  Tensor features({n, c, height, width});
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch) {
      const double* src = tokens.data() + static_cast<std::size_t>(b) * len * c + ch;
      double* dst = features.data() + (static_cast<std::size_t>(b) * c + ch) * len;
      for (int t = 0; t < len; ++t) dst[t] = src[static_cast<std::size_t>(t) * c];
    }
  return features;
}

Tensor sinusoidal_position_table(int height, int width, int features) {
  require(features % 4 == 0, ErrorKind::invalid_argument,
          "sinusoidal 2-D positions need a width divisible by 4, got " + std::to_string(features));
  const int half = features / 2;
  Tensor table({height * width, features});
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double* row = table.data() + (static_cast<std::size_t>(y) * width + x) * features;
      for (int i = 0; i < half / 2; ++i) {
        const double freq = std::pow(10000.0, -2.0 * i / half);
        row[2 * i] = std::sin(y * freq);
        row[2 * i + 1] = std::cos(y * freq);
        row[half + 2 * i] = std::sin(x * freq);
        row[half + 2 * i + 1] = std::cos(x * freq);
      }
    }
  }
  return table;
}

}  // namespace chsnet
