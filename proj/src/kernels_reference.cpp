#include <cstddef>

#include "chsnet/kernels.hpp"

namespace chsnet::kernels::reference {

void gemm(Trans trans_a, Trans trans_b, int m, int n, int k, const double* a, const double* b,
          double beta, double* c) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double sum = 0.0;
      for (int p = 0; p < k; ++p) {
        const double av = trans_a == Trans::no ? a[static_cast<std::size_t>(i) * k + p]
                                               : a[static_cast<std::size_t>(p) * m + i];
        const double bv = trans_b == Trans::no ? b[static_cast<std::size_t>(p) * n + j]
                                               : b[static_cast<std::size_t>(j) * k + p];
        sum += av * bv;
      }
      double& out = c[static_cast<std::size_t>(i) * n + j];
      out = (beta == 0.0 ? 0.0 : beta * out) + sum;
    }
  }
}

void conv2d_forward(const ConvGeometry& g, int batch, const double* input, const double* weight,
                    const double* bias, double* output) {
  const int out_h = g.out_height();
  const int out_w = g.out_width();
  for (int n = 0; n < batch; ++n) {
    for (int co = 0; co < g.out_channels; ++co) {
      for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
          double sum = bias != nullptr ? bias[co] : 0.0;
          for (int ci = 0; ci < g.in_channels; ++ci) {
            for (int ky = 0; ky < g.kernel; ++ky) {
              const int iy = oy * g.stride - g.pad + ky * g.dilation;
              if (iy < 0 || iy >= g.in_height) continue;
              for (int kx = 0; kx < g.kernel; ++kx) {
                const int ix = ox * g.stride - g.pad + kx * g.dilation;
                if (ix < 0 || ix >= g.in_width) continue;
                const double x =
                    input[((static_cast<std::size_t>(n) * g.in_channels + ci) * g.in_height + iy) *
                              g.in_width + ix];
                const double w =
                    weight[((static_cast<std::size_t>(co) * g.in_channels + ci) * g.kernel + ky) *
                               g.kernel + kx];
                sum += x * w;
              }
            }
          }
          output[((static_cast<std::size_t>(n) * g.out_channels + co) * out_h + oy) * out_w + ox] =
              sum;
        }
      }
    }
  }
}

void conv2d_backward(const ConvGeometry& g, int batch, const double* input, const double* weight,
                     const double* grad_output, double* grad_input, double* grad_weight,
                     double* grad_bias) {
  const int out_h = g.out_height();
  const int out_w = g.out_width();
  if (grad_input != nullptr) {
    const std::size_t total = static_cast<std::size_t>(batch) * g.in_channels * g.in_height * g.in_width;
    for (std::size_t i = 0; i < total; ++i) grad_input[i] = 0.0;
  }
  for (int n = 0; n < batch; ++n) {
    for (int co = 0; co < g.out_channels; ++co) {
      for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
          const double dy =
              grad_output[((static_cast<std::size_t>(n) * g.out_channels + co) * out_h + oy) * out_w + ox];
          if (grad_bias != nullptr) grad_bias[co] += dy;
          for (int ci = 0; ci < g.in_channels; ++ci) {
            for (int ky = 0; ky < g.kernel; ++ky) {
              const int iy = oy * g.stride - g.pad + ky * g.dilation;
              if (iy < 0 || iy >= g.in_height) continue;
              for (int kx = 0; kx < g.kernel; ++kx) {
                const int ix = ox * g.stride - g.pad + kx * g.dilation;
                if (ix < 0 || ix >= g.in_width) continue;
                const std::size_t xi =
                    ((static_cast<std::size_t>(n) * g.in_channels + ci) * g.in_height + iy) * g.in_width + ix;
                const std::size_t wi =
                    ((static_cast<std::size_t>(co) * g.in_channels + ci) * g.kernel + ky) * g.kernel + kx;
                grad_weight[wi] += input[xi] * dy;
                if (grad_input != nullptr) grad_input[xi] += weight[wi] * dy;
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace chsnet::kernels::reference
