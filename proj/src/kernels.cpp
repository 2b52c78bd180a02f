#include "chsnet/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <vector>

namespace chsnet::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr long long kParallelWork = 1LL << 16;

// C tiles of 4 x 8 accumulate in registers over the whole of k. Every C
// element sums p in ascending order starting from its (beta-scaled) value,
// and whether an element lands in a full tile or an edge depends only on
// m and n, so the result does not depend on how rows are split over threads.
constexpr int kTileRows = 4;
constexpr int kTileCols = 8;

void gemm_tile(int rows, int cols, int n, int k, const double* a, const double* b, double* c) {
  double acc[kTileRows][kTileCols] = {};
  for (int r = 0; r < rows; ++r)
    for (int j = 0; j < cols; ++j) acc[r][j] = c[static_cast<std::size_t>(r) * n + j];
  if (rows == kTileRows && cols == kTileCols) {
    const double* a0 = a;
    const double* a1 = a0 + k;
    const double* a2 = a1 + k;
    const double* a3 = a2 + k;
    for (int p = 0; p < k; ++p) {
      const double* brow = b + static_cast<std::size_t>(p) * n;
      const double v0 = a0[p], v1 = a1[p], v2 = a2[p], v3 = a3[p];
#pragma omp simd
      for (int j = 0; j < kTileCols; ++j) {
        acc[0][j] += v0 * brow[j];
        acc[1][j] += v1 * brow[j];
        acc[2][j] += v2 * brow[j];
        acc[3][j] += v3 * brow[j];
      }
    }
  } else {
    for (int p = 0; p < k; ++p) {
      const double* brow = b + static_cast<std::size_t>(p) * n;
      for (int r = 0; r < rows; ++r) {
        const double v = a[static_cast<std::size_t>(r) * k + p];
        for (int j = 0; j < cols; ++j) acc[r][j] += v * brow[j];
      }
    }
  }
  for (int r = 0; r < rows; ++r)
    for (int j = 0; j < cols; ++j) c[static_cast<std::size_t>(r) * n + j] = acc[r][j];
}

// dst (cols x rows) = src (rows x cols) transposed, in cache-sized blocks.
void transpose(const double* src, int rows, int cols, double* dst) {
  constexpr int kBlock = 32;
  for (int r0 = 0; r0 < rows; r0 += kBlock)
    for (int c0 = 0; c0 < cols; c0 += kBlock) {
      const int r1 = std::min(rows, r0 + kBlock), c1 = std::min(cols, c0 + kBlock);
      for (int r = r0; r < r1; ++r)
        for (int c = c0; c < c1; ++c)
          dst[static_cast<std::size_t>(c) * rows + r] = src[static_cast<std::size_t>(r) * cols + c];
    }
}

void gemm_rows(int row_begin, int row_end, int n, int k, const double* a, const double* b,
               double* c) {
  const int rows = row_end - row_begin;
  const double* arows = a + static_cast<std::size_t>(row_begin) * k;
  double* crows = c + static_cast<std::size_t>(row_begin) * n;
  for (int j = 0; j < n; j += kTileCols)
    gemm_tile(rows, std::min(kTileCols, n - j), n, k, arows, b + j, crows + j);
}

}  // namespace

void gemm(Trans trans_a, Trans trans_b, int m, int n, int k, const double* a, const double* b,
          double beta, double* c) {
  if (m <= 0 || n <= 0) return;
  const std::size_t c_size = static_cast<std::size_t>(m) * n;
  if (beta == 0.0) {
    std::fill(c, c + c_size, 0.0);
  } else if (beta != 1.0) {
    for (std::size_t i = 0; i < c_size; ++i) c[i] *= beta;
  }
  if (k <= 0) return;

  std::vector<double> a_packed;
  if (trans_a == Trans::yes) {
    a_packed.resize(static_cast<std::size_t>(m) * k);
    transpose(a, k, m, a_packed.data());
    a = a_packed.data();
  }
  std::vector<double> b_packed;
  if (trans_b == Trans::yes) {
    b_packed.resize(static_cast<std::size_t>(k) * n);
    transpose(b, n, k, b_packed.data());
    b = b_packed.data();
  }

  const long long work = static_cast<long long>(m) * n * k;
  const int row_blocks = (m + kTileRows - 1) / kTileRows;
#pragma omp parallel for schedule(static) if (work >= kParallelWork && !omp_in_parallel())
  for (int rb = 0; rb < row_blocks; ++rb) {
    gemm_rows(rb * kTileRows, std::min(m, (rb + 1) * kTileRows), n, k, a, b, c);
  }
}

void im2col(const ConvGeometry& g, const double* image, double* col) {
  const int out_h = g.out_height();
  const int out_w = g.out_width();
  const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
  for (int c = 0; c < g.in_channels; ++c) {
    const double* src = image + static_cast<std::size_t>(c) * g.in_height * g.in_width;
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx) {
        double* dst = col + (static_cast<std::size_t>(c) * g.kernel * g.kernel +
                             static_cast<std::size_t>(ky) * g.kernel + kx) * plane;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky * g.dilation;
          double* row = dst + static_cast<std::size_t>(oy) * out_w;
          if (iy < 0 || iy >= g.in_height) {
            std::fill(row, row + out_w, 0.0);
            continue;
          }
          const double* srow = src + static_cast<std::size_t>(iy) * g.in_width;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx * g.dilation;
            row[ox] = (ix >= 0 && ix < g.in_width) ? srow[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, const double* col, double* image) {
  const int out_h = g.out_height();
  const int out_w = g.out_width();
  const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
  for (int c = 0; c < g.in_channels; ++c) {
    double* dst = image + static_cast<std::size_t>(c) * g.in_height * g.in_width;
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx) {
        const double* src = col + (static_cast<std::size_t>(c) * g.kernel * g.kernel +
                                   static_cast<std::size_t>(ky) * g.kernel + kx) * plane;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky * g.dilation;
          if (iy < 0 || iy >= g.in_height) continue;
          const double* row = src + static_cast<std::size_t>(oy) * out_w;
          double* drow = dst + static_cast<std::size_t>(iy) * g.in_width;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx * g.dilation;
            if (ix >= 0 && ix < g.in_width) drow[ix] += row[ox];
          }
        }
      }
    }
  }
}

void conv2d_forward(const ConvGeometry& g, int batch, const double* input, const double* weight,
                    const double* bias, double* output) {
  const int plane = g.out_height() * g.out_width();
  const std::size_t in_item = static_cast<std::size_t>(g.in_channels) * g.in_height * g.in_width;
  const std::size_t out_item = static_cast<std::size_t>(g.out_channels) * plane;
  const std::size_t col_size = g.is_pointwise() ? 0 : static_cast<std::size_t>(g.patch_size()) * plane;

#pragma omp parallel if (batch > 1)
  {
    std::vector<double> col(col_size);
#pragma omp for schedule(static)
    for (int n = 0; n < batch; ++n) {
      const double* x = input + n * in_item;
      double* y = output + n * out_item;
      const double* patches = x;
      if (!g.is_pointwise()) {
        im2col(g, x, col.data());
        patches = col.data();
      }
      gemm(Trans::no, Trans::no, g.out_channels, plane, g.patch_size(), weight, patches, 0.0, y);
      if (bias != nullptr) {
        for (int co = 0; co < g.out_channels; ++co) {
          double* yc = y + static_cast<std::size_t>(co) * plane;
          const double b = bias[co];
          for (int i = 0; i < plane; ++i) yc[i] += b;
        }
      }
    }
  }
}

void conv2d_backward(const ConvGeometry& g, int batch, const double* input, const double* weight,
                     const double* grad_output, double* grad_input, double* grad_weight,
                     double* grad_bias) {
  const int plane = g.out_height() * g.out_width();
  const std::size_t in_item = static_cast<std::size_t>(g.in_channels) * g.in_height * g.in_width;
  const std::size_t out_item = static_cast<std::size_t>(g.out_channels) * plane;
  const std::size_t col_size = static_cast<std::size_t>(g.patch_size()) * plane;

  if (grad_bias != nullptr) {
#pragma omp parallel for schedule(static) if (static_cast<long long>(batch) * out_item >= kParallelWork)
    for (int co = 0; co < g.out_channels; ++co) {
      double acc = grad_bias[co];
      for (int n = 0; n < batch; ++n) {
        const double* dy = grad_output + n * out_item + static_cast<std::size_t>(co) * plane;
        for (int i = 0; i < plane; ++i) acc += dy[i];
      }
      grad_bias[co] = acc;
    }
  }

  // Weight gradient: items in ascending order, rows of dW split across threads
  // inside gemm.
  {
    std::vector<double> col(g.is_pointwise() ? 0 : col_size);
    for (int n = 0; n < batch; ++n) {
      const double* x = input + n * in_item;
      const double* patches = x;
      if (!g.is_pointwise()) {
        im2col(g, x, col.data());
        patches = col.data();
      }
      gemm(Trans::no, Trans::yes, g.out_channels, g.patch_size(), plane,
           grad_output + n * out_item, patches, 1.0, grad_weight);
    }
  }

  if (grad_input != nullptr) {
#pragma omp parallel if (batch > 1)
    {
      std::vector<double> col(g.is_pointwise() ? 0 : col_size);
#pragma omp for schedule(static)
      for (int n = 0; n < batch; ++n) {
        double* dx = grad_input + n * in_item;
        const double* dy = grad_output + n * out_item;
        if (g.is_pointwise()) {
          gemm(Trans::yes, Trans::no, g.in_channels, plane, g.out_channels, weight, dy, 0.0, dx);
        } else {
          gemm(Trans::yes, Trans::no, g.patch_size(), plane, g.out_channels, weight, dy, 0.0,
               col.data());
          std::fill(dx, dx + in_item, 0.0);
          col2im(g, col.data(), dx);
        }
      }
    }
  }
}

}  // namespace chsnet::kernels
