#pragma once

// Numeric kernels behind the layers. The functions in chsnet::kernels are the
// OpenMP-parallel production versions; chsnet::kernels::reference holds plain
// serial loops with the same signatures, kept for tests and the benchmark.
//
// Parallel kernels never split a single output element's accumulation across
// threads, so results are bit-identical for any thread count.

namespace chsnet::kernels {

enum class Trans { no, yes };

// C(m x n) = beta * C + op(A) * op(B), where op(A) is m x k and op(B) is k x n.
// All matrices are dense row-major; a transposed operand is stored as its
// untransposed shape (A as k x m, B as n x k).
void gemm(Trans trans_a, Trans trans_b, int m, int n, int k, const double* a, const double* b,
          double beta, double* c);

struct ConvGeometry {
  int in_channels = 0;
  int out_channels = 0;
  int in_height = 0;
  int in_width = 0;
  int kernel = 3;
  int stride = 1;
  int pad = 1;
  int dilation = 1;

  int out_height() const {
    return (in_height + 2 * pad - dilation * (kernel - 1) - 1) / stride + 1;
  }
  int out_width() const {
    return (in_width + 2 * pad - dilation * (kernel - 1) - 1) / stride + 1;
  }
  int patch_size() const { return in_channels * kernel * kernel; }
  bool is_pointwise() const { return kernel == 1 && stride == 1 && pad == 0; }
};

// col is patch_size() x (out_height * out_width).
void im2col(const ConvGeometry& g, const double* image, double* col);
// Accumulates col back into image (image must be zeroed by the caller).
void col2im(const ConvGeometry& g, const double* col, double* image);

// input: batch x Cin x H x W, weight: Cout x Cin x k x k, bias: Cout (nullable),
// output: batch x Cout x Ho x Wo (overwritten).
void conv2d_forward(const ConvGeometry& g, int batch, const double* input, const double* weight,
                    const double* bias, double* output);

// grad_input is overwritten (nullable), grad_weight and grad_bias accumulate
// (grad_bias nullable).
void conv2d_backward(const ConvGeometry& g, int batch, const double* input, const double* weight,
                     const double* grad_output, double* grad_input, double* grad_weight,
                     double* grad_bias);

namespace reference {

void gemm(Trans trans_a, Trans trans_b, int m, int n, int k, const double* a, const double* b,
          double beta, double* c);

void conv2d_forward(const ConvGeometry& g, int batch, const double* input, const double* weight,
                    const double* bias, double* output);

void conv2d_backward(const ConvGeometry& g, int batch, const double* input, const double* weight,
                     const double* grad_output, double* grad_input, double* grad_weight,
                     double* grad_bias);

}  // namespace reference

}  // namespace chsnet::kernels
