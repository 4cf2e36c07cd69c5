#pragma once

#include <vector>

#include "sige/tensor.hpp"

namespace sige {

// 2-D convolution layer (cross-correlation), float32, zero padding (k-1)/2,
// kernel size 1 or 3, stride 1 or 2.
struct ConvLayer {
  int c_in = 0, c_out = 0, k = 1, stride = 1;
  std::vector<float> weight;  // (c_out, c_in, k, k)
  std::vector<float> bias;    // c_out values; empty means no bias

  int padding() const { return (k - 1) / 2; }

  float& wt(int oc, int ic, int ky, int kx) {
    return weight[((static_cast<size_t>(oc) * c_in + ic) * k + ky) * k + kx];
  }

  void validate() const;
};

int conv_out_dim(int in, int k, int stride);

// Dense forward. Accumulation order per output pixel is fixed: input channel,
// then kernel row, then kernel column, bias added last. Results are identical
// at any worker-thread count.
Tensor conv2d(const Tensor& input, const ConvLayer& layer, bool with_bias = true);

namespace detail {

// Single-sample conv core shared by the dense path and the block path. Both
// call this one (non-inline) function so the compiled rounding behaviour is
// identical, which the bit-exactness tests rely on. Out-of-bounds taps are
// skipped, matching zero padding.
void conv2d_raw(const float* in, int c_in, int ih, int iw, const float* weight,
                const float* bias, int c_out, int k, int stride, int pad,
                float* out, int oh, int ow);

}  // namespace detail

}  // namespace sige
