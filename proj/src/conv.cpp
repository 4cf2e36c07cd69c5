#include "sige/conv.hpp"

#include <algorithm>
#include <cstring>

namespace sige {

void ConvLayer::validate() const {
  if (k != 1 && k != 3) {
    throw ConfigError("conv: kernel size must be 1 or 3, got " + std::to_string(k));
  }
  if (stride != 1 && stride != 2) {
    throw ConfigError("conv: stride must be 1 or 2, got " + std::to_string(stride));
  }
  if (c_in < 1 || c_out < 1) {
    throw ConfigError("conv: channel counts must be >= 1");
  }
  if (weight.size() != static_cast<size_t>(c_out) * c_in * k * k) {
    throw ConfigError("conv: weight size does not match (c_out, c_in, k, k)");
  }
  if (!bias.empty() && bias.size() != static_cast<size_t>(c_out)) {
    throw ConfigError("conv: bias size does not match c_out");
  }
}

int conv_out_dim(int in, int k, int stride) {
  int pad = (k - 1) / 2;
  return (in + 2 * pad - k) / stride + 1;
}

namespace detail {

void conv2d_raw(const float* in, int c_in, int ih, int iw, const float* weight,
                const float* bias, int c_out, int k, int stride, int pad,
                float* out, int oh, int ow) {
  size_t ohw = static_cast<size_t>(oh) * ow;
  parallel_for(static_cast<size_t>(c_out), [&](size_t oc) {
    float* plane = out + oc * ohw;
    std::memset(plane, 0, ohw * sizeof(float));
    for (int ic = 0; ic < c_in; ++ic) {
      const float* wbase = weight + ((oc * c_in) + ic) * static_cast<size_t>(k) * k;
      const float* iplane = in + static_cast<size_t>(ic) * ih * iw;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          float wv = wbase[ky * k + kx];
          // ox range with ix = ox*stride + kx - pad inside [0, iw).
          int ox_lo = 0;
          if (kx - pad < 0) ox_lo = (pad - kx + stride - 1) / stride;
          int ox_hi = ow;  // exclusive
          {
            int limit = iw - 1 - (kx - pad);
            if (limit < 0) {
              ox_hi = 0;
            } else {
              ox_hi = std::min(ow, limit / stride + 1);
            }
          }
          if (ox_lo >= ox_hi) continue;
          int shift = kx - pad;
          for (int oy = 0; oy < oh; ++oy) {
            int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= ih) continue;
            const float* irow = iplane + static_cast<size_t>(iy) * iw;
            float* orow = plane + static_cast<size_t>(oy) * ow;
            if (stride == 1) {
              for (int ox = ox_lo; ox < ox_hi; ++ox) orow[ox] += wv * irow[ox + shift];
            } else {
              for (int ox = ox_lo; ox < ox_hi; ++ox) orow[ox] += wv * irow[ox * 2 + shift];
            }
          }
        }
      }
    }
    if (bias) {
      float b = bias[oc];
      for (size_t i = 0; i < ohw; ++i) plane[i] += b;
    }
  });
}

}  // namespace detail

Tensor conv2d(const Tensor& input, const ConvLayer& layer, bool with_bias) {
  layer.validate();
  if (input.c != layer.c_in) {
    throw ConfigError("conv2d: input has " + std::to_string(input.c) +
                      " channels, layer expects " + std::to_string(layer.c_in));
  }
  int oh = conv_out_dim(input.h, layer.k, layer.stride);
  int ow = conv_out_dim(input.w, layer.k, layer.stride);
  if (oh < 1 || ow < 1) {
    throw ConfigError("conv2d: output dims collapse for input " + input.shape_str());
  }
  Tensor out(input.n, layer.c_out, oh, ow);
  const float* bias = (with_bias && !layer.bias.empty()) ? layer.bias.data() : nullptr;
  for (int in = 0; in < input.n; ++in) {
    detail::conv2d_raw(input.plane(in, 0), layer.c_in, input.h, input.w,
                       layer.weight.data(), bias, layer.c_out, layer.k,
                       layer.stride, layer.padding(), out.plane(in, 0), oh, ow);
  }
  return out;
}

}  // namespace sige
