#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sige/common.hpp"

namespace sige {

// Dense 4-D float tensor, NCHW, row-major, tightly packed.
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, float fill = 0.0f);

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.n, t.c, t.h, t.w); }

  size_t numel() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  std::string shape_str() const;

  size_t idx(int in, int ic, int y, int x) const {
    return ((static_cast<size_t>(in) * c + ic) * h + y) * w + x;
  }
  float& at(int in, int ic, int y, int x) { return data[idx(in, ic, y, x)]; }
  float at(int in, int ic, int y, int x) const { return data[idx(in, ic, y, x)]; }

  float* plane(int in, int ic) { return data.data() + idx(in, ic, 0, 0); }
  const float* plane(int in, int ic) const { return data.data() + idx(in, ic, 0, 0); }

  bool all_finite() const;
  uint64_t content_hash() const;
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

float max_abs_diff(const Tensor& a, const Tensor& b);

void fill_uniform(Tensor& t, Rng& rng, float lo, float hi);

Tensor add(const Tensor& a, const Tensor& b);
Tensor subtract(const Tensor& a, const Tensor& b);

// Nearest-neighbour 2x upsample: out(y, x) = in(y / 2, x / 2).
Tensor upsample_nearest2x(const Tensor& t);

}  // namespace sige
