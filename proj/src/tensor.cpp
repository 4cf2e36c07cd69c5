#include "sige/tensor.hpp"

#include <cmath>
#include <cstdlib>

namespace sige {

Tensor::Tensor(int n_, int c_, int h_, int w_, float fill)
    : n(n_), c(c_), h(h_), w(w_) {
  if (n < 1 || c < 1 || h < 1 || w < 1) {
    throw ConfigError("tensor: all dims must be >= 1, got " + shape_str());
  }
  data.assign(static_cast<size_t>(n) * c * h * w, fill);
}

std::string Tensor::shape_str() const {
  return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " +
         std::to_string(h) + ", " + std::to_string(w) + ")";
}

bool Tensor::all_finite() const {
  for (float v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

uint64_t Tensor::content_hash() const {
  int dims[4] = {n, c, h, w};
  uint64_t hs = fnv1a64(dims, sizeof(dims));
  return fnv1a64(data.data(), data.size() * sizeof(float), hs);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ConfigError(std::string(op) + ": shape mismatch " + a.shape_str() +
                      " vs " + b.shape_str());
  }
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  float m = 0.0f;
  for (size_t i = 0; i < a.data.size(); ++i) {
    float d = std::fabs(a.data[i] - b.data[i]);
    if (d > m) m = d;
  }
  return m;
}

void fill_uniform(Tensor& t, Rng& rng, float lo, float hi) {
  for (float& v : t.data) v = rng.uniform(lo, hi);
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

Tensor subtract(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "subtract");
  Tensor out = a;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
  return out;
}

Tensor upsample_nearest2x(const Tensor& t) {
  Tensor out(t.n, t.c, t.h * 2, t.w * 2);
  for (int in = 0; in < t.n; ++in) {
    for (int ic = 0; ic < t.c; ++ic) {
      const float* src = t.plane(in, ic);
      float* dst = out.plane(in, ic);
      for (int y = 0; y < out.h; ++y) {
        const float* srow = src + (y / 2) * t.w;
        float* drow = dst + y * out.w;
        for (int x = 0; x < out.w; ++x) drow[x] = srow[x / 2];
      }
    }
  }
  return out;
}

}  // namespace sige
