#include "sige/eltwise.hpp"

#include <cmath>

namespace sige {

const char* act_name(ActKind k) {
  switch (k) {
    case ActKind::None: return "none";
    case ActKind::Relu: return "relu";
    case ActKind::Silu: return "silu";
  }
  return "none";
}

ActKind act_from_name(const std::string& s) {
  if (s == "none") return ActKind::None;
  if (s == "relu") return ActKind::Relu;
  if (s == "silu") return ActKind::Silu;
  throw ConfigError("unknown activation: " + s);
}

void activation_inplace(float* p, size_t count, ActKind kind) {
  switch (kind) {
    case ActKind::None:
      return;
    case ActKind::Relu:
      for (size_t i = 0; i < count; ++i) p[i] = p[i] > 0.0f ? p[i] : 0.0f;
      return;
    case ActKind::Silu:
      for (size_t i = 0; i < count; ++i) {
        p[i] = p[i] / (1.0f + std::exp(-p[i]));
      }
      return;
  }
}

Tensor activation(const Tensor& t, ActKind kind) {
  Tensor out = t;
  activation_inplace(out.data.data(), out.data.size(), kind);
  return out;
}

namespace {

// Resolves the param slice for sample `in`: c values are broadcast, n*c values
// are sample-major.
const float* param_slice(const std::vector<float>& v, int channels, int in,
                         const char* op) {
  if (static_cast<int>(v.size()) == channels) return v.data();
  if (v.size() % static_cast<size_t>(channels) == 0 &&
      static_cast<size_t>(in + 1) * channels <= v.size()) {
    return v.data() + static_cast<size_t>(in) * channels;
  }
  throw ConfigError(std::string(op) + ": affine param size " +
                    std::to_string(v.size()) + " does not match channels " +
                    std::to_string(channels));
}

}  // namespace

void scale_shift_inplace(Tensor& t, const std::vector<float>& scale,
                         const std::vector<float>& shift) {
  if (scale.size() != shift.size()) {
    throw ConfigError("scale_shift: scale/shift size mismatch");
  }
  size_t hw = static_cast<size_t>(t.h) * t.w;
  for (int in = 0; in < t.n; ++in) {
    const float* sc = param_slice(scale, t.c, in, "scale_shift");
    const float* sh = param_slice(shift, t.c, in, "scale_shift");
    for (int ic = 0; ic < t.c; ++ic) {
      float* p = t.plane(in, ic);
      float a = sc[ic], b = sh[ic];
      for (size_t i = 0; i < hw; ++i) p[i] = a * p[i] + b;
    }
  }
}

Tensor scale_shift(const Tensor& t, const std::vector<float>& scale,
                   const std::vector<float>& shift) {
  Tensor out = t;
  scale_shift_inplace(out, scale, shift);
  return out;
}

void Epilogue::add_scale_shift(std::vector<float> scale,
                               std::vector<float> shift) {
  Step s;
  s.kind = Step::Kind::ScaleShift;
  s.scale = std::move(scale);
  s.shift = std::move(shift);
  steps.push_back(std::move(s));
}

void Epilogue::add_activation(ActKind kind) {
  if (kind == ActKind::None) return;
  Step s;
  s.kind = Step::Kind::Activation;
  s.act = kind;
  steps.push_back(std::move(s));
}

void Epilogue::apply_slab(float* data, int channels, size_t hw,
                          int sample) const {
  for (const Step& s : steps) {
    if (s.kind == Step::Kind::Activation) {
      activation_inplace(data, static_cast<size_t>(channels) * hw, s.act);
      continue;
    }
    const float* sc = param_slice(s.scale, channels, sample, "epilogue");
    const float* sh = param_slice(s.shift, channels, sample, "epilogue");
    for (int ic = 0; ic < channels; ++ic) {
      float* p = data + static_cast<size_t>(ic) * hw;
      float a = sc[ic], b = sh[ic];
      for (size_t i = 0; i < hw; ++i) p[i] = a * p[i] + b;
    }
  }
}

void Epilogue::apply_span(float* p, size_t count, int channel, int channels,
                          int sample) const {
  for (const Step& s : steps) {
    if (s.kind == Step::Kind::Activation) {
      activation_inplace(p, count, s.act);
      continue;
    }
    const float* sc = param_slice(s.scale, channels, sample, "epilogue");
    const float* sh = param_slice(s.shift, channels, sample, "epilogue");
    float a = sc[channel], b = sh[channel];
    for (size_t i = 0; i < count; ++i) p[i] = a * p[i] + b;
  }
}

void Epilogue::apply_cell(float* p, size_t stride, int channels,
                          int sample) const {
  for (const Step& s : steps) {
    if (s.kind == Step::Kind::Activation) {
      for (int ic = 0; ic < channels; ++ic) {
        activation_inplace(p + static_cast<size_t>(ic) * stride, 1, s.act);
      }
      continue;
    }
    const float* sc = param_slice(s.scale, channels, sample, "epilogue");
    const float* sh = param_slice(s.shift, channels, sample, "epilogue");
    for (int ic = 0; ic < channels; ++ic) {
      float* v = p + static_cast<size_t>(ic) * stride;
      *v = sc[ic] * *v + sh[ic];
    }
  }
}

void Epilogue::apply_tensor(Tensor& t) const {
  size_t chw = static_cast<size_t>(t.c) * t.h * t.w;
  size_t hw = static_cast<size_t>(t.h) * t.w;
  for (int in = 0; in < t.n; ++in) {
    apply_slab(t.data.data() + static_cast<size_t>(in) * chw, t.c, hw, in);
  }
}

}  // namespace sige
