#pragma once

#include <string>
#include <vector>

#include "sige/tensor.hpp"

namespace sige {

enum class ActKind { None, Relu, Silu };

const char* act_name(ActKind k);
ActKind act_from_name(const std::string& s);

void activation_inplace(float* p, size_t count, ActKind kind);
Tensor activation(const Tensor& t, ActKind kind);

// Per-channel affine. scale/shift are either c values (shared across the
// batch) or n*c values (per sample, sample-major).
void scale_shift_inplace(Tensor& t, const std::vector<float>& scale,
                         const std::vector<float>& shift);
Tensor scale_shift(const Tensor& t, const std::vector<float>& scale,
                   const std::vector<float>& shift);

// A deferred chain of element-wise steps. The sparse executor attaches one of
// these to values in flight so normalization affines and nonlinearities can be
// applied to gathered blocks instead of full tensors. Applying the chain to a
// slab is arithmetically identical to running the steps as dense ops, which is
// what the fusion-transparency tests pin down.
struct Epilogue {
  struct Step {
    enum class Kind { ScaleShift, Activation } kind;
    std::vector<float> scale, shift;  // ScaleShift: c or n*c values
    ActKind act = ActKind::None;
  };

  std::vector<Step> steps;

  bool empty() const { return steps.empty(); }
  void clear() { steps.clear(); }
  void add_scale_shift(std::vector<float> scale, std::vector<float> shift);
  void add_activation(ActKind kind);

  // Applies the chain to one contiguous (channels, hw) slab belonging to
  // batch sample `sample` (selects the slice of per-sample affine params).
  void apply_slab(float* data, int channels, size_t hw, int sample) const;

  // Applies the chain to a contiguous run of a single channel. Gather uses
  // this on the spans it copies, leaving zero-padding untouched, exactly as a
  // dense pass never transforms conv padding.
  void apply_span(float* p, size_t count, int channel, int channels,
                  int sample) const;

  // Applies the chain to one spatial cell across channels, values strided by
  // `stride`. Scatter-gather uses this per in-canvas cell.
  void apply_cell(float* p, size_t stride, int channels, int sample) const;

  void apply_tensor(Tensor& t) const;
};

}  // namespace sige
