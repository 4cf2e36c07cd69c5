#pragma once

#include <string>
#include <vector>

#include "sige/tensor.hpp"

namespace sige {

enum class NormKind { Group, Instance, Batch };

const char* norm_name(NormKind k);
NormKind norm_from_name(const std::string& s);

// Per-(sample, group) mean and biased variance, sample-major.
struct NormStats {
  int batch = 0;
  int groups = 0;
  float eps = 1e-5f;
  std::vector<float> mean, var;  // batch * groups values
};

// Reduces over each (sample, group) slab of channels. Fixed traversal order
// (channel within group, then rows, then columns) with double accumulators,
// so results are reproducible at any thread count.
NormStats compute_norm_stats(const Tensor& t, int groups, float eps = 1e-5f);

// Folded normalization: y = scale[c] * x + shift[c], with
//   scale[c] = gamma[c] / sqrt(var[group(c)] + eps)
//   shift[c] = beta[c] - mean[group(c)] * scale[c]
// Output vectors are batch * channels, sample-major.
struct FoldedNorm {
  std::vector<float> scale, shift;
};

FoldedNorm fold_stats(const NormStats& stats, const std::vector<float>& gamma,
                      const std::vector<float>& beta, int channels);

// Group normalization, defined as the exact composition
// scale_shift(t, fold_stats(compute_norm_stats(t, groups), gamma, beta)).
Tensor group_norm(const Tensor& t, int groups, const std::vector<float>& gamma,
                  const std::vector<float>& beta, float eps = 1e-5f);

}  // namespace sige
