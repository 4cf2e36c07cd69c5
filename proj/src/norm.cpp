#include "sige/norm.hpp"

#include <cmath>

#include "sige/eltwise.hpp"

namespace sige {

const char* norm_name(NormKind k) {
  switch (k) {
    case NormKind::Group: return "group";
    case NormKind::Instance: return "instance";
    case NormKind::Batch: return "batch";
  }
  return "group";
}

NormKind norm_from_name(const std::string& s) {
  if (s == "group") return NormKind::Group;
  if (s == "instance") return NormKind::Instance;
  if (s == "batch") return NormKind::Batch;
  throw ConfigError("unknown norm kind: " + s);
}

NormStats compute_norm_stats(const Tensor& t, int groups, float eps) {
  if (groups < 1 || t.c % groups != 0) {
    throw ConfigError("compute_norm_stats: groups " + std::to_string(groups) +
                      " must divide channels " + std::to_string(t.c));
  }
  NormStats stats;
  stats.batch = t.n;
  stats.groups = groups;
  stats.eps = eps;
  stats.mean.resize(static_cast<size_t>(t.n) * groups);
  stats.var.resize(static_cast<size_t>(t.n) * groups);

  int cpg = t.c / groups;
  size_t hw = static_cast<size_t>(t.h) * t.w;
  double count = static_cast<double>(cpg) * hw;

  for (int in = 0; in < t.n; ++in) {
    for (int g = 0; g < groups; ++g) {
      double sum = 0.0;
      for (int ic = g * cpg; ic < (g + 1) * cpg; ++ic) {
        const float* p = t.plane(in, ic);
        for (size_t i = 0; i < hw; ++i) sum += p[i];
      }
      double mean = sum / count;
      // Second pass keeps the variance non-negative by construction.
      double sq = 0.0;
      for (int ic = g * cpg; ic < (g + 1) * cpg; ++ic) {
        const float* p = t.plane(in, ic);
        for (size_t i = 0; i < hw; ++i) {
          double d = p[i] - mean;
          sq += d * d;
        }
      }
      size_t slot = static_cast<size_t>(in) * groups + g;
      stats.mean[slot] = static_cast<float>(mean);
      stats.var[slot] = static_cast<float>(sq / count);
    }
  }
  return stats;
}

FoldedNorm fold_stats(const NormStats& stats, const std::vector<float>& gamma,
                      const std::vector<float>& beta, int channels) {
  if (static_cast<int>(gamma.size()) != channels ||
      static_cast<int>(beta.size()) != channels) {
    throw ConfigError("fold_stats: gamma/beta must have one value per channel");
  }
  if (channels % stats.groups != 0) {
    throw ConfigError("fold_stats: groups must divide channels");
  }
  int cpg = channels / stats.groups;
  FoldedNorm out;
  out.scale.resize(static_cast<size_t>(stats.batch) * channels);
  out.shift.resize(static_cast<size_t>(stats.batch) * channels);
  for (int in = 0; in < stats.batch; ++in) {
    for (int ic = 0; ic < channels; ++ic) {
      size_t gslot = static_cast<size_t>(in) * stats.groups + ic / cpg;
      float scale = gamma[ic] / std::sqrt(stats.var[gslot] + stats.eps);
      float shift = beta[ic] - stats.mean[gslot] * scale;
      size_t cslot = static_cast<size_t>(in) * channels + ic;
      out.scale[cslot] = scale;
      out.shift[cslot] = shift;
    }
  }
  return out;
}

Tensor group_norm(const Tensor& t, int groups, const std::vector<float>& gamma,
                  const std::vector<float>& beta, float eps) {
  NormStats stats = compute_norm_stats(t, groups, eps);
  FoldedNorm folded = fold_stats(stats, gamma, beta, t.c);
  return scale_shift(t, folded.scale, folded.shift);
}

}  // namespace sige
