#include "sige/mask.hpp"

#include <algorithm>
#include <cmath>

namespace sige {

size_t DifferenceMask::count_true() const {
  size_t n = 0;
  for (uint8_t b : bits) n += b;
  return n;
}

DifferenceMask compute_difference_mask(const Tensor& original,
                                       const Tensor& edited, float threshold) {
  require_same_shape(original, edited, "compute_difference_mask");
  if (threshold < 0.0f) {
    throw ConfigError("compute_difference_mask: threshold must be >= 0");
  }
  DifferenceMask m(original.h, original.w);
  size_t hw = static_cast<size_t>(original.h) * original.w;
  for (int in = 0; in < original.n; ++in) {
    for (int ic = 0; ic < original.c; ++ic) {
      const float* a = original.plane(in, ic);
      const float* b = edited.plane(in, ic);
      for (size_t i = 0; i < hw; ++i) {
        if (std::fabs(b[i] - a[i]) > threshold) m.bits[i] = 1;
      }
    }
  }
  return m;
}

DifferenceMask downsample_mask(const DifferenceMask& m, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1 || out_h > m.h || out_w > m.w) {
    throw ConfigError("downsample_mask: target must be >= 1 and <= source");
  }
  if (m.h % out_h != 0 || m.w % out_w != 0) {
    throw ConfigError("downsample_mask: non-integer scale factor (" +
                      std::to_string(m.h) + "x" + std::to_string(m.w) + " -> " +
                      std::to_string(out_h) + "x" + std::to_string(out_w) + ")");
  }
  int fy = m.h / out_h, fx = m.w / out_w;
  DifferenceMask out(out_h, out_w);
  for (int y = 0; y < m.h; ++y) {
    const uint8_t* src = m.bits.data() + static_cast<size_t>(y) * m.w;
    uint8_t* dst = out.bits.data() + static_cast<size_t>(y / fy) * out_w;
    for (int x = 0; x < m.w; ++x) {
      if (src[x]) dst[x / fx] = 1;
    }
  }
  return out;
}

DifferenceMask dilate_mask(const DifferenceMask& m, int radius) {
  if (radius < 0) throw ConfigError("dilate_mask: radius must be >= 0");
  if (radius == 0) return m;
  // Separable: a square structuring element is a horizontal run followed by a
  // vertical run.
  DifferenceMask horiz(m.h, m.w);
  for (int y = 0; y < m.h; ++y) {
    const uint8_t* src = m.bits.data() + static_cast<size_t>(y) * m.w;
    uint8_t* dst = horiz.bits.data() + static_cast<size_t>(y) * m.w;
    for (int x = 0; x < m.w; ++x) {
      if (!src[x]) continue;
      int lo = std::max(0, x - radius), hi = std::min(m.w - 1, x + radius);
      for (int t = lo; t <= hi; ++t) dst[t] = 1;
    }
  }
  DifferenceMask out(m.h, m.w);
  for (int y = 0; y < m.h; ++y) {
    const uint8_t* src = horiz.bits.data() + static_cast<size_t>(y) * m.w;
    int lo = std::max(0, y - radius), hi = std::min(m.h - 1, y + radius);
    for (int x = 0; x < m.w; ++x) {
      if (!src[x]) continue;
      for (int t = lo; t <= hi; ++t) out.bits[static_cast<size_t>(t) * m.w + x] = 1;
    }
  }
  return out;
}

size_t BlockIndexSet::per_sample() const {
  if (indices.empty()) return 0;
  size_t n = 0;
  for (const BlockIndex& b : indices) {
    if (b.n == indices.front().n) ++n;
  }
  return n;
}

uint64_t BlockIndexSet::content_hash() const {
  uint64_t hs = fnv1a64(&block_size, sizeof(block_size));
  hs = fnv1a64(&h, sizeof(h), hs);
  hs = fnv1a64(&w, sizeof(w), hs);
  for (const BlockIndex& b : indices) {
    hs = fnv1a64(&b.n, sizeof(b.n), hs);
    hs = fnv1a64(&b.r, sizeof(b.r), hs);
    hs = fnv1a64(&b.c, sizeof(b.c), hs);
  }
  return hs;
}

BlockIndexSet mask_to_block_indices(const DifferenceMask& m, int block_size,
                                    int batch) {
  if (block_size < 1) throw ConfigError("mask_to_block_indices: block size must be >= 1");
  if (batch < 1) throw ConfigError("mask_to_block_indices: batch must be >= 1");
  BlockIndexSet set;
  set.block_size = block_size;
  set.h = m.h;
  set.w = m.w;

  std::vector<std::pair<int, int>> tiles;
  for (int r = 0; r < m.h; r += block_size) {
    for (int c = 0; c < m.w; c += block_size) {
      bool active = false;
      int ylim = std::min(m.h, r + block_size);
      int xlim = std::min(m.w, c + block_size);
      for (int y = r; y < ylim && !active; ++y) {
        const uint8_t* row = m.bits.data() + static_cast<size_t>(y) * m.w;
        for (int x = c; x < xlim; ++x) {
          if (row[x]) {
            active = true;
            break;
          }
        }
      }
      if (active) tiles.emplace_back(r, c);
    }
  }

  set.indices.reserve(tiles.size() * batch);
  for (int in = 0; in < batch; ++in) {
    for (auto [r, c] : tiles) set.indices.push_back({in, r, c});
  }
  return set;
}

}  // namespace sige
