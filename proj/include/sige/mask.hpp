#pragma once

#include <cstdint>
#include <vector>

#include "sige/tensor.hpp"

namespace sige {

// Boolean 2-D mask of changed pixels, shared across the batch.
struct DifferenceMask {
  int h = 0, w = 0;
  std::vector<uint8_t> bits;  // row-major, 0 or 1

  DifferenceMask() = default;
  DifferenceMask(int h_, int w_) : h(h_), w(w_), bits(static_cast<size_t>(h_) * w_, 0) {}

  bool at(int y, int x) const { return bits[static_cast<size_t>(y) * w + x] != 0; }
  void set(int y, int x, bool v) { bits[static_cast<size_t>(y) * w + x] = v ? 1 : 0; }

  size_t count_true() const;
  bool any() const { return count_true() > 0; }
  double area_fraction() const {
    return static_cast<double>(count_true()) / (static_cast<double>(h) * w);
  }
  uint64_t content_hash() const { return fnv1a64(bits.data(), bits.size()); }
};

// True where max over channels of |edited - original| exceeds threshold.
// Batch entries are OR-ed together: one mask serves the whole batch.
DifferenceMask compute_difference_mask(const Tensor& original,
                                       const Tensor& edited, float threshold);

// Max-pool downsampling: a target cell is true iff any source pixel in its
// window is true. Source dims must be integer multiples of the target dims.
DifferenceMask downsample_mask(const DifferenceMask& m, int out_h, int out_w);

// Chebyshev dilation: output true iff any input pixel within the
// (2r+1)x(2r+1) square is true. radius 0 is the identity.
DifferenceMask dilate_mask(const DifferenceMask& m, int radius);

// One active tile index per batch sample, at the resolution the mask lives at.
// r and c are the tile's top-left corner (multiples of block_size).
struct BlockIndex {
  int n = 0, r = 0, c = 0;
  bool operator==(const BlockIndex&) const = default;
};

struct BlockIndexSet {
  int block_size = 0;
  int h = 0, w = 0;  // resolution the indices address
  std::vector<BlockIndex> indices;  // sorted by (n, r, c), duplicate-free

  size_t count() const { return indices.size(); }
  size_t per_sample() const;
  uint64_t content_hash() const;
};

// Overlays a stride-block_size grid anchored at (0, 0) and keeps tiles that
// contain at least one true pixel. Tiles at the fringe may extend past the
// mask; they are kept. The same tile set is emitted for every batch sample.
BlockIndexSet mask_to_block_indices(const DifferenceMask& m, int block_size,
                                    int batch);

}  // namespace sige
