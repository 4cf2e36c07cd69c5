#pragma once

#include <memory>
#include <vector>

#include "sige/conv.hpp"
#include "sige/eltwise.hpp"
#include "sige/mask.hpp"
#include "sige/tensor.hpp"

namespace sige {

// A stack of per-tile activation windows, one per index in `origin`, stored
// (block, channel, bh, bw). `block` is the output-tile size the indices
// address; gathered input windows carry an extra `overlap` (bh = block +
// overlap), conv outputs carry overlap 0.
struct BlockStack {
  int channels = 0;
  int block = 0;
  int overlap = 0;
  BlockIndexSet origin;
  std::vector<float> data;

  int bh() const { return block + overlap; }
  size_t count() const { return origin.indices.size(); }
  size_t block_stride() const {
    return static_cast<size_t>(channels) * bh() * bh();
  }
  float* block_ptr(size_t i) { return data.data() + i * block_stride(); }
  const float* block_ptr(size_t i) const {
    return data.data() + i * block_stride();
  }
  float& at(size_t i, int ch, int y, int x) {
    return data[i * block_stride() + (static_cast<size_t>(ch) * bh() + y) * bh() + x];
  }
  float at(size_t i, int ch, int y, int x) const {
    return data[i * block_stride() + (static_cast<size_t>(ch) * bh() + y) * bh() + x];
  }
};

// Extracts one input window per active tile for a conv with kernel k and
// stride s. The window for the output tile at (r, c) starts at
// (r*s - pad, c*s - pad) and spans (s*b + k - s) pixels per side; positions
// outside the input are zero-filled. idx must live at the conv's output
// resolution for input x. `epilogue` is applied to the copied pixels only,
// never the zero fill, so the result is bit-exact equal to gathering from
// epilogue-applied x.
BlockStack gather(const Tensor& x, const BlockIndexSet& idx, int k, int stride,
                  const Epilogue& epilogue = {});

// Writes overlap-free blocks into a copy of `base` at their origin tiles,
// ascending block id, clipped at the fringes.
Tensor scatter(const BlockStack& blocks, const Tensor& base);
void scatter_inplace(const BlockStack& blocks, Tensor& base);

// Adds blocks into `base` in place at their origin tiles.
void scatter_add_inplace(const BlockStack& blocks, Tensor& base);

// Per-pixel provenance of a scatter: either untouched (block < 0) or written
// by (block, dy, dx). Block ids are per-sample ordinals; the tile pattern is
// identical across the batch, so a pixel's entry applies to every sample.
struct ScatterMap {
  struct Entry {
    int32_t block = -1;
    int16_t dy = 0, dx = 0;
  };
  int h = 0, w = 0;
  int block_size = 0;
  int blocks_per_sample = 0;
  std::vector<Entry> cells;  // h * w

  const Entry& at(int y, int x) const {
    return cells[static_cast<size_t>(y) * w + x];
  }
};

ScatterMap build_scatter_map(const BlockIndexSet& producer_idx);

// Process-wide memoization keyed by (resolution, block size, index-set hash).
class ScatterMapCache {
 public:
  static ScatterMapCache& instance();
  std::shared_ptr<const ScatterMap> get(const BlockIndexSet& producer_idx);
  size_t size() const;
  void clear();

 private:
  ScatterMapCache();
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

// Fused scatter-then-gather: emits what gathering from
// scatter(blocks, original_out) would produce, without materializing the full
// tensor. `epilogue` runs on every in-canvas cell, never the zero fill.
// Bit-exact equal to
// gather(epilogue(scatter(blocks, original_out)), consumer_idx, k, s).
BlockStack scatter_gather(const BlockStack& blocks, const Tensor& original_out,
                          const ScatterMap& map, const BlockIndexSet& consumer_idx,
                          int k, int stride, const Epilogue& epilogue);

// Fused residual join. Starting from a copy of precomputed_sum
// (= F_main(orig) + F_shortcut(orig)):
//   1. at main tiles, write main_blocks + original_shortcut (tile-local)
//   2. at shortcut tiles, add shortcut_blocks - original_shortcut in place
// Bit-exact equal to scatter_with_block_residual_unfused below.
Tensor scatter_with_block_residual(const BlockStack& main_blocks,
                                   const BlockStack& shortcut_blocks,
                                   const Tensor& precomputed_sum,
                                   const Tensor& original_shortcut);

// The same arithmetic as separate kernel launches with materialized
// intermediate block stacks. Permanent reference path; the fused kernel is
// validated against it.
Tensor scatter_with_block_residual_unfused(const BlockStack& main_blocks,
                                           const BlockStack& shortcut_blocks,
                                           const Tensor& precomputed_sum,
                                           const Tensor& original_shortcut);

// Element-wise stack arithmetic (same geometry required).
BlockStack add_blocks(const BlockStack& a, const BlockStack& b);
BlockStack subtract_blocks(const BlockStack& a, const BlockStack& b);

// Applies an epilogue chain to every block in place.
void apply_epilogue_on_blocks(BlockStack& blocks, const Epilogue& epilogue);

// Runs a conv layer over every gathered window independently (no padding; the
// gather already materialized it). Consumes windows of side s*b + k - s and
// produces overlap-free b-side blocks with the same origin.
BlockStack conv_on_blocks(const BlockStack& blocks, const ConvLayer& layer,
                          bool with_bias = true);

}  // namespace sige
