#include "sige/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <mutex>
#include <unordered_map>

namespace sige {

namespace {

void require_overlap_free(const BlockStack& s, const char* op) {
  if (s.overlap != 0) {
    throw ConfigError(std::string(op) + ": blocks must be overlap-free output tiles");
  }
}

void require_scatter_compatible(const BlockStack& blocks, const Tensor& base,
                                const char* op) {
  require_overlap_free(blocks, op);
  if (blocks.channels != base.c) {
    throw ConfigError(std::string(op) + ": channel mismatch");
  }
  if (blocks.origin.h != base.h || blocks.origin.w != base.w) {
    throw ConfigError(std::string(op) + ": index resolution " +
                      std::to_string(blocks.origin.h) + "x" +
                      std::to_string(blocks.origin.w) +
                      " does not match tensor " + base.shape_str());
  }
  for (const BlockIndex& bi : blocks.origin.indices) {
    if (bi.n < 0 || bi.n >= base.n) {
      throw ConfigError(std::string(op) + ": block sample out of range");
    }
  }
}

}  // namespace

BlockStack gather(const Tensor& x, const BlockIndexSet& idx, int k, int stride,
                  const Epilogue& epilogue) {
  if (k != 1 && k != 3) throw ConfigError("gather: kernel size must be 1 or 3");
  if (stride != 1 && stride != 2) throw ConfigError("gather: stride must be 1 or 2");
  int oh = conv_out_dim(x.h, k, stride);
  int ow = conv_out_dim(x.w, k, stride);
  if (idx.h != oh || idx.w != ow) {
    throw ConfigError("gather: index set lives at " + std::to_string(idx.h) +
                      "x" + std::to_string(idx.w) + " but conv output of " +
                      x.shape_str() + " is " + std::to_string(oh) + "x" +
                      std::to_string(ow));
  }
  int b = idx.block_size;
  int window = stride * b + k - stride;
  int pad = (k - 1) / 2;

  BlockStack out;
  out.channels = x.c;
  out.block = b;
  out.overlap = window - b;
  out.origin = idx;
  out.data.assign(idx.indices.size() * out.block_stride(), 0.0f);

  parallel_for(idx.indices.size(), [&](size_t i) {
    const BlockIndex& bi = idx.indices[i];
    int iy0 = bi.r * stride - pad;
    int ix0 = bi.c * stride - pad;
    float* bp = out.block_ptr(i);
    for (int ch = 0; ch < x.c; ++ch) {
      const float* src = x.plane(bi.n, ch);
      float* dst = bp + static_cast<size_t>(ch) * window * window;
      for (int wy = 0; wy < window; ++wy) {
        int sy = iy0 + wy;
        if (sy < 0 || sy >= x.h) continue;  // stays zero-filled
        int lo = std::max(0, -ix0);
        int hi = std::min(window, x.w - ix0);  // exclusive
        if (lo >= hi) continue;
        float* row = dst + static_cast<size_t>(wy) * window + lo;
        std::memcpy(row, src + static_cast<size_t>(sy) * x.w + ix0 + lo,
                    static_cast<size_t>(hi - lo) * sizeof(float));
        if (!epilogue.empty()) {
          epilogue.apply_span(row, static_cast<size_t>(hi - lo), ch, x.c, bi.n);
        }
      }
    }
  });
  return out;
}

void scatter_inplace(const BlockStack& blocks, Tensor& base) {
  require_scatter_compatible(blocks, base, "scatter");
  int b = blocks.block;
  for (size_t i = 0; i < blocks.count(); ++i) {
    const BlockIndex& bi = blocks.origin.indices[i];
    int ylim = std::min(b, base.h - bi.r);
    int xlim = std::min(b, base.w - bi.c);
    const float* bp = blocks.block_ptr(i);
    for (int ch = 0; ch < blocks.channels; ++ch) {
      float* dst = base.plane(bi.n, ch) + static_cast<size_t>(bi.r) * base.w + bi.c;
      const float* src = bp + static_cast<size_t>(ch) * b * b;
      for (int y = 0; y < ylim; ++y) {
        std::memcpy(dst + static_cast<size_t>(y) * base.w,
                    src + static_cast<size_t>(y) * b,
                    static_cast<size_t>(xlim) * sizeof(float));
      }
    }
  }
}

Tensor scatter(const BlockStack& blocks, const Tensor& base) {
  Tensor out = base;
  scatter_inplace(blocks, out);
  return out;
}

void scatter_add_inplace(const BlockStack& blocks, Tensor& base) {
  require_scatter_compatible(blocks, base, "scatter_add");
  int b = blocks.block;
  for (size_t i = 0; i < blocks.count(); ++i) {
    const BlockIndex& bi = blocks.origin.indices[i];
    int ylim = std::min(b, base.h - bi.r);
    int xlim = std::min(b, base.w - bi.c);
    const float* bp = blocks.block_ptr(i);
    for (int ch = 0; ch < blocks.channels; ++ch) {
      float* dst = base.plane(bi.n, ch) + static_cast<size_t>(bi.r) * base.w + bi.c;
      const float* src = bp + static_cast<size_t>(ch) * b * b;
      for (int y = 0; y < ylim; ++y) {
        float* drow = dst + static_cast<size_t>(y) * base.w;
        const float* srow = src + static_cast<size_t>(y) * b;
        for (int x = 0; x < xlim; ++x) drow[x] += srow[x];
      }
    }
  }
}

ScatterMap build_scatter_map(const BlockIndexSet& producer_idx) {
  ScatterMap map;
  map.h = producer_idx.h;
  map.w = producer_idx.w;
  map.block_size = producer_idx.block_size;
  map.blocks_per_sample = static_cast<int>(producer_idx.per_sample());
  map.cells.assign(static_cast<size_t>(map.h) * map.w, ScatterMap::Entry{});

  // The map is 2-D: it requires the same tile pattern in every sample, which
  // mask_to_block_indices guarantees.
  size_t per = producer_idx.per_sample();
  if (per == 0) return map;
  for (size_t i = per; i < producer_idx.indices.size(); ++i) {
    const BlockIndex& rep = producer_idx.indices[i % per];
    const BlockIndex& cur = producer_idx.indices[i];
    if (cur.r != rep.r || cur.c != rep.c) {
      throw ConfigError("build_scatter_map: tile pattern differs across batch");
    }
  }

  int b = map.block_size;
  for (size_t ord = 0; ord < per; ++ord) {
    const BlockIndex& bi = producer_idx.indices[ord];
    int ylim = std::min(map.h, bi.r + b);
    int xlim = std::min(map.w, bi.c + b);
    for (int y = bi.r; y < ylim; ++y) {
      for (int x = bi.c; x < xlim; ++x) {
        ScatterMap::Entry& e = map.cells[static_cast<size_t>(y) * map.w + x];
        e.block = static_cast<int32_t>(ord);
        e.dy = static_cast<int16_t>(y - bi.r);
        e.dx = static_cast<int16_t>(x - bi.c);
      }
    }
  }
  return map;
}

struct ScatterMapCache::Impl {
  mutable std::mutex mu;
  std::unordered_map<uint64_t, std::shared_ptr<const ScatterMap>> entries;
};

ScatterMapCache::ScatterMapCache() : impl_(std::make_shared<Impl>()) {}

ScatterMapCache& ScatterMapCache::instance() {
  static ScatterMapCache cache;
  return cache;
}

std::shared_ptr<const ScatterMap> ScatterMapCache::get(
    const BlockIndexSet& producer_idx) {
  uint64_t key = producer_idx.content_hash();
  std::lock_guard<std::mutex> lock(impl_->mu);
  auto it = impl_->entries.find(key);
  if (it != impl_->entries.end()) return it->second;
  auto map = std::make_shared<const ScatterMap>(build_scatter_map(producer_idx));
  impl_->entries.emplace(key, map);
  return map;
}

size_t ScatterMapCache::size() const {
  std::lock_guard<std::mutex> lock(impl_->mu);
  return impl_->entries.size();
}

void ScatterMapCache::clear() {
  std::lock_guard<std::mutex> lock(impl_->mu);
  impl_->entries.clear();
}

BlockStack scatter_gather(const BlockStack& blocks, const Tensor& original_out,
                          const ScatterMap& map, const BlockIndexSet& consumer_idx,
                          int k, int stride, const Epilogue& epilogue) {
  require_overlap_free(blocks, "scatter_gather");
  if (map.h != original_out.h || map.w != original_out.w) {
    throw ConfigError("scatter_gather: map resolution " + std::to_string(map.h) +
                      "x" + std::to_string(map.w) + " does not match tensor " +
                      original_out.shape_str());
  }
  if (map.block_size != blocks.block ||
      map.blocks_per_sample * original_out.n != static_cast<int>(blocks.count())) {
    throw ConfigError("scatter_gather: map does not describe this block stack");
  }
  if (blocks.channels != original_out.c) {
    throw ConfigError("scatter_gather: channel mismatch");
  }
  int oh = conv_out_dim(original_out.h, k, stride);
  int ow = conv_out_dim(original_out.w, k, stride);
  if (consumer_idx.h != oh || consumer_idx.w != ow) {
    throw ConfigError("scatter_gather: consumer index resolution mismatch");
  }

  int b = consumer_idx.block_size;
  int window = stride * b + k - stride;
  int pad = (k - 1) / 2;
  int pb = blocks.block;

  BlockStack out;
  out.channels = blocks.channels;
  out.block = b;
  out.overlap = window - b;
  out.origin = consumer_idx;
  out.data.assign(consumer_idx.indices.size() * out.block_stride(), 0.0f);

  size_t whw = static_cast<size_t>(window) * window;
  parallel_for(consumer_idx.indices.size(), [&](size_t i) {
    const BlockIndex& ci = consumer_idx.indices[i];
    int iy0 = ci.r * stride - pad;
    int ix0 = ci.c * stride - pad;
    size_t sample_base = static_cast<size_t>(ci.n) * map.blocks_per_sample;
    float* bp = out.block_ptr(i);
    for (int wy = 0; wy < window; ++wy) {
      int sy = iy0 + wy;
      if (sy < 0 || sy >= original_out.h) continue;
      for (int wx = 0; wx < window; ++wx) {
        int sx = ix0 + wx;
        if (sx < 0 || sx >= original_out.w) continue;
        const ScatterMap::Entry& e = map.at(sy, sx);
        size_t doff = static_cast<size_t>(wy) * window + wx;
        if (e.block < 0) {
          const float* src = original_out.plane(ci.n, 0) +
                             static_cast<size_t>(sy) * original_out.w + sx;
          size_t cstride = static_cast<size_t>(original_out.h) * original_out.w;
          for (int ch = 0; ch < out.channels; ++ch) {
            bp[ch * whw + doff] = src[ch * cstride];
          }
        } else {
          const float* src = blocks.block_ptr(sample_base + e.block) +
                             static_cast<size_t>(e.dy) * pb + e.dx;
          size_t cstride = static_cast<size_t>(pb) * pb;
          for (int ch = 0; ch < out.channels; ++ch) {
            bp[ch * whw + doff] = src[ch * cstride];
          }
        }
        if (!epilogue.empty()) {
          epilogue.apply_cell(bp + doff, whw, out.channels, ci.n);
        }
      }
    }
  });
  return out;
}

namespace {

void require_join_compatible(const BlockStack& main_blocks,
                             const BlockStack& shortcut_blocks,
                             const Tensor& precomputed_sum,
                             const Tensor& original_shortcut) {
  require_scatter_compatible(main_blocks, precomputed_sum, "block_residual(main)");
  require_scatter_compatible(shortcut_blocks, precomputed_sum,
                             "block_residual(shortcut)");
  require_same_shape(precomputed_sum, original_shortcut, "block_residual");
}

}  // namespace

Tensor scatter_with_block_residual(const BlockStack& main_blocks,
                                   const BlockStack& shortcut_blocks,
                                   const Tensor& precomputed_sum,
                                   const Tensor& original_shortcut) {
  require_join_compatible(main_blocks, shortcut_blocks, precomputed_sum,
                          original_shortcut);
  Tensor out = precomputed_sum;

  int bm = main_blocks.block;
  for (size_t i = 0; i < main_blocks.count(); ++i) {
    const BlockIndex& bi = main_blocks.origin.indices[i];
    int ylim = std::min(bm, out.h - bi.r);
    int xlim = std::min(bm, out.w - bi.c);
    const float* bp = main_blocks.block_ptr(i);
    for (int ch = 0; ch < main_blocks.channels; ++ch) {
      const float* res = original_shortcut.plane(bi.n, ch) +
                         static_cast<size_t>(bi.r) * out.w + bi.c;
      float* dst = out.plane(bi.n, ch) + static_cast<size_t>(bi.r) * out.w + bi.c;
      const float* src = bp + static_cast<size_t>(ch) * bm * bm;
      for (int y = 0; y < ylim; ++y) {
        for (int x = 0; x < xlim; ++x) {
          dst[y * out.w + x] = src[y * bm + x] + res[y * out.w + x];
        }
      }
    }
  }

  int bs = shortcut_blocks.block;
  for (size_t i = 0; i < shortcut_blocks.count(); ++i) {
    const BlockIndex& bi = shortcut_blocks.origin.indices[i];
    int ylim = std::min(bs, out.h - bi.r);
    int xlim = std::min(bs, out.w - bi.c);
    const float* bp = shortcut_blocks.block_ptr(i);
    for (int ch = 0; ch < shortcut_blocks.channels; ++ch) {
      const float* res = original_shortcut.plane(bi.n, ch) +
                         static_cast<size_t>(bi.r) * out.w + bi.c;
      float* dst = out.plane(bi.n, ch) + static_cast<size_t>(bi.r) * out.w + bi.c;
      const float* src = bp + static_cast<size_t>(ch) * bs * bs;
      for (int y = 0; y < ylim; ++y) {
        for (int x = 0; x < xlim; ++x) {
          dst[y * out.w + x] += src[y * bs + x] - res[y * out.w + x];
        }
      }
    }
  }
  return out;
}

Tensor scatter_with_block_residual_unfused(const BlockStack& main_blocks,
                                           const BlockStack& shortcut_blocks,
                                           const Tensor& precomputed_sum,
                                           const Tensor& original_shortcut) {
  require_join_compatible(main_blocks, shortcut_blocks, precomputed_sum,
                          original_shortcut);
  Tensor out = precomputed_sum;

  BlockStack main_res = gather(original_shortcut, main_blocks.origin, 1, 1);
  BlockStack main_plus = add_blocks(main_blocks, main_res);
  scatter_inplace(main_plus, out);

  BlockStack sc_res = gather(original_shortcut, shortcut_blocks.origin, 1, 1);
  BlockStack delta = subtract_blocks(shortcut_blocks, sc_res);
  scatter_add_inplace(delta, out);
  return out;
}

namespace {

BlockStack combine_blocks(const BlockStack& a, const BlockStack& b, float sign,
                          const char* op) {
  if (a.channels != b.channels || a.block != b.block || a.overlap != b.overlap ||
      a.count() != b.count()) {
    throw ConfigError(std::string(op) + ": block stack geometry mismatch");
  }
  BlockStack out = a;
  for (size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = a.data[i] + sign * b.data[i];
  }
  return out;
}

}  // namespace

BlockStack add_blocks(const BlockStack& a, const BlockStack& b) {
  return combine_blocks(a, b, 1.0f, "add_blocks");
}

BlockStack subtract_blocks(const BlockStack& a, const BlockStack& b) {
  return combine_blocks(a, b, -1.0f, "subtract_blocks");
}

void apply_epilogue_on_blocks(BlockStack& blocks, const Epilogue& epilogue) {
  if (epilogue.empty()) return;
  size_t hw = static_cast<size_t>(blocks.bh()) * blocks.bh();
  parallel_for(blocks.count(), [&](size_t i) {
    epilogue.apply_slab(blocks.block_ptr(i), blocks.channels, hw,
                        blocks.origin.indices[i].n);
  });
}

BlockStack conv_on_blocks(const BlockStack& blocks, const ConvLayer& layer,
                          bool with_bias) {
  layer.validate();
  if (blocks.channels != layer.c_in) {
    throw ConfigError("conv_on_blocks: channel mismatch");
  }
  int window = blocks.bh();
  int b_out = (window - layer.k) / layer.stride + 1;
  if (b_out != blocks.block) {
    throw ConfigError("conv_on_blocks: window " + std::to_string(window) +
                      " with k=" + std::to_string(layer.k) + " s=" +
                      std::to_string(layer.stride) + " yields " +
                      std::to_string(b_out) + ", expected block " +
                      std::to_string(blocks.block));
  }
  BlockStack out;
  out.channels = layer.c_out;
  out.block = blocks.block;
  out.overlap = 0;
  out.origin = blocks.origin;
  out.data.assign(blocks.count() * out.block_stride(), 0.0f);

  const float* bias = (with_bias && !layer.bias.empty()) ? layer.bias.data() : nullptr;
  parallel_for(blocks.count(), [&](size_t i) {
    detail::conv2d_raw(blocks.block_ptr(i), layer.c_in, window, window,
                       layer.weight.data(), bias, layer.c_out, layer.k,
                       layer.stride, /*pad=*/0, out.block_ptr(i), out.block,
                       out.block);
  });
  return out;
}

}  // namespace sige
