#include <doctest.h>

#include <vector>

#include "sige/common.hpp"
#include "sige/conv.hpp"
#include "sige/eltwise.hpp"
#include "sige/kernels.hpp"
#include "sige/mask.hpp"
#include "sige/tensor.hpp"

using namespace sige;

namespace {

Tensor ramp(int n, int c, int h, int w) {
  Tensor t(n, c, h, w);
  for (size_t i = 0; i < t.data.size(); ++i) t.data[i] = static_cast<float>(i);
  return t;
}

BlockIndexSet indices_at(int h, int w, int block,
                         std::vector<BlockIndex> tiles) {
  BlockIndexSet s;
  s.block_size = block;
  s.h = h;
  s.w = w;
  s.indices = std::move(tiles);
  return s;
}

ConvLayer random_conv(Rng& rng, int c_in, int c_out, int k, int stride) {
  ConvLayer L;
  L.c_in = c_in;
  L.c_out = c_out;
  L.k = k;
  L.stride = stride;
  L.weight.resize(static_cast<size_t>(c_out) * c_in * k * k);
  for (float& w : L.weight) w = rng.uniform(-0.5f, 0.5f);
  L.bias.resize(c_out);
  for (float& b : L.bias) b = rng.uniform(-0.2f, 0.2f);
  return L;
}

Epilogue norm_act_epilogue(Rng& rng, int channels) {
  Epilogue e;
  std::vector<float> scale(channels), shift(channels);
  for (int i = 0; i < channels; ++i) {
    scale[i] = rng.uniform(0.5f, 1.5f);
    shift[i] = rng.uniform(-0.4f, 0.4f);
  }
  e.add_scale_shift(std::move(scale), std::move(shift));
  e.add_activation(ActKind::Silu);
  return e;
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("gather frozen window, 3x3 stride 1") {
  Tensor x = ramp(1, 1, 4, 4);
  BlockIndexSet idx = indices_at(4, 4, 2, {{0, 0, 0}});
  BlockStack g = gather(x, idx, 3, 1);
  CHECK(g.bh() == 4);  // s*b + k - s
  CHECK(g.count() == 1);
  const std::vector<float> want = {0, 0, 0, 0, 0, 0, 1, 2,
                                   0, 4, 5, 6, 0, 8, 9, 10};
  CHECK(g.data == want);
}

TEST_CASE("gather frozen window, interior and 1x1") {
  Tensor x = ramp(1, 1, 4, 4);
  BlockStack in =
      gather(x, indices_at(4, 4, 2, {{0, 2, 2}}), 3, 1);
  const std::vector<float> want = {5,  6,  7,  0, 9,  10, 11, 0,
                                   13, 14, 15, 0, 0,  0,  0,  0};
  CHECK(in.data == want);

  BlockStack one = gather(x, indices_at(4, 4, 2, {{0, 2, 2}}), 1, 1);
  CHECK(one.bh() == 2);
  CHECK(one.data == std::vector<float>{10, 11, 14, 15});
}

TEST_CASE("gather stride 2 window geometry") {
  Tensor x = ramp(1, 1, 8, 8);
  BlockStack g = gather(x, indices_at(4, 4, 2, {{0, 2, 2}}), 3, 2);
  CHECK(g.bh() == 5);  // 2*2 + 3 - 2
  // Window top-left at (2*2-1, 2*2-1) = (3, 3).
  CHECK(g.at(0, 0, 0, 0) == x.at(0, 0, 3, 3));
  CHECK(g.at(0, 0, 4, 4) == x.at(0, 0, 7, 7));
}

TEST_CASE("gather applies the epilogue to copied pixels only") {
  Rng rng(71);
  Tensor x(2, 3, 9, 9);
  fill_uniform(x, rng, -1.0f, 1.0f);
  Epilogue e = norm_act_epilogue(rng, 3);

  // Corner tile: window includes zero fill. Interior tile: none.
  BlockIndexSet idx = indices_at(9, 9, 3, {{0, 0, 0}, {0, 3, 3}, {1, 6, 6}});
  BlockStack fused = gather(x, idx, 3, 1, e);

  Tensor pre = x;
  e.apply_tensor(pre);
  BlockStack staged = gather(pre, idx, 3, 1);
  CHECK(fused.data == staged.data);

  // The zero fill must still be exactly zero even though silu(scale*0+shift)
  // is generally nonzero.
  CHECK(fused.at(0, 0, 0, 0) == 0.0f);
}

TEST_CASE("scatter writes tiles and leaves the rest of the base") {
  Tensor base(1, 2, 6, 6, -1.0f);
  BlockStack s;
  s.channels = 2;
  s.block = 2;
  s.overlap = 0;
  s.origin = indices_at(6, 6, 2, {{0, 2, 2}});
  s.data.assign(s.block_stride(), 9.0f);
  Tensor out = scatter(s, base);
  size_t nines = 0;
  for (float v : out.data) nines += v == 9.0f ? 1 : 0;
  CHECK(nines == 2u * 2 * 2);
  CHECK(out.at(0, 0, 2, 2) == 9.0f);
  CHECK(out.at(0, 1, 3, 3) == 9.0f);
  CHECK(out.at(0, 0, 1, 2) == -1.0f);
  CHECK(base.at(0, 0, 2, 2) == -1.0f);  // input untouched
}

TEST_CASE("scatter clips fringe tiles") {
  Tensor base(1, 1, 5, 5, 0.0f);
  BlockStack s;
  s.channels = 1;
  s.block = 4;
  s.overlap = 0;
  s.origin = indices_at(5, 5, 4, {{0, 4, 4}});
  s.data.assign(16, 3.0f);
  Tensor out = scatter(s, base);
  CHECK(out.at(0, 0, 4, 4) == 3.0f);
  size_t touched = 0;
  for (float v : out.data) touched += v != 0.0f ? 1 : 0;
  CHECK(touched == 1);
}

TEST_CASE("scatter round trips what gather extracted") {
  Rng rng(81);
  Tensor x(1, 2, 12, 12);
  fill_uniform(x, rng, -1.0f, 1.0f);
  DifferenceMask m(12, 12);
  m.set(4, 7, true);
  m.set(9, 2, true);
  BlockIndexSet idx = mask_to_block_indices(m, 4, 1);
  // k=1 stride 1: gathered windows are exactly the tiles.
  BlockStack g = gather(x, idx, 1, 1);
  Tensor back = scatter(g, Tensor::zeros_like(x));
  for (int y = 0; y < 12; ++y)
    for (int x2 = 0; x2 < 12; ++x2) {
      const bool in_tile = (y / 4 * 4 == 4 && x2 / 4 * 4 == 4) ||
                           (y / 4 * 4 == 8 && x2 / 4 * 4 == 0);
      for (int c = 0; c < 2; ++c) {
        if (in_tile)
          CHECK(back.at(0, c, y, x2) == x.at(0, c, y, x2));
        else
          CHECK(back.at(0, c, y, x2) == 0.0f);
      }
    }
}

TEST_CASE("scatter_add adds into the base") {
  Tensor base(1, 1, 4, 4, 1.0f);
  BlockStack s;
  s.channels = 1;
  s.block = 2;
  s.overlap = 0;
  s.origin = indices_at(4, 4, 2, {{0, 0, 0}});
  s.data.assign(4, 2.5f);
  scatter_add_inplace(s, base);
  CHECK(base.at(0, 0, 0, 0) == 3.5f);
  CHECK(base.at(0, 0, 3, 3) == 1.0f);
}

TEST_CASE("scatter map records block provenance") {
  BlockIndexSet idx = indices_at(6, 6, 2, {{0, 0, 0}, {0, 2, 2}});
  ScatterMap map = build_scatter_map(idx);
  CHECK(map.blocks_per_sample == 2);
  CHECK(map.at(0, 1).block == 0);
  CHECK(map.at(0, 1).dy == 0);
  CHECK(map.at(0, 1).dx == 1);
  CHECK(map.at(3, 2).block == 1);
  CHECK(map.at(3, 2).dy == 1);
  CHECK(map.at(3, 2).dx == 0);
  CHECK(map.at(5, 5).block == -1);
}

TEST_CASE("scatter map cache memoizes by content") {
  ScatterMapCache::instance().clear();
  BlockIndexSet idx = indices_at(8, 8, 4, {{0, 0, 4}});
  auto a = ScatterMapCache::instance().get(idx);
  auto b = ScatterMapCache::instance().get(idx);
  CHECK(a.get() == b.get());
  CHECK(ScatterMapCache::instance().size() == 1);
  BlockIndexSet other = indices_at(8, 8, 4, {{0, 4, 4}});
  auto c = ScatterMapCache::instance().get(other);
  CHECK(c.get() != a.get());
  CHECK(ScatterMapCache::instance().size() == 2);
  ScatterMapCache::instance().clear();
  CHECK(ScatterMapCache::instance().size() == 0);
}

TEST_CASE("scatter_gather equals gather after a materialized scatter") {
  Rng rng(93);
  for (int rep = 0; rep < 8; ++rep) {
    const int h = 12, c = 3, n = 2;
    Tensor base(n, c, h, h);
    fill_uniform(base, rng, -1.0f, 1.0f);

    DifferenceMask pm(h, h);
    pm.set(rng.uniform_int(0, h - 1), rng.uniform_int(0, h - 1), true);
    pm.set(rng.uniform_int(0, h - 1), rng.uniform_int(0, h - 1), true);
    BlockIndexSet prod = mask_to_block_indices(pm, 4, n);
    BlockStack blocks;
    blocks.channels = c;
    blocks.block = 4;
    blocks.overlap = 0;
    blocks.origin = prod;
    blocks.data.resize(prod.count() * blocks.block_stride());
    for (float& v : blocks.data) v = rng.uniform(-1.0f, 1.0f);

    DifferenceMask cm(h, h);
    cm.set(0, 0, true);  // consumer window reaches the zero-padded fringe
    cm.set(rng.uniform_int(0, h - 1), rng.uniform_int(0, h - 1), true);
    BlockIndexSet cons = mask_to_block_indices(cm, 4, n);

    Epilogue e;
    if (rep % 2 == 0) e = norm_act_epilogue(rng, c);

    ScatterMap map = build_scatter_map(prod);
    const int k = rep % 3 == 0 ? 1 : 3;
    BlockStack fused = scatter_gather(blocks, base, map, cons, k, 1, e);

    Tensor full = scatter(blocks, base);
    e.apply_tensor(full);
    BlockStack staged = gather(full, cons, k, 1);
    CHECK(fused.data == staged.data);
  }
}

TEST_CASE("residual join fused equals unfused bit for bit") {
  Rng rng(103);
  for (int rep = 0; rep < 8; ++rep) {
    const int h = 16, c = 4, n = 1;
    Tensor sum(n, c, h, h), orig_sc(n, c, h, h);
    fill_uniform(sum, rng, -1.0f, 1.0f);
    fill_uniform(orig_sc, rng, -1.0f, 1.0f);

    DifferenceMask mm(h, h), sm(h, h);
    for (int i = 0; i < 3; ++i) {
      mm.set(rng.uniform_int(0, h - 1), rng.uniform_int(0, h - 1), true);
      sm.set(rng.uniform_int(0, h - 1), rng.uniform_int(0, h - 1), true);
    }
    BlockIndexSet mi = mask_to_block_indices(dilate_mask(mm, 1), 6, n);
    BlockIndexSet si = mask_to_block_indices(sm, 4, n);

    BlockStack main;
    main.channels = c;
    main.block = 6;
    main.overlap = 0;
    main.origin = mi;
    main.data.resize(mi.count() * main.block_stride());
    for (float& v : main.data) v = rng.uniform(-1.0f, 1.0f);

    BlockStack proj;
    proj.channels = c;
    proj.block = 4;
    proj.overlap = 0;
    proj.origin = si;
    proj.data.resize(si.count() * proj.block_stride());
    for (float& v : proj.data) v = rng.uniform(-1.0f, 1.0f);

    Tensor fused = scatter_with_block_residual(main, proj, sum, orig_sc);
    Tensor staged = scatter_with_block_residual_unfused(main, proj, sum, orig_sc);
    CHECK(max_abs_diff(fused, staged) == 0.0f);
  }
}

TEST_CASE("block stack arithmetic") {
  BlockIndexSet idx = indices_at(8, 8, 2, {{0, 0, 0}, {0, 4, 4}});
  BlockStack a, b;
  for (BlockStack* s : {&a, &b}) {
    s->channels = 1;
    s->block = 2;
    s->overlap = 0;
    s->origin = idx;
    s->data.assign(8, 0.0f);
  }
  for (int i = 0; i < 8; ++i) {
    a.data[i] = static_cast<float>(i);
    b.data[i] = 10.0f;
  }
  CHECK(add_blocks(a, b).data[3] == 13.0f);
  CHECK(subtract_blocks(a, b).data[3] == -7.0f);
}

TEST_CASE("conv_on_blocks over a whole-canvas tile equals conv2d") {
  Rng rng(113);
  for (int k : {1, 3}) {
    for (int stride : {1, 2}) {
      const int h = 8;
      Tensor x(2, 3, h, h);
      fill_uniform(x, rng, -1.0f, 1.0f);
      ConvLayer L = random_conv(rng, 3, 5, k, stride);
      const int out_h = conv_out_dim(h, k, stride);

      BlockIndexSet idx = indices_at(out_h, out_h, out_h,
                                     {{0, 0, 0}, {1, 0, 0}});
      BlockStack g = gather(x, idx, k, stride);
      BlockStack y = conv_on_blocks(g, L);
      Tensor dense = conv2d(x, L);

      for (int n = 0; n < 2; ++n)
        for (int c = 0; c < 5; ++c)
          for (int yy = 0; yy < out_h; ++yy)
            for (int xx = 0; xx < out_h; ++xx)
              CHECK(y.at(n, c, yy, xx) == dense.at(n, c, yy, xx));
    }
  }
}

TEST_CASE("sparse tiles reproduce dense conv values exactly") {
  Rng rng(131);
  const int h = 20;
  Tensor x(1, 4, h, h);
  fill_uniform(x, rng, -1.0f, 1.0f);
  ConvLayer L = random_conv(rng, 4, 6, 3, 1);
  Tensor dense = conv2d(x, L);

  DifferenceMask m(h, h);
  m.set(0, 0, true);
  m.set(10, 13, true);
  m.set(19, 19, true);
  BlockIndexSet idx = mask_to_block_indices(m, 6, 1);
  BlockStack y = conv_on_blocks(gather(x, idx, 3, 1), L);
  Tensor out = scatter(y, Tensor::zeros_like(dense));
  for (const BlockIndex& t : idx.indices)
    for (int c = 0; c < 6; ++c)
      for (int yy = t.r; yy < std::min(t.r + 6, h); ++yy)
        for (int xx = t.c; xx < std::min(t.c + 6, h); ++xx)
          CHECK(out.at(t.n, c, yy, xx) == dense.at(t.n, c, yy, xx));
}

TEST_CASE("apply_epilogue_on_blocks matches the dense chain per block") {
  Rng rng(139);
  BlockIndexSet idx = indices_at(8, 8, 4, {{0, 0, 0}, {1, 4, 4}});
  BlockStack s;
  s.channels = 3;
  s.block = 4;
  s.overlap = 0;
  s.origin = idx;
  s.data.resize(idx.count() * s.block_stride());
  for (float& v : s.data) v = rng.uniform(-1.0f, 1.0f);
  Epilogue e = norm_act_epilogue(rng, 3);

  BlockStack want = s;
  for (size_t i = 0; i < want.count(); ++i) {
    Tensor tile(1, 3, 4, 4);
    std::copy_n(want.block_ptr(i), want.block_stride(), tile.data.begin());
    e.apply_slab(tile.data.data(), 3, 16, want.origin.indices[i].n);
    std::copy_n(tile.data.begin(), want.block_stride(),
                want.data.begin() + i * want.block_stride());
  }
  apply_epilogue_on_blocks(s, e);
  CHECK(s.data == want.data);
}

}  // TEST_SUITE
