#include "sige/graph.hpp"

#include <algorithm>
#include <tuple>

namespace sige {

void NormLayer::validate() const {
  if (gamma.empty() || gamma.size() != beta.size()) {
    throw ConfigError("norm: gamma/beta must be per-channel and equal-sized");
  }
  int c = channels();
  if (groups < 1 || c % groups != 0) {
    throw ConfigError("norm: groups " + std::to_string(groups) +
                      " must divide channels " + std::to_string(c));
  }
  if (kind == NormKind::Instance && groups != c) {
    throw ConfigError("norm: instance kind requires groups == channels");
  }
  if (kind == NormKind::Batch) {
    if (running_mean.size() != static_cast<size_t>(c) ||
        running_var.size() != static_cast<size_t>(c)) {
      throw ConfigError("norm: batch kind requires per-channel running stats");
    }
    for (float v : running_var) {
      if (v < 0.0f) throw ConfigError("norm: running variance must be >= 0");
    }
  }
  if (eps <= 0.0f) throw ConfigError("norm: eps must be > 0");
}

const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Conv: return "conv";
    case LayerKind::Norm: return "norm";
    case LayerKind::Activation: return "activation";
    case LayerKind::ResBlock: return "resblock";
    case LayerKind::Downsample: return "downsample";
    case LayerKind::Upsample: return "upsample";
  }
  return "conv";
}

LayerKind layer_kind_from_name(const std::string& s) {
  if (s == "conv") return LayerKind::Conv;
  if (s == "norm") return LayerKind::Norm;
  if (s == "activation") return LayerKind::Activation;
  if (s == "resblock") return LayerKind::ResBlock;
  if (s == "downsample") return LayerKind::Downsample;
  if (s == "upsample") return LayerKind::Upsample;
  throw ConfigError("unknown layer kind: " + s);
}

void ModelSpec::validate() const {
  if (in_channels < 1 || in_h < 1 || in_w < 1) {
    throw ConfigError("model: input shape must be positive");
  }
  if (layers.empty()) throw ConfigError("model: no layers");
  walk_shapes(*this, in_h, in_w);
}

namespace {

uint64_t hash_floats(const std::vector<float>& v, uint64_t h) {
  return fnv1a64(v.data(), v.size() * sizeof(float), h);
}

uint64_t hash_conv(const ConvLayer& c, uint64_t h) {
  int dims[4] = {c.c_in, c.c_out, c.k, c.stride};
  h = fnv1a64(dims, sizeof(dims), h);
  h = hash_floats(c.weight, h);
  h = hash_floats(c.bias, h);
  return h;
}

uint64_t hash_norm(const NormLayer& n, uint64_t h) {
  int meta[2] = {static_cast<int>(n.kind), n.groups};
  h = fnv1a64(meta, sizeof(meta), h);
  h = fnv1a64(&n.eps, sizeof(n.eps), h);
  h = hash_floats(n.gamma, h);
  h = hash_floats(n.beta, h);
  h = hash_floats(n.running_mean, h);
  h = hash_floats(n.running_var, h);
  return h;
}

}  // namespace

uint64_t ModelSpec::structure_hash() const {
  uint64_t h = fnv1a64(name.data(), name.size());
  int dims[3] = {in_channels, in_h, in_w};
  h = fnv1a64(dims, sizeof(dims), h);
  for (const Layer& L : layers) {
    int kind = static_cast<int>(L.kind);
    h = fnv1a64(&kind, sizeof(kind), h);
    int pol[2] = {L.policy.sparse ? 1 : 0, L.policy.min_resolution};
    h = fnv1a64(pol, sizeof(pol), h);
    switch (L.kind) {
      case LayerKind::Conv:
      case LayerKind::Downsample:
        h = hash_conv(L.conv, h);
        break;
      case LayerKind::Norm:
        h = hash_norm(L.norm, h);
        break;
      case LayerKind::Activation: {
        int a = static_cast<int>(L.act);
        h = fnv1a64(&a, sizeof(a), h);
        break;
      }
      case LayerKind::ResBlock: {
        h = hash_conv(L.res.conv1, h);
        h = hash_conv(L.res.conv2, h);
        h = hash_norm(L.res.norm, h);
        int a = static_cast<int>(L.res.act);
        h = fnv1a64(&a, sizeof(a), h);
        int has_sc = L.res.shortcut.has_value() ? 1 : 0;
        h = fnv1a64(&has_sc, sizeof(has_sc), h);
        if (L.res.shortcut) h = hash_conv(*L.res.shortcut, h);
        break;
      }
      case LayerKind::Upsample:
        break;
    }
  }
  return h;
}

std::vector<LayerShape> walk_shapes(const ModelSpec& model, int h, int w) {
  std::vector<LayerShape> shapes;
  shapes.reserve(model.layers.size());
  int c = model.in_channels;
  for (size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& L = model.layers[i];
    LayerShape s;
    s.c_in = c;
    s.h_in = h;
    s.w_in = w;
    auto fail = [&](const std::string& why) {
      throw ConfigError("model layer L" + std::to_string(i) + " (" + L.name +
                        "): " + why);
    };
    switch (L.kind) {
      case LayerKind::Conv:
      case LayerKind::Downsample:
        L.conv.validate();
        if (L.conv.c_in != c) fail("expects " + std::to_string(L.conv.c_in) +
                                   " channels, gets " + std::to_string(c));
        c = L.conv.c_out;
        h = conv_out_dim(h, L.conv.k, L.conv.stride);
        w = conv_out_dim(w, L.conv.k, L.conv.stride);
        break;
      case LayerKind::Norm:
        L.norm.validate();
        if (L.norm.channels() != c) fail("norm channel mismatch");
        break;
      case LayerKind::Activation:
        break;
      case LayerKind::ResBlock: {
        const ResBlockSpec& rb = L.res;
        rb.conv1.validate();
        rb.conv2.validate();
        rb.norm.validate();
        if (rb.conv1.k != 3 || rb.conv1.stride != 1 || rb.conv2.k != 3 ||
            rb.conv2.stride != 1) {
          fail("resblock main convs must be 3x3 stride 1");
        }
        if (rb.conv1.c_in != c) fail("resblock channel mismatch");
        if (rb.norm.channels() != rb.conv1.c_out) fail("resblock norm channels");
        if (rb.conv2.c_in != rb.conv1.c_out) fail("resblock conv chaining");
        int c_out = rb.conv2.c_out;
        if (rb.shortcut) {
          rb.shortcut->validate();
          if (rb.shortcut->k != 1 || rb.shortcut->stride != 1) {
            fail("resblock shortcut must be 1x1 stride 1");
          }
          if (rb.shortcut->c_in != c || rb.shortcut->c_out != c_out) {
            fail("resblock shortcut channel mismatch");
          }
        } else if (c_out != c) {
          fail("identity shortcut requires c_in == c_out");
        }
        c = c_out;
        break;
      }
      case LayerKind::Upsample:
        h *= 2;
        w *= 2;
        break;
    }
    s.c_out = c;
    s.h_out = h;
    s.w_out = w;
    shapes.push_back(s);
  }
  return shapes;
}

int required_dilation(const ModelSpec& model) {
  std::vector<LayerShape> shapes = walk_shapes(model, model.in_h, model.in_w);
  int growth = 0;
  for (size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& L = model.layers[i];
    int factor = std::max(1, model.in_h / shapes[i].h_in);
    switch (L.kind) {
      case LayerKind::Conv:
      case LayerKind::Downsample:
        growth += L.conv.padding() * factor;
        break;
      case LayerKind::ResBlock:
        growth += (L.res.conv1.padding() + L.res.conv2.padding()) * factor;
        break;
      default:
        break;
    }
  }
  return growth;
}

void RunConfig::validate() const {
  if (mask_threshold < 0.0f) throw ConfigError("config: threshold must be >= 0");
  if (dilate_full < 0 || dilate_scale < 0) {
    throw ConfigError("config: dilation radii must be >= 0");
  }
  if (block3 < 1 || block1 < 1) throw ConfigError("config: block sizes must be >= 1");
  if (step < 0) throw ConfigError("config: step must be >= 0");
}

uint32_t RunConfig::opt_bits() const {
  uint32_t b = 0;
  if (sparse) b |= 1u;
  if (norm_precompute) b |= 2u;
  if (elem_fusion) b |= 4u;
  if (scatter_fusion) b |= 8u;
  return b;
}

bool ActivationCache::has_tensor(int step, const std::string& key) const {
  return tensors_.count({step, key}) > 0;
}

const Tensor& ActivationCache::tensor_entry(int step,
                                            const std::string& key) const {
  auto it = tensors_.find({step, key});
  if (it == tensors_.end()) {
    throw ConfigError("precompute required: no cache entry for step " +
                      std::to_string(step) + ", layer " + key);
  }
  return it->second.t;
}

const FoldedNorm& ActivationCache::norm_entry(int step,
                                              const std::string& key) const {
  auto it = norms_.find({step, key});
  if (it == norms_.end()) {
    throw ConfigError("precompute required: no cached norm params for step " +
                      std::to_string(step) + ", layer " + key);
  }
  return it->second;
}

void ActivationCache::put_tensor(int step, const std::string& key, Tensor t,
                                 CacheCategory cat) {
  tensors_[{step, key}] = TensorEntry{std::move(t), cat};
}

void ActivationCache::put_norm(int step, const std::string& key, FoldedNorm f) {
  norms_[{step, key}] = std::move(f);
}

void ActivationCache::drop_step(int step) {
  std::erase_if(tensors_, [step](const auto& kv) { return kv.first.first == step; });
  std::erase_if(norms_, [step](const auto& kv) { return kv.first.first == step; });
}

size_t ActivationCache::entry_count() const {
  return tensors_.size() + norms_.size();
}

size_t ActivationCache::entry_count(int step) const {
  size_t n = 0;
  for (const auto& kv : tensors_) n += kv.first.first == step ? 1 : 0;
  for (const auto& kv : norms_) n += kv.first.first == step ? 1 : 0;
  return n;
}

ActivationCache::Breakdown ActivationCache::element_breakdown() const {
  Breakdown b;
  for (const auto& kv : tensors_) {
    size_t elems = kv.second.t.numel();
    switch (kv.second.cat) {
      case CacheCategory::ConvOutput: b.conv_outputs += elems; break;
      case CacheCategory::ConvInput: b.conv_inputs += elems; break;
      case CacheCategory::ResBlockExtra: b.resblock_extras += elems; break;
      case CacheCategory::FinalOutput: b.final_outputs += elems; break;
    }
  }
  for (const auto& kv : norms_) {
    b.norm_params += kv.second.scale.size() + kv.second.shift.size();
  }
  return b;
}

namespace {

void check_cache_model(const ActivationCache& cache, const ModelSpec& model);

// Folded affine for a norm layer: group/instance kinds reduce over the given
// activation, batch kind folds its stored running stats (input-independent).
FoldedNorm fold_norm_layer(const NormLayer& nl, const Tensor& x) {
  if (nl.kind == NormKind::Batch) {
    NormStats stats;
    stats.batch = 1;
    stats.groups = nl.channels();
    stats.eps = nl.eps;
    stats.mean = nl.running_mean;
    stats.var = nl.running_var;
    return fold_stats(stats, nl.gamma, nl.beta, nl.channels());
  }
  NormStats stats = compute_norm_stats(x, nl.groups, nl.eps);
  return fold_stats(stats, nl.gamma, nl.beta, x.c);
}

struct CaptureSink {
  ActivationCache* cache = nullptr;
  int step = 0;
  bool keep_inputs = false;

  void tensor(const std::string& key, const Tensor& t, CacheCategory cat) const {
    cache->put_tensor(step, key, t, cat);
  }
  void input(const std::string& key, const Tensor& t) const {
    if (keep_inputs) cache->put_tensor(step, key, t, CacheCategory::ConvInput);
  }
  void norm(const std::string& key, const FoldedNorm& f) const {
    cache->put_norm(step, key, f);
  }
};

// The one dense walk. dense_forward and precompute share it so cached tensors
// are bit-identical to what the oracle computes. With stats_from set, norm
// parameters come from that cache instead of the current activation.
Tensor dense_walk(const ModelSpec& model, const Tensor& input,
                  const CaptureSink* sink,
                  const ActivationCache* stats_from = nullptr,
                  int stats_step = 0) {
  model.validate();
  if (input.c != model.in_channels) {
    throw ConfigError("forward: input has " + std::to_string(input.c) +
                      " channels, model expects " +
                      std::to_string(model.in_channels));
  }
  Tensor x = input;
  for (size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& L = model.layers[i];
    std::string key = "L" + std::to_string(i);
    switch (L.kind) {
      case LayerKind::Conv:
      case LayerKind::Downsample: {
        if (sink) sink->input(key + ".in", x);
        x = conv2d(x, L.conv);
        if (sink) sink->tensor(key + ".out", x, CacheCategory::ConvOutput);
        break;
      }
      case LayerKind::Norm: {
        FoldedNorm f = stats_from
                           ? stats_from->norm_entry(stats_step, key + ".norm")
                           : fold_norm_layer(L.norm, x);
        if (sink) sink->norm(key + ".norm", f);
        scale_shift_inplace(x, f.scale, f.shift);
        break;
      }
      case LayerKind::Activation:
        activation_inplace(x.data.data(), x.data.size(), L.act);
        break;
      case LayerKind::Upsample:
        x = upsample_nearest2x(x);
        break;
      case LayerKind::ResBlock: {
        const ResBlockSpec& rb = L.res;
        Tensor x0 = std::move(x);
        if (sink) sink->input(key + ".conv1.in", x0);
        Tensor m = conv2d(x0, rb.conv1);
        if (sink) sink->tensor(key + ".conv1.out", m, CacheCategory::ConvOutput);
        FoldedNorm f = stats_from
                           ? stats_from->norm_entry(stats_step, key + ".norm1")
                           : fold_norm_layer(rb.norm, m);
        if (sink) sink->norm(key + ".norm1", f);
        scale_shift_inplace(m, f.scale, f.shift);
        activation_inplace(m.data.data(), m.data.size(), rb.act);
        if (sink) sink->input(key + ".conv2.in", m);
        m = conv2d(m, rb.conv2);
        if (sink) sink->tensor(key + ".conv2.out", m, CacheCategory::ConvOutput);
        Tensor sc;
        if (rb.shortcut) {
          if (sink) sink->input(key + ".shortcut.in", x0);
          sc = conv2d(x0, *rb.shortcut);
        } else {
          sc = std::move(x0);
        }
        if (sink) {
          sink->tensor(key + ".shortcut.out", sc, CacheCategory::ResBlockExtra);
        }
        x = add(m, sc);
        if (sink) sink->tensor(key + ".sum", x, CacheCategory::ResBlockExtra);
        break;
      }
    }
  }
  if (sink) sink->tensor("final", x, CacheCategory::FinalOutput);
  return x;
}

}  // namespace

Tensor dense_forward(const ModelSpec& model, const Tensor& input) {
  return dense_walk(model, input, nullptr);
}

Tensor dense_forward_reused_stats(const ModelSpec& model, const Tensor& input,
                                  const ActivationCache& cache, int step) {
  check_cache_model(cache, model);
  return dense_walk(model, input, nullptr, &cache, step);
}

void precompute(ActivationCache& cache, const ModelSpec& model,
                const Tensor& original_input, const std::vector<int>& steps,
                const PrecomputeOptions& opts) {
  if (steps.empty()) throw ConfigError("precompute: no steps given");
  cache.set_model_hash(model.structure_hash());
  for (int step : steps) {
    CaptureSink sink{&cache, step, opts.keep_conv_inputs};
    dense_walk(model, original_input, &sink);
  }
}

void refresh_step(ActivationCache& cache, const ModelSpec& model,
                  const Tensor& original_input, int step,
                  const PrecomputeOptions& opts) {
  cache.drop_step(step);
  cache.set_model_hash(model.structure_hash());
  CaptureSink sink{&cache, step, opts.keep_conv_inputs};
  dense_walk(model, original_input, &sink);
}

uint64_t RunTrace::total_macs() const {
  uint64_t t = 0;
  for (const TraceLayer& l : layers) t += l.macs;
  return t;
}

uint64_t RunTrace::total_dense_macs() const {
  uint64_t t = 0;
  for (const TraceLayer& l : layers) t += l.dense_macs;
  return t;
}

size_t RunTrace::total_blocks() const {
  size_t t = 0;
  for (const TraceLayer& l : layers) t += l.ran_sparse ? l.active_blocks : 0;
  return t;
}

size_t RunTrace::total_gathered_elems() const {
  size_t t = 0;
  for (const TraceLayer& l : layers) t += l.gathered_elems;
  return t;
}

size_t RunTrace::total_scattered_elems() const {
  size_t t = 0;
  for (const TraceLayer& l : layers) t += l.scattered_elems;
  return t;
}

namespace {

bool layer_runs_sparse(const SparsePolicy& policy, int in_h, int in_w,
                       const RunConfig& cfg) {
  if (!cfg.sparse || !policy.sparse) return false;
  int thr = cfg.min_sparse_res >= 0 ? cfg.min_sparse_res : policy.min_resolution;
  return std::min(in_h, in_w) >= thr;
}

DifferenceMask replicate_mask(const DifferenceMask& m, int h, int w) {
  if (h % m.h != 0 || w % m.w != 0) {
    throw ConfigError("mask: cannot scale " + std::to_string(m.h) + "x" +
                      std::to_string(m.w) + " up to " + std::to_string(h) +
                      "x" + std::to_string(w) + " (non-integer factor)");
  }
  DifferenceMask out;
  out.h = h;
  out.w = w;
  out.bits.resize(static_cast<size_t>(h) * w);
  int fy = h / m.h, fx = w / m.w;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) out.set(y, x, m.at(y / fy, x / fx));
  }
  return out;
}

// Per-layer index sets derived from the full-resolution mask: dilate at full
// resolution once, then per layer resample (max-pool down, replicate up) and
// dilate by the per-scale radius. Memoized per (resolution, block size);
// layers sharing a resolution reuse the set.
struct IndexPlan {
  DifferenceMask full;
  int batch = 1;
  int dilate_scale = 0;
  std::map<std::tuple<int, int, int>, BlockIndexSet> memo;

  IndexPlan(const DifferenceMask& mask, const RunConfig& cfg, int batch_)
      : full(dilate_mask(mask, cfg.dilate_full)),
        batch(batch_),
        dilate_scale(cfg.dilate_scale) {}

  const BlockIndexSet& at(int h, int w, int block) {
    auto key = std::make_tuple(h, w, block);
    auto it = memo.find(key);
    if (it != memo.end()) return it->second;
    DifferenceMask m = h <= full.h && w <= full.w
                           ? downsample_mask(full, h, w)
                           : replicate_mask(full, h, w);
    if (dilate_scale > 0) m = dilate_mask(m, dilate_scale);
    return memo.emplace(key, mask_to_block_indices(m, block, batch))
        .first->second;
  }
};

uint64_t conv_dense_macs(const ConvLayer& c, int oh, int ow, int batch) {
  return static_cast<uint64_t>(c.c_out) * c.c_in * c.k * c.k * oh * ow * batch;
}

uint64_t conv_sparse_macs(const ConvLayer& c, size_t blocks, int b) {
  return static_cast<uint64_t>(blocks) * c.c_out * c.c_in * c.k * c.k * b * b;
}

// Activation state in flight through the sparse walk. Either a materialized
// full tensor or (under scatter fusion) the last conv's raw output blocks
// over their cached original base. `pending` is the element-wise chain not
// yet applied; consumers apply it to whatever they fetch.
struct Flow {
  Tensor full;
  Epilogue pending;
  bool has_blocks = false;
  BlockStack blocks;
  const Tensor* base = nullptr;
  std::shared_ptr<const ScatterMap> map;
  int c = 0, h = 0, w = 0, batch = 1;
};

void materialize(Flow& f) {
  if (!f.has_blocks) return;
  f.full = scatter(f.blocks, *f.base);
  f.has_blocks = false;
  f.blocks = BlockStack{};
  f.base = nullptr;
  f.map.reset();
}

void flush(Flow& f) {
  materialize(f);
  if (!f.pending.empty()) {
    f.pending.apply_tensor(f.full);
    f.pending.clear();
  }
}

// Fetches the conv input windows for `idx`, applying the pending chain to the
// fetched blocks. Non-destructive: a resblock consumes the same flow twice.
BlockStack consume_windows(Flow& f, const BlockIndexSet& idx, int k, int stride,
                           const RunConfig& cfg) {
  if (f.has_blocks) {
    if (!f.map) f.map = ScatterMapCache::instance().get(f.blocks.origin);
    return scatter_gather(f.blocks, *f.base, *f.map, idx, k, stride, f.pending);
  }
  if (cfg.elem_fusion) {
    return gather(f.full, idx, k, stride, f.pending);
  }
  flush(f);
  return gather(f.full, idx, k, stride);
}

const Tensor& cache_base(const ActivationCache& cache, int step,
                         const std::string& key, int batch, int c, int h, int w) {
  const Tensor& t = cache.tensor_entry(step, key);
  if (t.n != batch || t.c != c || t.h != h || t.w != w) {
    throw ConfigError("cache entry " + key + " has shape " + t.shape_str() +
                      ", run needs (" + std::to_string(batch) + ", " +
                      std::to_string(c) + ", " + std::to_string(h) + ", " +
                      std::to_string(w) + "); cache is stale");
  }
  return t;
}

void check_cache_model(const ActivationCache& cache, const ModelSpec& model) {
  if (cache.model_hash() != model.structure_hash()) {
    throw ConfigError("cache was precomputed for a different model than '" +
                      model.name + "' (cache hash " +
                      std::to_string(cache.model_hash()) + ", model hash " +
                      std::to_string(model.structure_hash()) + ")");
  }
}

void check_inputs(const ModelSpec& model, const Tensor& edited,
                  const DifferenceMask& mask) {
  if (edited.c != model.in_channels) {
    throw ConfigError("forward: input channel mismatch");
  }
  if (mask.h != edited.h || mask.w != edited.w) {
    throw ConfigError("forward: mask is " + std::to_string(mask.h) + "x" +
                      std::to_string(mask.w) + " but input is " +
                      std::to_string(edited.h) + "x" + std::to_string(edited.w));
  }
}

}  // namespace

Tensor sparse_forward(const ModelSpec& model, const Tensor& edited_input,
                      const ActivationCache& cache, const DifferenceMask& mask,
                      const RunConfig& config, RunTrace* trace) {
  config.validate();
  check_cache_model(cache, model);
  check_inputs(model, edited_input, mask);

  if (!config.sparse) {
    // Dense execution, traced with dense costs.
    std::vector<LayerShape> shapes =
        walk_shapes(model, edited_input.h, edited_input.w);
    if (trace) {
      for (size_t i = 0; i < model.layers.size(); ++i) {
        const Layer& L = model.layers[i];
        std::string key = "L" + std::to_string(i);
        auto dense_row = [&](const std::string& k, const ConvLayer& cv, int oh,
                             int ow) {
          TraceLayer tl;
          tl.key = k;
          tl.is_conv = true;
          tl.ran_sparse = false;
          tl.c_in = cv.c_in;
          tl.c_out = cv.c_out;
          tl.k = cv.k;
          tl.stride = cv.stride;
          tl.out_h = oh;
          tl.out_w = ow;
          tl.dense_macs = conv_dense_macs(cv, oh, ow, edited_input.n);
          tl.macs = tl.dense_macs;
          trace->layers.push_back(tl);
        };
        if (L.kind == LayerKind::Conv || L.kind == LayerKind::Downsample) {
          dense_row(key, L.conv, shapes[i].h_out, shapes[i].w_out);
        } else if (L.kind == LayerKind::ResBlock) {
          dense_row(key + ".conv1", L.res.conv1, shapes[i].h_out, shapes[i].w_out);
          dense_row(key + ".conv2", L.res.conv2, shapes[i].h_out, shapes[i].w_out);
          if (L.res.shortcut) {
            dense_row(key + ".shortcut", *L.res.shortcut, shapes[i].h_out,
                      shapes[i].w_out);
          }
        }
      }
    }
    return dense_forward(model, edited_input);
  }

  if (!mask.any()) {
    if (trace) trace->short_circuit_empty_mask = true;
    return cache.final_output(config.step);
  }

  int step = config.step;
  int batch = edited_input.n;
  IndexPlan plan(mask, config, batch);

  Flow f;
  f.full = edited_input;
  f.c = edited_input.c;
  f.h = edited_input.h;
  f.w = edited_input.w;
  f.batch = batch;

  for (size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& L = model.layers[i];
    std::string key = "L" + std::to_string(i);
    switch (L.kind) {
      case LayerKind::Conv:
      case LayerKind::Downsample: {
        const ConvLayer& cv = L.conv;
        int oh = conv_out_dim(f.h, cv.k, cv.stride);
        int ow = conv_out_dim(f.w, cv.k, cv.stride);
        TraceLayer tl;
        tl.key = key;
        tl.is_conv = true;
        tl.c_in = cv.c_in;
        tl.c_out = cv.c_out;
        tl.k = cv.k;
        tl.stride = cv.stride;
        tl.out_h = oh;
        tl.out_w = ow;
        tl.dense_macs = conv_dense_macs(cv, oh, ow, batch);
        if (!layer_runs_sparse(L.policy, f.h, f.w, config)) {
          flush(f);
          f.full = conv2d(f.full, cv);
          tl.macs = tl.dense_macs;
        } else {
          const BlockIndexSet& idx =
              plan.at(oh, ow, config.block_for_kernel(cv.k));
          BlockStack in = consume_windows(f, idx, cv.k, cv.stride, config);
          BlockStack out = conv_on_blocks(in, cv, true);
          tl.ran_sparse = true;
          tl.block = idx.block_size;
          tl.active_blocks = idx.count();
          tl.gathered_elems = in.count() * in.block_stride();
          tl.scattered_elems = out.count() * out.block_stride();
          tl.macs = conv_sparse_macs(cv, idx.count(), idx.block_size);
          const Tensor& base =
              cache_base(cache, step, key + ".out", batch, cv.c_out, oh, ow);
          if (config.scatter_fusion) {
            f.blocks = std::move(out);
            f.base = &base;
            f.map.reset();
            f.has_blocks = true;
            f.full = Tensor{};
          } else {
            f.full = scatter(out, base);
            f.has_blocks = false;
          }
          f.pending.clear();
        }
        f.c = cv.c_out;
        f.h = oh;
        f.w = ow;
        if (trace) trace->layers.push_back(tl);
        break;
      }
      case LayerKind::Norm: {
        const NormLayer& nl = L.norm;
        bool reuse = nl.kind == NormKind::Batch || config.norm_precompute;
        if (reuse) {
          const FoldedNorm& fn = cache.norm_entry(step, key + ".norm");
          if (config.elem_fusion) {
            f.pending.add_scale_shift(fn.scale, fn.shift);
          } else {
            flush(f);
            scale_shift_inplace(f.full, fn.scale, fn.shift);
          }
        } else {
          flush(f);
          FoldedNorm fn = fold_norm_layer(nl, f.full);
          scale_shift_inplace(f.full, fn.scale, fn.shift);
        }
        break;
      }
      case LayerKind::Activation: {
        if (config.elem_fusion) {
          f.pending.add_activation(L.act);
        } else {
          flush(f);
          activation_inplace(f.full.data.data(), f.full.data.size(), L.act);
        }
        break;
      }
      case LayerKind::Upsample: {
        // Per-channel element-wise ops commute with pixel replication, so the
        // pending chain survives the resize.
        materialize(f);
        f.full = upsample_nearest2x(f.full);
        f.h *= 2;
        f.w *= 2;
        break;
      }
      case LayerKind::ResBlock: {
        const ResBlockSpec& rb = L.res;
        int h = f.h, w = f.w;
        int c_out = rb.conv2.c_out;
        bool sparse_here = layer_runs_sparse(L.policy, h, w, config);
        auto push_row = [&](const std::string& k, const ConvLayer& cv,
                            bool ran_sparse, size_t blocks, int block,
                            size_t gathered, size_t scattered) {
          if (!trace) return;
          TraceLayer tl;
          tl.key = k;
          tl.is_conv = true;
          tl.ran_sparse = ran_sparse;
          tl.c_in = cv.c_in;
          tl.c_out = cv.c_out;
          tl.k = cv.k;
          tl.stride = cv.stride;
          tl.out_h = h;
          tl.out_w = w;
          tl.block = block;
          tl.active_blocks = blocks;
          tl.gathered_elems = gathered;
          tl.scattered_elems = scattered;
          tl.dense_macs = conv_dense_macs(cv, h, w, batch);
          tl.macs = ran_sparse ? conv_sparse_macs(cv, blocks, block)
                               : tl.dense_macs;
          trace->layers.push_back(tl);
        };
        if (!sparse_here) {
          flush(f);
          Tensor x0 = std::move(f.full);
          Tensor m = conv2d(x0, rb.conv1);
          push_row(key + ".conv1", rb.conv1, false, 0, 0, 0, 0);
          FoldedNorm fn = fold_norm_layer(rb.norm, m);
          scale_shift_inplace(m, fn.scale, fn.shift);
          activation_inplace(m.data.data(), m.data.size(), rb.act);
          m = conv2d(m, rb.conv2);
          push_row(key + ".conv2", rb.conv2, false, 0, 0, 0, 0);
          Tensor sc;
          if (rb.shortcut) {
            sc = conv2d(x0, *rb.shortcut);
            push_row(key + ".shortcut", *rb.shortcut, false, 0, 0, 0, 0);
          } else {
            sc = std::move(x0);
          }
          f.full = add(m, sc);
        } else {
          const BlockIndexSet& idx_m = plan.at(h, w, config.block3);
          const BlockIndexSet& idx_s = plan.at(h, w, config.block1);
          BlockStack main_in = consume_windows(f, idx_m, 3, 1, config);
          BlockStack sc_in = consume_windows(f, idx_s, 1, 1, config);

          BlockStack m1 = conv_on_blocks(main_in, rb.conv1, true);
          push_row(key + ".conv1", rb.conv1, true, idx_m.count(),
                   idx_m.block_size, main_in.count() * main_in.block_stride(),
                   m1.count() * m1.block_stride());
          const Tensor& conv1_base = cache_base(
              cache, step, key + ".conv1.out", batch, rb.conv1.c_out, h, w);

          BlockStack m2_in;
          bool reuse = rb.norm.kind == NormKind::Batch || config.norm_precompute;
          if (reuse) {
            Epilogue e;
            const FoldedNorm& fn = cache.norm_entry(step, key + ".norm1");
            e.add_scale_shift(fn.scale, fn.shift);
            e.add_activation(rb.act);
            if (config.scatter_fusion) {
              auto map1 = ScatterMapCache::instance().get(idx_m);
              m2_in = scatter_gather(m1, conv1_base, *map1, idx_m, 3, 1, e);
            } else {
              Tensor full1 = scatter(m1, conv1_base);
              if (config.elem_fusion) {
                m2_in = gather(full1, idx_m, 3, 1, e);
              } else {
                e.apply_tensor(full1);
                m2_in = gather(full1, idx_m, 3, 1);
              }
            }
          } else {
            Tensor full1 = scatter(m1, conv1_base);
            FoldedNorm fn = fold_norm_layer(rb.norm, full1);
            scale_shift_inplace(full1, fn.scale, fn.shift);
            activation_inplace(full1.data.data(), full1.data.size(), rb.act);
            m2_in = gather(full1, idx_m, 3, 1);
          }

          BlockStack m2 = conv_on_blocks(m2_in, rb.conv2, true);
          push_row(key + ".conv2", rb.conv2, true, idx_m.count(),
                   idx_m.block_size, m2_in.count() * m2_in.block_stride(),
                   m2.count() * m2.block_stride());

          BlockStack scb;
          if (rb.shortcut) {
            scb = conv_on_blocks(sc_in, *rb.shortcut, true);
            push_row(key + ".shortcut", *rb.shortcut, true, idx_s.count(),
                     idx_s.block_size, sc_in.count() * sc_in.block_stride(),
                     scb.count() * scb.block_stride());
          } else {
            scb = std::move(sc_in);
          }

          const Tensor& sum =
              cache_base(cache, step, key + ".sum", batch, c_out, h, w);
          const Tensor& orig_sc =
              cache_base(cache, step, key + ".shortcut.out", batch, c_out, h, w);
          f.full = config.scatter_fusion
                       ? scatter_with_block_residual(m2, scb, sum, orig_sc)
                       : scatter_with_block_residual_unfused(m2, scb, sum,
                                                             orig_sc);
          f.has_blocks = false;
          f.base = nullptr;
          f.map.reset();
          f.pending.clear();
        }
        f.c = c_out;
        break;
      }
    }
  }

  if (f.has_blocks) {
    // Final materialization scatters into the cached post-chain output, so
    // trailing element-wise ops never touch unedited pixels.
    apply_epilogue_on_blocks(f.blocks, f.pending);
    const Tensor& fin =
        cache_base(cache, step, "final", batch, f.c, f.h, f.w);
    return scatter(f.blocks, fin);
  }
  flush(f);
  return std::move(f.full);
}

Tensor sparse_forward_delta(const ModelSpec& model, const Tensor& edited_input,
                            const ActivationCache& cache,
                            const DifferenceMask& mask, const RunConfig& config,
                            RunTrace* trace) {
  config.validate();
  check_cache_model(cache, model);
  check_inputs(model, edited_input, mask);

  if (!mask.any()) {
    if (trace) trace->short_circuit_empty_mask = true;
    return cache.final_output(config.step);
  }

  int step = config.step;
  int batch = edited_input.n;
  IndexPlan plan(mask, config, batch);

  // Convolves the difference against the cached input, without bias, and adds
  // the cached output on top of a zero canvas.
  auto delta_conv = [&](Tensor& x, const ConvLayer& cv, const std::string& key,
                        int h_in, int w_in) -> Tensor {
    int oh = conv_out_dim(h_in, cv.k, cv.stride);
    int ow = conv_out_dim(w_in, cv.k, cv.stride);
    const Tensor& orig_in =
        cache_base(cache, step, key + ".in", batch, cv.c_in, h_in, w_in);
    const Tensor& orig_out =
        cache_base(cache, step, key + ".out", batch, cv.c_out, oh, ow);
    Tensor d = subtract(x, orig_in);
    const BlockIndexSet& idx = plan.at(oh, ow, config.block_for_kernel(cv.k));
    BlockStack g = gather(d, idx, cv.k, cv.stride);
    BlockStack ob = conv_on_blocks(g, cv, /*with_bias=*/false);
    Tensor z(batch, cv.c_out, oh, ow);
    scatter_inplace(ob, z);
    if (trace) {
      TraceLayer tl;
      tl.key = key;
      tl.is_conv = true;
      tl.ran_sparse = true;
      tl.c_in = cv.c_in;
      tl.c_out = cv.c_out;
      tl.k = cv.k;
      tl.stride = cv.stride;
      tl.out_h = oh;
      tl.out_w = ow;
      tl.block = idx.block_size;
      tl.active_blocks = idx.count();
      tl.gathered_elems = g.count() * g.block_stride();
      tl.scattered_elems = ob.count() * ob.block_stride();
      tl.dense_macs = conv_dense_macs(cv, oh, ow, batch);
      tl.macs = conv_sparse_macs(cv, idx.count(), idx.block_size);
      trace->layers.push_back(tl);
    }
    return add(z, orig_out);
  };

  Tensor x = edited_input;
  int h = edited_input.h, w = edited_input.w;
  for (size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& L = model.layers[i];
    std::string key = "L" + std::to_string(i);
    switch (L.kind) {
      case LayerKind::Conv:
      case LayerKind::Downsample: {
        if (layer_runs_sparse(L.policy, h, w, config)) {
          x = delta_conv(x, L.conv, key, h, w);
        } else {
          x = conv2d(x, L.conv);
        }
        h = conv_out_dim(h, L.conv.k, L.conv.stride);
        w = conv_out_dim(w, L.conv.k, L.conv.stride);
        break;
      }
      case LayerKind::Norm: {
        const NormLayer& nl = L.norm;
        if (nl.kind == NormKind::Batch || config.norm_precompute) {
          const FoldedNorm& fn = cache.norm_entry(step, key + ".norm");
          scale_shift_inplace(x, fn.scale, fn.shift);
        } else {
          FoldedNorm fn = fold_norm_layer(nl, x);
          scale_shift_inplace(x, fn.scale, fn.shift);
        }
        break;
      }
      case LayerKind::Activation:
        activation_inplace(x.data.data(), x.data.size(), L.act);
        break;
      case LayerKind::Upsample:
        x = upsample_nearest2x(x);
        h *= 2;
        w *= 2;
        break;
      case LayerKind::ResBlock: {
        const ResBlockSpec& rb = L.res;
        bool sparse_here = layer_runs_sparse(L.policy, h, w, config);
        Tensor x0 = std::move(x);
        Tensor m;
        if (sparse_here) {
          Tensor tmp = x0;
          m = delta_conv(tmp, rb.conv1, key + ".conv1", h, w);
        } else {
          m = conv2d(x0, rb.conv1);
        }
        if (rb.norm.kind == NormKind::Batch || config.norm_precompute) {
          const FoldedNorm& fn = cache.norm_entry(step, key + ".norm1");
          scale_shift_inplace(m, fn.scale, fn.shift);
        } else {
          FoldedNorm fn = fold_norm_layer(rb.norm, m);
          scale_shift_inplace(m, fn.scale, fn.shift);
        }
        activation_inplace(m.data.data(), m.data.size(), rb.act);
        if (sparse_here) {
          m = delta_conv(m, rb.conv2, key + ".conv2", h, w);
        } else {
          m = conv2d(m, rb.conv2);
        }
        Tensor sc;
        if (rb.shortcut) {
          if (sparse_here) {
            Tensor tmp = x0;
            sc = delta_conv(tmp, *rb.shortcut, key + ".shortcut", h, w);
          } else {
            sc = conv2d(x0, *rb.shortcut);
          }
        } else {
          sc = std::move(x0);
        }
        x = add(m, sc);
        break;
      }
    }
  }
  return x;
}

namespace {

DifferenceMask blank_mask(int h, int w, bool value) {
  DifferenceMask m;
  m.h = h;
  m.w = w;
  m.bits.assign(static_cast<size_t>(h) * w, value ? 1 : 0);
  return m;
}

// Tile rectangles of sample 0, clipped at the canvas edge.
DifferenceMask footprint(const BlockIndexSet& idx) {
  DifferenceMask m = blank_mask(idx.h, idx.w, false);
  int b = idx.block_size;
  for (const BlockIndex& bi : idx.indices) {
    if (bi.n != 0) break;
    int ylim = std::min(idx.h, bi.r + b);
    int xlim = std::min(idx.w, bi.c + b);
    for (int y = bi.r; y < ylim; ++y) {
      for (int x = bi.c; x < xlim; ++x) m.set(y, x, true);
    }
  }
  return m;
}

DifferenceMask or_masks(const DifferenceMask& a, const DifferenceMask& b) {
  DifferenceMask m = a;
  for (size_t i = 0; i < m.bits.size(); ++i) m.bits[i] |= b.bits[i];
  return m;
}

DifferenceMask upsample_mask2x(const DifferenceMask& m) {
  DifferenceMask out = blank_mask(m.h * 2, m.w * 2, false);
  for (int y = 0; y < out.h; ++y) {
    for (int x = 0; x < out.w; ++x) out.set(y, x, m.at(y / 2, x / 2));
  }
  return out;
}

}  // namespace

DifferenceMask output_coverage(const ModelSpec& model,
                               const DifferenceMask& mask, int batch,
                               const RunConfig& config) {
  config.validate();
  std::vector<LayerShape> shapes = walk_shapes(model, mask.h, mask.w);
  int out_h = shapes.back().h_out, out_w = shapes.back().w_out;
  if (!mask.any() || !config.sparse) {
    return blank_mask(out_h, out_w, !mask.any() ? false : true);
  }
  IndexPlan plan(mask, config, batch);
  DifferenceMask cov = dilate_mask(mask, config.dilate_full);
  for (size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& L = model.layers[i];
    const LayerShape& s = shapes[i];
    bool sparse_here = layer_runs_sparse(L.policy, s.h_in, s.w_in, config);
    switch (L.kind) {
      case LayerKind::Conv:
      case LayerKind::Downsample:
        if (sparse_here) {
          cov = footprint(
              plan.at(s.h_out, s.w_out, config.block_for_kernel(L.conv.k)));
        } else {
          if (L.conv.padding() > 0) cov = dilate_mask(cov, L.conv.padding());
          if (L.conv.stride == 2) cov = downsample_mask(cov, s.h_out, s.w_out);
        }
        break;
      case LayerKind::Norm:
        // Per-run group/instance statistics shift every pixel.
        if (L.norm.kind != NormKind::Batch && !config.norm_precompute) {
          cov = blank_mask(s.h_out, s.w_out, true);
        }
        break;
      case LayerKind::Activation:
        break;
      case LayerKind::Upsample:
        cov = upsample_mask2x(cov);
        break;
      case LayerKind::ResBlock:
        if (sparse_here) {
          cov = or_masks(footprint(plan.at(s.h_out, s.w_out, config.block3)),
                         footprint(plan.at(s.h_out, s.w_out, config.block1)));
        } else {
          cov = dilate_mask(cov, 2);
          if (L.res.norm.kind != NormKind::Batch && !config.norm_precompute) {
            cov = blank_mask(s.h_out, s.w_out, true);
          }
        }
        break;
    }
  }
  return cov;
}

std::vector<LayerIndexCounts> plan_index_counts(const ModelSpec& model,
                                                const DifferenceMask& mask,
                                                int batch,
                                                const RunConfig& config) {
  config.validate();
  std::vector<LayerShape> shapes = walk_shapes(model, mask.h, mask.w);
  IndexPlan plan(mask, config, batch);
  std::vector<LayerIndexCounts> out;
  bool empty = !mask.any();
  for (size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& L = model.layers[i];
    const LayerShape& s = shapes[i];
    std::string key = "L" + std::to_string(i);
    auto row = [&](const std::string& k, int kernel, bool sparse_here) {
      LayerIndexCounts lc;
      lc.key = k;
      lc.ran_sparse = sparse_here;
      if (sparse_here) {
        lc.block = config.block_for_kernel(kernel);
        lc.active_blocks =
            empty ? 0 : plan.at(s.h_out, s.w_out, lc.block).count();
      }
      out.push_back(lc);
    };
    bool sparse_here = layer_runs_sparse(L.policy, s.h_in, s.w_in, config);
    switch (L.kind) {
      case LayerKind::Conv:
      case LayerKind::Downsample:
        row(key, L.conv.k, sparse_here);
        break;
      case LayerKind::ResBlock:
        row(key + ".conv1", 3, sparse_here);
        row(key + ".conv2", 3, sparse_here);
        if (L.res.shortcut) row(key + ".shortcut", 1, sparse_here);
        break;
      default:
        break;
    }
  }
  return out;
}

}  // namespace sige
