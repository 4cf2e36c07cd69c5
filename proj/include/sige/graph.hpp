#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sige/conv.hpp"
#include "sige/eltwise.hpp"
#include "sige/kernels.hpp"
#include "sige/mask.hpp"
#include "sige/norm.hpp"
#include "sige/tensor.hpp"

namespace sige {

struct NormLayer {
  NormKind kind = NormKind::Group;
  int groups = 1;  // Instance normalization stores groups == channels
  float eps = 1e-5f;
  std::vector<float> gamma, beta;
  // Batch kind only: precomputed running statistics, one per channel.
  std::vector<float> running_mean, running_var;

  int channels() const { return static_cast<int>(gamma.size()); }
  void validate() const;
};

struct SparsePolicy {
  bool sparse = true;
  // The layer falls back to dense execution when min(h_in, w_in) is below
  // this.
  int min_resolution = 16;
};

enum class LayerKind { Conv, Norm, Activation, ResBlock, Downsample, Upsample };

const char* layer_kind_name(LayerKind k);
LayerKind layer_kind_from_name(const std::string& s);

// Residual block: main branch conv1 -> norm -> act -> conv2 (both 3x3,
// stride 1); shortcut is a 1x1 conv when present, identity otherwise.
// Output = main(x) + shortcut(x).
struct ResBlockSpec {
  ConvLayer conv1, conv2;
  NormLayer norm;
  ActKind act = ActKind::Silu;
  std::optional<ConvLayer> shortcut;
};

struct Layer {
  LayerKind kind = LayerKind::Conv;
  std::string name;
  SparsePolicy policy;
  ConvLayer conv;               // Conv / Downsample
  NormLayer norm;               // Norm
  ActKind act = ActKind::None;  // Activation
  ResBlockSpec res;             // ResBlock
};

struct ModelSpec {
  std::string name;
  int in_channels = 0, in_h = 0, in_w = 0;
  std::vector<Layer> layers;

  void validate() const;
  // Hash of structure plus all weights; guards caches against model drift.
  uint64_t structure_hash() const;
};

struct LayerShape {
  int c_in = 0, h_in = 0, w_in = 0;
  int c_out = 0, h_out = 0, w_out = 0;
};

// Validates channel chaining and returns per-layer geometry for the given
// input resolution.
std::vector<LayerShape> walk_shapes(const ModelSpec& model, int h, int w);

// Smallest full-resolution dilation radius that makes every layer's active
// region cover its true changed region: the sum of conv receptive-field
// growth, with each conv's padding weighted by its input downsampling factor.
int required_dilation(const ModelSpec& model);

struct RunConfig {
  int step = 0;
  float mask_threshold = 1e-3f;
  int dilate_full = 1;   // radius at mask resolution, applied first
  int dilate_scale = 1;  // radius applied after downsampling to each layer
  int block3 = 6;        // tile size for 3x3 convs
  int block1 = 4;        // tile size for 1x1 convs
  // Overrides every layer's own min_resolution when >= 0.
  int min_sparse_res = -1;
  bool sparse = true;
  bool norm_precompute = true;  // reuse cached stats for group/instance norms
  bool elem_fusion = true;      // apply element-wise chains on blocks only
  bool scatter_fusion = true;   // fuse scatter->gather and the residual join
  uint32_t seed = 42;

  void validate() const;
  uint32_t opt_bits() const;  // 1 sparse | 2 norm | 4 elem | 8 scatter
  int block_for_kernel(int k) const { return k == 3 ? block3 : block1; }
};

enum class CacheCategory {
  ConvOutput,
  ConvInput,
  ResBlockExtra,  // precomputed sums and original shortcut tensors
  FinalOutput,
};

// Original-input activations and folded norm params, keyed by
// (step, entry key). Entries are written by precompute and read-only
// afterwards; refresh_step replaces one step's entries wholesale.
class ActivationCache {
 public:
  bool has_tensor(int step, const std::string& key) const;
  const Tensor& tensor_entry(int step, const std::string& key) const;
  const FoldedNorm& norm_entry(int step, const std::string& key) const;
  const Tensor& final_output(int step) const { return tensor_entry(step, "final"); }

  void put_tensor(int step, const std::string& key, Tensor t, CacheCategory cat);
  void put_norm(int step, const std::string& key, FoldedNorm f);
  void drop_step(int step);

  uint64_t model_hash() const { return model_hash_; }
  void set_model_hash(uint64_t h) { model_hash_ = h; }

  size_t entry_count() const;
  size_t entry_count(int step) const;

  struct Breakdown {
    size_t conv_outputs = 0;
    size_t conv_inputs = 0;
    size_t resblock_extras = 0;
    size_t final_outputs = 0;
    size_t norm_params = 0;
    size_t total() const {
      return conv_outputs + conv_inputs + resblock_extras + final_outputs +
             norm_params;
    }
  };
  // Float counts per category, across all steps.
  Breakdown element_breakdown() const;
  size_t total_elements() const { return element_breakdown().total(); }

 private:
  struct TensorEntry {
    Tensor t;
    CacheCategory cat;
  };
  std::map<std::pair<int, std::string>, TensorEntry> tensors_;
  std::map<std::pair<int, std::string>, FoldedNorm> norms_;
  uint64_t model_hash_ = 0;
};

struct PrecomputeOptions {
  // Also store every conv's input activation; required by the delta pipeline
  // (sparse_forward_delta).
  bool keep_conv_inputs = false;
};

// Runs the dense forward on the original input once per step and stores every
// conv output, per-resblock join tensors, folded norm params, and the final
// output. Steps share the same input here; callers with step-dependent inputs
// use refresh_step per step.
void precompute(ActivationCache& cache, const ModelSpec& model,
                const Tensor& original_input,
                const std::vector<int>& steps = {0},
                const PrecomputeOptions& opts = {});

// Replaces one step's entries. Requires exclusive access to the cache.
void refresh_step(ActivationCache& cache, const ModelSpec& model,
                  const Tensor& original_input, int step,
                  const PrecomputeOptions& opts = {});

// Dense oracle; bit-identical to the walk precompute records.
Tensor dense_forward(const ModelSpec& model, const Tensor& input);

// Dense pass that takes every norm's folded parameters from the cache
// instead of the current input. This is the function sparse execution
// approximates when statistics reuse is on.
Tensor dense_forward_reused_stats(const ModelSpec& model, const Tensor& input,
                                  const ActivationCache& cache, int step = 0);

// Output-resolution footprint a sparse run writes: the final scatter's tile
// pattern carried through any trailing layers. Pixels outside it keep their
// cached values bit for bit. Empty mask gives an empty footprint.
DifferenceMask output_coverage(const ModelSpec& model,
                               const DifferenceMask& mask, int batch,
                               const RunConfig& config);

struct TraceLayer {
  std::string key;
  bool is_conv = false;
  bool ran_sparse = false;
  int c_in = 0, c_out = 0, k = 0, stride = 0;
  int out_h = 0, out_w = 0, block = 0;
  size_t active_blocks = 0;
  size_t gathered_elems = 0;
  size_t scattered_elems = 0;
  uint64_t macs = 0;        // executed
  uint64_t dense_macs = 0;  // what a dense run would cost
};

struct RunTrace {
  std::vector<TraceLayer> layers;
  bool short_circuit_empty_mask = false;

  uint64_t total_macs() const;
  uint64_t total_dense_macs() const;
  size_t total_blocks() const;
  size_t total_gathered_elems() const;
  size_t total_scattered_elems() const;
};

// Sparse incremental forward. The mask lives at the input resolution and is
// shared across the batch; per-layer index sets are derived from it
// (full-resolution dilation, max-pool downsampling to the layer's output
// resolution, per-scale dilation). Pixels outside every scattered tile of the
// final layer are bit-identical to the cached original output; an all-false
// mask returns the cached output directly.
Tensor sparse_forward(const ModelSpec& model, const Tensor& edited_input,
                      const ActivationCache& cache, const DifferenceMask& mask,
                      const RunConfig& config, RunTrace* trace = nullptr);

// Difference-driven variant: gathers edited - original, convolves without
// bias, scatters into zeros, and adds the cached output. Mathematically
// identical to sparse_forward; kept as a cross-check. Requires a cache built
// with keep_conv_inputs.
Tensor sparse_forward_delta(const ModelSpec& model, const Tensor& edited_input,
                            const ActivationCache& cache,
                            const DifferenceMask& mask, const RunConfig& config,
                            RunTrace* trace = nullptr);

// Per-layer index sets the executor would use, for analytic cost accounting.
struct LayerIndexCounts {
  std::string key;
  bool ran_sparse = false;
  int block = 0;
  size_t active_blocks = 0;
};
std::vector<LayerIndexCounts> plan_index_counts(const ModelSpec& model,
                                                const DifferenceMask& mask,
                                                int batch,
                                                const RunConfig& config);

}  // namespace sige
