#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sige/graph.hpp"

namespace sige {

// Per-conv cost row. MACs count multiply-accumulates; 1 MAC = 2 FLOPs.
// Gathered/scattered element counts track data movement separately.
struct LayerCost {
  std::string key;
  bool ran_sparse = false;
  int block = 0;
  size_t active_blocks = 0;
  uint64_t dense_macs = 0;
  uint64_t macs = 0;
  size_t gathered_elems = 0;
  size_t scattered_elems = 0;
};

struct CostReport {
  std::vector<LayerCost> layers;
  uint64_t dense_macs = 0;
  uint64_t macs = 0;
  size_t gathered_elems = 0;
  size_t scattered_elems = 0;
  double reduction() const {
    return macs == 0 ? 0.0 : static_cast<double>(dense_macs) / macs;
  }
};

// Dense MAC total for the whole model at the given input resolution.
uint64_t count_dense_macs(const ModelSpec& model, int h, int w, int batch = 1);

// Analytic cost of a sparse run: block counts come from the same index
// planning the executor uses, no tensors are touched.
CostReport analytic_cost(const ModelSpec& model, const DifferenceMask& mask,
                         int batch, const RunConfig& config);

// Cost extracted from an executed run's trace.
CostReport cost_from_trace(const RunTrace& trace);

struct LatencyReport {
  int warmup = 0;
  int runs = 0;
  std::vector<double> samples_ms;
  double mean_ms = 0.0;
  double std_ms = 0.0;
  double min_ms = 0.0;
  uint32_t opt_bits = 0;
  int threads = 1;
  int cpu_count = 1;
  std::string allocator = "default";
};

LatencyReport benchmark(const std::function<void()>& fn, int warmup, int runs);

// One row of the cumulative optimization sweep.
struct AblationRow {
  std::string label;
  RunConfig config;
  bool dense = false;
  LatencyReport latency;
  uint64_t macs = 0;
  size_t active_blocks = 0;
};

// Rows, in order: dense, +sparse gather/scatter, +cached norm params,
// +element-wise fusion, +scatter-gather fusion. One shared precompute:
// the cache contents do not depend on which optimizations run.
std::vector<AblationRow> ablation_sweep(const ModelSpec& model,
                                        const Tensor& edited,
                                        const ActivationCache& cache,
                                        const DifferenceMask& mask,
                                        const RunConfig& base, int warmup,
                                        int runs);

std::string cost_report_table(const CostReport& r);
std::string cost_report_json(const CostReport& r, const std::string& model_name);
std::string latency_report_json(const LatencyReport& r);
std::string ablation_table(const std::vector<AblationRow>& rows);
std::string ablation_json(const std::vector<AblationRow>& rows,
                          const std::string& model_name);

}  // namespace sige
