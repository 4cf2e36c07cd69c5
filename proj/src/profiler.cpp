#include "sige/profiler.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace sige {

namespace {

using json = nlohmann::json;

struct ConvSite {
  std::string key;
  const ConvLayer* conv = nullptr;
  int out_h = 0, out_w = 0;
};

// Conv layers in execution order, keyed the way traces and index plans key
// them.
std::vector<ConvSite> conv_sites(const ModelSpec& model, int h, int w) {
  std::vector<LayerShape> shapes = walk_shapes(model, h, w);
  std::vector<ConvSite> sites;
  for (size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& L = model.layers[i];
    const LayerShape& s = shapes[i];
    std::string key = "L" + std::to_string(i);
    switch (L.kind) {
      case LayerKind::Conv:
      case LayerKind::Downsample:
        sites.push_back({key, &L.conv, s.h_out, s.w_out});
        break;
      case LayerKind::ResBlock:
        sites.push_back({key + ".conv1", &L.res.conv1, s.h_out, s.w_out});
        sites.push_back({key + ".conv2", &L.res.conv2, s.h_out, s.w_out});
        if (L.res.shortcut) {
          sites.push_back({key + ".shortcut", &*L.res.shortcut, s.h_out, s.w_out});
        }
        break;
      default:
        break;
    }
  }
  return sites;
}

uint64_t dense_macs_of(const ConvSite& s, int batch) {
  return static_cast<uint64_t>(s.conv->c_out) * s.conv->c_in * s.conv->k *
         s.conv->k * s.out_h * s.out_w * batch;
}

void finish_totals(CostReport& r) {
  for (const LayerCost& l : r.layers) {
    r.dense_macs += l.dense_macs;
    r.macs += l.macs;
    r.gathered_elems += l.gathered_elems;
    r.scattered_elems += l.scattered_elems;
  }
}

}  // namespace

uint64_t count_dense_macs(const ModelSpec& model, int h, int w, int batch) {
  uint64_t total = 0;
  for (const ConvSite& s : conv_sites(model, h, w)) {
    total += dense_macs_of(s, batch);
  }
  return total;
}

CostReport analytic_cost(const ModelSpec& model, const DifferenceMask& mask,
                         int batch, const RunConfig& config) {
  std::vector<ConvSite> sites = conv_sites(model, mask.h, mask.w);
  std::vector<LayerIndexCounts> counts =
      plan_index_counts(model, mask, batch, config);
  if (sites.size() != counts.size()) {
    throw ConfigError("internal: conv site/plan row mismatch");
  }
  CostReport r;
  for (size_t i = 0; i < sites.size(); ++i) {
    const ConvSite& s = sites[i];
    const LayerIndexCounts& c = counts[i];
    if (s.key != c.key) throw ConfigError("internal: conv site/plan key mismatch");
    LayerCost lc;
    lc.key = s.key;
    lc.ran_sparse = c.ran_sparse;
    lc.dense_macs = dense_macs_of(s, batch);
    if (c.ran_sparse) {
      lc.block = c.block;
      lc.active_blocks = c.active_blocks;
      int b = c.block;
      int window = s.conv->stride * b + s.conv->k - s.conv->stride;
      lc.macs = static_cast<uint64_t>(c.active_blocks) * s.conv->c_out *
                s.conv->c_in * s.conv->k * s.conv->k * b * b;
      lc.gathered_elems = c.active_blocks *
                          static_cast<size_t>(s.conv->c_in) * window * window;
      lc.scattered_elems =
          c.active_blocks * static_cast<size_t>(s.conv->c_out) * b * b;
    } else {
      lc.macs = lc.dense_macs;
    }
    r.layers.push_back(lc);
  }
  finish_totals(r);
  return r;
}

CostReport cost_from_trace(const RunTrace& trace) {
  CostReport r;
  for (const TraceLayer& t : trace.layers) {
    if (!t.is_conv) continue;
    LayerCost lc;
    lc.key = t.key;
    lc.ran_sparse = t.ran_sparse;
    lc.block = t.block;
    lc.active_blocks = t.active_blocks;
    lc.dense_macs = t.dense_macs;
    lc.macs = t.macs;
    lc.gathered_elems = t.gathered_elems;
    lc.scattered_elems = t.scattered_elems;
    r.layers.push_back(lc);
  }
  finish_totals(r);
  return r;
}

LatencyReport benchmark(const std::function<void()>& fn, int warmup, int runs) {
  if (runs < 1) throw ConfigError("benchmark: runs must be >= 1");
  if (warmup < 0) throw ConfigError("benchmark: warmup must be >= 0");
  LatencyReport r;
  r.warmup = warmup;
  r.runs = runs;
  r.threads = worker_threads();
  r.cpu_count = static_cast<int>(std::thread::hardware_concurrency());
  for (int i = 0; i < warmup; ++i) fn();
  r.samples_ms.reserve(runs);
  for (int i = 0; i < runs; ++i) {
    auto t0 = std::chrono::steady_clock::now();
    fn();
    auto t1 = std::chrono::steady_clock::now();
    r.samples_ms.push_back(
        std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  double sum = 0.0;
  r.min_ms = r.samples_ms[0];
  for (double s : r.samples_ms) {
    sum += s;
    r.min_ms = std::min(r.min_ms, s);
  }
  r.mean_ms = sum / runs;
  double var = 0.0;
  for (double s : r.samples_ms) var += (s - r.mean_ms) * (s - r.mean_ms);
  r.std_ms = std::sqrt(var / runs);
  return r;
}

std::vector<AblationRow> ablation_sweep(const ModelSpec& model,
                                        const Tensor& edited,
                                        const ActivationCache& cache,
                                        const DifferenceMask& mask,
                                        const RunConfig& base, int warmup,
                                        int runs) {
  struct Stage {
    const char* label;
    bool dense;
    bool norm_precompute;
    bool elem_fusion;
    bool scatter_fusion;
  };
  const Stage stages[] = {
      {"dense", true, false, false, false},
      {"sparse", false, false, false, false},
      {"sparse+norm", false, true, false, false},
      {"sparse+norm+elem", false, true, true, false},
      {"sparse+norm+elem+scatter", false, true, true, true},
  };
  if (runs < 1) throw ConfigError("ablation_sweep: runs must be >= 1");
  if (warmup < 0) throw ConfigError("ablation_sweep: warmup must be >= 0");
  std::vector<AblationRow> rows;
  std::vector<std::function<void()>> bodies;
  for (const Stage& st : stages) {
    AblationRow row;
    row.label = st.label;
    row.dense = st.dense;
    row.config = base;
    row.config.sparse = !st.dense;
    row.config.norm_precompute = st.norm_precompute;
    row.config.elem_fusion = st.elem_fusion;
    row.config.scatter_fusion = st.scatter_fusion;
    if (st.dense) {
      row.macs = count_dense_macs(model, edited.h, edited.w, edited.n);
      row.latency.opt_bits = 0;
      bodies.push_back([&] { dense_forward(model, edited); });
    } else {
      RunTrace trace;
      sparse_forward(model, edited, cache, mask, row.config, &trace);
      row.macs = trace.total_macs();
      row.active_blocks = trace.total_blocks();
      row.latency.opt_bits = row.config.opt_bits();
      bodies.push_back([&, cfg = row.config] {
        sparse_forward(model, edited, cache, mask, cfg);
      });
    }
    row.latency.warmup = warmup;
    row.latency.runs = runs;
    row.latency.threads = worker_threads();
    row.latency.cpu_count = static_cast<int>(std::thread::hardware_concurrency());
    row.latency.samples_ms.reserve(runs);
    rows.push_back(std::move(row));
  }
  // Rounds interleave the configurations so machine-speed drift over the
  // sweep hits every row alike instead of biasing later rows.
  for (int i = 0; i < warmup; ++i) {
    for (const auto& body : bodies) body();
  }
  for (int i = 0; i < runs; ++i) {
    for (size_t r = 0; r < bodies.size(); ++r) {
      auto t0 = std::chrono::steady_clock::now();
      bodies[r]();
      auto t1 = std::chrono::steady_clock::now();
      rows[r].latency.samples_ms.push_back(
          std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
  }
  for (AblationRow& row : rows) {
    double sum = 0.0;
    row.latency.min_ms = row.latency.samples_ms[0];
    for (double s : row.latency.samples_ms) {
      sum += s;
      row.latency.min_ms = std::min(row.latency.min_ms, s);
    }
    row.latency.mean_ms = sum / runs;
    double var = 0.0;
    for (double s : row.latency.samples_ms)
      var += (s - row.latency.mean_ms) * (s - row.latency.mean_ms);
    row.latency.std_ms = std::sqrt(var / runs);
  }
  return rows;
}

namespace {

std::string human_macs(uint64_t macs) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  if (macs >= 1000000000ull) {
    os << macs / 1e9 << "G";
  } else if (macs >= 1000000ull) {
    os << macs / 1e6 << "M";
  } else {
    os << macs;
  }
  return os.str();
}

}  // namespace

std::string cost_report_table(const CostReport& r) {
  std::ostringstream os;
  os << std::left << std::setw(16) << "layer" << std::right << std::setw(8)
     << "mode" << std::setw(7) << "block" << std::setw(8) << "tiles"
     << std::setw(12) << "macs" << std::setw(12) << "dense" << std::setw(12)
     << "gathered" << std::setw(12) << "scattered" << "\n";
  for (const LayerCost& l : r.layers) {
    os << std::left << std::setw(16) << l.key << std::right << std::setw(8)
       << (l.ran_sparse ? "sparse" : "dense") << std::setw(7)
       << (l.ran_sparse ? std::to_string(l.block) : "-") << std::setw(8)
       << (l.ran_sparse ? std::to_string(l.active_blocks) : "-")
       << std::setw(12) << human_macs(l.macs) << std::setw(12)
       << human_macs(l.dense_macs) << std::setw(12) << l.gathered_elems
       << std::setw(12) << l.scattered_elems << "\n";
  }
  os << std::left << std::setw(16) << "total" << std::right << std::setw(8)
     << "" << std::setw(7) << "" << std::setw(8) << "" << std::setw(12)
     << human_macs(r.macs) << std::setw(12) << human_macs(r.dense_macs)
     << std::setw(12) << r.gathered_elems << std::setw(12)
     << r.scattered_elems << "\n";
  os << std::fixed << std::setprecision(2) << "reduction: " << r.reduction()
     << "x\n";
  return os.str();
}

namespace {

json layer_cost_json(const LayerCost& l) {
  return json{{"layer", l.key},
              {"sparse", l.ran_sparse},
              {"block", l.block},
              {"active_blocks", l.active_blocks},
              {"macs", l.macs},
              {"dense_macs", l.dense_macs},
              {"gathered_elems", l.gathered_elems},
              {"scattered_elems", l.scattered_elems}};
}

json latency_json(const LatencyReport& r) {
  return json{{"warmup", r.warmup},       {"runs", r.runs},
              {"samples_ms", r.samples_ms}, {"mean_ms", r.mean_ms},
              {"std_ms", r.std_ms},       {"min_ms", r.min_ms},
              {"opt_bits", r.opt_bits},   {"threads", r.threads},
              {"cpu_count", r.cpu_count}, {"allocator", r.allocator}};
}

}  // namespace

std::string cost_report_json(const CostReport& r,
                             const std::string& model_name) {
  json j;
  j["format"] = "sige_report_v1";
  j["kind"] = "cost";
  j["model"] = model_name;
  j["layers"] = json::array();
  for (const LayerCost& l : r.layers) j["layers"].push_back(layer_cost_json(l));
  j["total_macs"] = r.macs;
  j["total_dense_macs"] = r.dense_macs;
  j["reduction"] = r.reduction();
  j["gathered_elems"] = r.gathered_elems;
  j["scattered_elems"] = r.scattered_elems;
  return j.dump(2);
}

std::string latency_report_json(const LatencyReport& r) {
  json j = latency_json(r);
  j["format"] = "sige_report_v1";
  j["kind"] = "latency";
  return j.dump(2);
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(28) << "stage" << std::right << std::setw(12)
     << "mean ms" << std::setw(12) << "std ms" << std::setw(12) << "min ms"
     << std::setw(12) << "macs" << std::setw(10) << "speedup" << "\n";
  double dense_mean = rows.empty() ? 0.0 : rows.front().latency.mean_ms;
  for (const AblationRow& row : rows) {
    double speedup =
        row.latency.mean_ms > 0.0 ? dense_mean / row.latency.mean_ms : 0.0;
    os << std::left << std::setw(28) << row.label << std::right << std::fixed
       << std::setprecision(3) << std::setw(12) << row.latency.mean_ms
       << std::setw(12) << row.latency.std_ms << std::setw(12)
       << row.latency.min_ms << std::setw(12) << human_macs(row.macs)
       << std::setprecision(2) << std::setw(9) << speedup << "x\n";
  }
  return os.str();
}

std::string ablation_json(const std::vector<AblationRow>& rows,
                          const std::string& model_name) {
  json j;
  j["format"] = "sige_report_v1";
  j["kind"] = "ablation";
  j["model"] = model_name;
  j["rows"] = json::array();
  double dense_mean = rows.empty() ? 0.0 : rows.front().latency.mean_ms;
  for (const AblationRow& row : rows) {
    json rj;
    rj["stage"] = row.label;
    rj["dense"] = row.dense;
    rj["macs"] = row.macs;
    rj["active_blocks"] = row.active_blocks;
    rj["latency"] = latency_json(row.latency);
    rj["speedup"] = row.latency.mean_ms > 0.0
                        ? dense_mean / row.latency.mean_ms
                        : 0.0;
    j["rows"].push_back(rj);
  }
  return j.dump(2);
}

}  // namespace sige
