#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sige/fixtures.hpp"
#include "sige/io.hpp"
#include "sige/models.hpp"
#include "sige/profiler.hpp"

namespace {

using namespace sige;

struct Options {
  std::string model = "mini_unet_gn";
  std::string fixture;
  std::string original_path;
  std::string edited_path;
  float threshold = 1e-3f;
  int dilate_full = -1;  // -1: use the model's exactness bound
  int dilate_scale = 1;
  int block3 = 6;
  int block1 = 4;
  int min_sparse_res = -1;
  bool no_norm_precompute = false;
  bool no_elem_fusion = false;
  bool no_scatter_fusion = false;
  bool dense_only = false;
  int warmup = 1;
  int runs = 5;
  std::string out;
  uint32_t seed = 7;
};

void add_common_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--model", o.model,
                  "built-in model name or path to a model json");
  cmd->add_option("--fixture", o.fixture,
                  "built-in edit fixture (rect1, rect5, rect15, rect35, blob5,"
                  " multi15)");
  cmd->add_option("--original", o.original_path, "original input (.sigt)");
  cmd->add_option("--edited", o.edited_path, "edited input (.sigt)");
  cmd->add_option("--threshold", o.threshold, "difference mask threshold");
  cmd->add_option("--dilate-full", o.dilate_full,
                  "dilation radius at input resolution (default: model bound)");
  cmd->add_option("--dilate-scale", o.dilate_scale,
                  "dilation radius applied after each downsample");
  cmd->add_option("--block3", o.block3, "tile size for 3x3 convs");
  cmd->add_option("--block1", o.block1, "tile size for 1x1 convs");
  cmd->add_option("--min-sparse-res", o.min_sparse_res,
                  "override per-layer minimum sparse resolution");
  cmd->add_flag("--no-norm-precompute", o.no_norm_precompute,
                "recompute group/instance norm statistics per run");
  cmd->add_flag("--no-elem-fusion", o.no_elem_fusion,
                "apply element-wise layers on full tensors");
  cmd->add_flag("--no-scatter-fusion", o.no_scatter_fusion,
                "materialize between consecutive sparse convs");
  cmd->add_flag("--dense-only", o.dense_only, "disable sparse execution");
  cmd->add_option("--out", o.out, "write a json report here");
  cmd->add_option("--seed", o.seed, "seed for generated fixtures");
}

RunConfig make_config(const Options& o, const ModelSpec& model) {
  RunConfig cfg;
  cfg.mask_threshold = o.threshold;
  cfg.dilate_full = o.dilate_full >= 0 ? o.dilate_full : required_dilation(model);
  cfg.dilate_scale = o.dilate_scale;
  cfg.block3 = o.block3;
  cfg.block1 = o.block1;
  cfg.min_sparse_res = o.min_sparse_res;
  cfg.sparse = !o.dense_only;
  cfg.norm_precompute = !o.no_norm_precompute;
  cfg.elem_fusion = !o.no_elem_fusion;
  cfg.scatter_fusion = !o.no_scatter_fusion;
  cfg.seed = o.seed;
  cfg.validate();
  return cfg;
}

ModelSpec resolve_model(const Options& o) {
  if (o.model.size() > 5 && o.model.substr(o.model.size() - 5) == ".json") {
    return load_model(o.model);
  }
  return toy_model(o.model);
}

struct Inputs {
  Tensor original;
  Tensor edited;
};

Inputs resolve_inputs(const Options& o, const ModelSpec& model) {
  bool have_paths = !o.original_path.empty() || !o.edited_path.empty();
  if (have_paths) {
    if (o.original_path.empty() || o.edited_path.empty()) {
      throw ConfigError("--original and --edited must be given together");
    }
    if (!o.fixture.empty()) {
      throw ConfigError("--fixture conflicts with --original/--edited");
    }
    Inputs in{load_tensor(o.original_path), load_tensor(o.edited_path)};
    require_same_shape(in.original, in.edited, "verify inputs");
    return in;
  }
  std::string kind = o.fixture.empty() ? "rect5" : o.fixture;
  EditFixture fx =
      make_edit_fixture(kind, 1, model.in_channels, model.in_h, model.in_w, o.seed);
  return Inputs{std::move(fx.original), std::move(fx.edited)};
}

void maybe_write(const std::string& out, const std::string& content) {
  if (out.empty()) return;
  write_text_file(out, content);
  std::cout << "report written to " << out << "\n";
}

int cmd_verify(const Options& o) {
  ModelSpec model = resolve_model(o);
  Inputs in = resolve_inputs(o, model);
  RunConfig cfg = make_config(o, model);
  DifferenceMask mask =
      compute_difference_mask(in.original, in.edited, cfg.mask_threshold);
  std::cout << "model " << model.name << ", mask " << mask.count_true()
            << " px (" << mask.area_fraction() * 100.0 << "%), dilate_full "
            << cfg.dilate_full << "\n";

  ActivationCache cache;
  PrecomputeOptions opts;
  opts.keep_conv_inputs = true;
  precompute(cache, model, in.original, {cfg.step}, opts);
  const Tensor& cached = cache.final_output(cfg.step);

  // With statistics reuse on, the reference is the dense pass holding every
  // norm's folded parameters at their cached values; that substitution is the
  // engine's one approximation. With reuse off the plain dense pass applies.
  Tensor reference =
      cfg.norm_precompute
          ? dense_forward_reused_stats(model, in.edited, cache, cfg.step)
          : dense_forward(model, in.edited);
  Tensor sparse_out = sparse_forward(model, in.edited, cache, mask, cfg);
  Tensor delta_out = sparse_forward_delta(model, in.edited, cache, mask, cfg);
  DifferenceMask cov = output_coverage(model, mask, in.original.n, cfg);

  float covered_max = 0.0f;
  float uncovered_max = 0.0f;
  size_t covered_px = 0;
  for (int n = 0; n < sparse_out.n; ++n) {
    for (int ic = 0; ic < sparse_out.c; ++ic) {
      for (int y = 0; y < sparse_out.h; ++y) {
        for (int x = 0; x < sparse_out.w; ++x) {
          size_t i = sparse_out.idx(n, ic, y, x);
          if (cov.at(y, x)) {
            ++covered_px;
            covered_max = std::max(
                covered_max, std::abs(sparse_out.data[i] - reference.data[i]));
          } else {
            uncovered_max = std::max(
                uncovered_max, std::abs(sparse_out.data[i] - cached.data[i]));
          }
        }
      }
    }
  }
  bool pass_covered = covered_max <= 1e-4f;
  bool pass_uncovered = uncovered_max == 0.0f;
  std::cout << (pass_covered ? "[ok]   " : "[FAIL] ") << "covered region ("
            << covered_px << " values): max |sparse - reference| = "
            << covered_max << " (tolerance 1e-4)\n";
  std::cout << (pass_uncovered ? "[ok]   " : "[FAIL] ")
            << "uncovered region: max |sparse - cached| = " << uncovered_max
            << " (must be 0)\n";
  std::cout << "info: difference-pipeline agreement = "
            << max_abs_diff(sparse_out, delta_out) << "\n";
  if (cfg.norm_precompute) {
    std::cout << "info: vs dense with per-run statistics = "
              << max_abs_diff(sparse_out, dense_forward(model, in.edited))
              << "\n";
  }

  if (!o.out.empty()) {
    std::ostringstream js;
    js << "{\n  \"format\": \"sige_report_v1\",\n  \"kind\": \"verify\",\n"
       << "  \"model\": \"" << model.name << "\",\n"
       << "  \"covered_max\": " << covered_max << ",\n"
       << "  \"uncovered_max\": " << uncovered_max << ",\n"
       << "  \"pass\": " << ((pass_covered && pass_uncovered) ? "true" : "false")
       << "\n}\n";
    maybe_write(o.out, js.str());
  }
  return pass_covered && pass_uncovered ? 0 : 1;
}

int cmd_macs(const Options& o) {
  ModelSpec model = resolve_model(o);
  Inputs in = resolve_inputs(o, model);
  RunConfig cfg = make_config(o, model);
  DifferenceMask mask =
      compute_difference_mask(in.original, in.edited, cfg.mask_threshold);
  CostReport r = analytic_cost(model, mask, in.original.n, cfg);
  std::cout << "model " << model.name << ", mask "
            << mask.area_fraction() * 100.0 << "%\n";
  std::cout << cost_report_table(r);
  maybe_write(o.out, cost_report_json(r, model.name));
  return 0;
}

int cmd_bench(const Options& o) {
  ModelSpec model = resolve_model(o);
  Inputs in = resolve_inputs(o, model);
  RunConfig cfg = make_config(o, model);
  DifferenceMask mask =
      compute_difference_mask(in.original, in.edited, cfg.mask_threshold);
  ActivationCache cache;
  precompute(cache, model, in.original);
  RunTrace trace;
  sparse_forward(model, in.edited, cache, mask, cfg, &trace);
  LatencyReport r = benchmark(
      [&] { sparse_forward(model, in.edited, cache, mask, cfg); }, o.warmup,
      o.runs);
  r.opt_bits = cfg.opt_bits();
  std::printf("%s: mean %.3f ms, std %.3f ms, min %.3f ms (%d runs, %d warmup, %d threads)\n",
              model.name.c_str(), r.mean_ms, r.std_ms, r.min_ms, r.runs,
              r.warmup, r.threads);
  std::printf("macs %.3fG (dense %.3fG, %.2fx)\n", trace.total_macs() / 1e9,
              trace.total_dense_macs() / 1e9,
              trace.total_macs() ? static_cast<double>(trace.total_dense_macs()) /
                                       trace.total_macs()
                                 : 0.0);
  maybe_write(o.out, latency_report_json(r));
  return 0;
}

int cmd_ablate(const Options& o) {
  ModelSpec model = resolve_model(o);
  Inputs in = resolve_inputs(o, model);
  RunConfig cfg = make_config(o, model);
  DifferenceMask mask =
      compute_difference_mask(in.original, in.edited, cfg.mask_threshold);
  ActivationCache cache;
  precompute(cache, model, in.original);
  std::vector<AblationRow> rows =
      ablation_sweep(model, in.edited, cache, mask, cfg, o.warmup, o.runs);
  std::cout << "model " << model.name << ", mask "
            << mask.area_fraction() * 100.0 << "%, " << o.runs << " runs\n";
  std::cout << ablation_table(rows);
  maybe_write(o.out, ablation_json(rows, model.name));
  return 0;
}

int cmd_mask_stats(const Options& o) {
  ModelSpec model = resolve_model(o);
  Inputs in = resolve_inputs(o, model);
  RunConfig cfg = make_config(o, model);
  DifferenceMask mask =
      compute_difference_mask(in.original, in.edited, cfg.mask_threshold);
  DifferenceMask dilated = dilate_mask(mask, cfg.dilate_full);
  std::cout << "mask " << mask.w << "x" << mask.h << ": " << mask.count_true()
            << " px (" << mask.area_fraction() * 100.0 << "%), dilated by "
            << cfg.dilate_full << ": " << dilated.count_true() << " px ("
            << dilated.area_fraction() * 100.0 << "%)\n";
  std::vector<LayerIndexCounts> counts =
      plan_index_counts(model, mask, in.original.n, cfg);
  std::vector<LayerShape> shapes = walk_shapes(model, mask.h, mask.w);
  std::cout << std::left << std::setw(16) << "layer" << std::right
            << std::setw(7) << "block" << std::setw(8) << "tiles"
            << std::setw(8) << "of" << std::setw(10) << "frac" << "\n";
  size_t site = 0;
  for (size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& L = model.layers[i];
    int nrows = 0;
    if (L.kind == LayerKind::Conv || L.kind == LayerKind::Downsample) nrows = 1;
    if (L.kind == LayerKind::ResBlock) nrows = L.res.shortcut ? 3 : 2;
    for (int rrow = 0; rrow < nrows; ++rrow, ++site) {
      const LayerIndexCounts& c = counts[site];
      if (!c.ran_sparse) {
        std::cout << std::left << std::setw(16) << c.key << std::right
                  << std::setw(7) << "-" << std::setw(8) << "dense"
                  << std::setw(8) << "-" << std::setw(10) << "-" << "\n";
        continue;
      }
      int oh = shapes[i].h_out, ow = shapes[i].w_out;
      size_t total = static_cast<size_t>((oh + c.block - 1) / c.block) *
                     ((ow + c.block - 1) / c.block) * in.original.n;
      std::ostringstream frac;
      frac << std::fixed << std::setprecision(1)
           << 100.0 * c.active_blocks / total << "%";
      std::cout << std::left << std::setw(16) << c.key << std::right
                << std::setw(7) << c.block << std::setw(8) << c.active_blocks
                << std::setw(8) << total << std::setw(10) << frac.str() << "\n";
    }
  }
  if (!o.out.empty()) save_mask_pbm(o.out, dilated);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sparse incremental inference for edited inputs"};
  app.require_subcommand(1);
  Options o;

  CLI::App* verify = app.add_subcommand(
      "verify", "check a sparse run against the dense pass");
  CLI::App* macs = app.add_subcommand("macs", "per-layer MAC counts for a mask");
  CLI::App* bench = app.add_subcommand("bench", "time the sparse pass");
  CLI::App* ablate =
      app.add_subcommand("ablate", "cumulative optimization sweep");
  CLI::App* mask_stats =
      app.add_subcommand("mask-stats", "mask coverage and tile counts");
  for (CLI::App* cmd : {verify, macs, bench, ablate, mask_stats}) {
    add_common_flags(cmd, o);
  }
  for (CLI::App* cmd : {bench, ablate}) {
    cmd->add_option("--warmup", o.warmup, "untimed runs before sampling");
    cmd->add_option("--runs", o.runs, "timed runs");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (verify->parsed()) return cmd_verify(o);
    if (macs->parsed()) return cmd_macs(o);
    if (bench->parsed()) return cmd_bench(o);
    if (ablate->parsed()) return cmd_ablate(o);
    if (mask_stats->parsed()) return cmd_mask_stats(o);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
