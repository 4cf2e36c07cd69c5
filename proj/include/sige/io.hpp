#pragma once

#include <string>

#include "sige/graph.hpp"
#include "sige/kernels.hpp"
#include "sige/mask.hpp"
#include "sige/tensor.hpp"

namespace sige {

// Tensor container: magic "SIGT", u32 version (1), u32 dims n/c/h/w, then
// n*c*h*w float32 values, all little-endian.
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

// Masks travel as plain PBM (P1).
void save_mask_pbm(const std::string& path, const DifferenceMask& m);
DifferenceMask load_mask_pbm(const std::string& path);

Tensor mask_to_tensor(const DifferenceMask& m);
DifferenceMask tensor_to_mask(const Tensor& t, float threshold = 0.5f);

// Model description as json (format "sige_model_v1") with weight payloads in
// SIGT files referenced by relative path. save_model writes <dir>/model.json
// plus a weights/ subdirectory; load_model takes the json path.
void save_model(const ModelSpec& model, const std::string& dir);
ModelSpec load_model(const std::string& json_path);

// Gathered blocks as a SIGT payload (count x channels x bh x bw) plus a json
// sidecar carrying the block geometry and origin indices.
void save_block_stack(const std::string& path_prefix, const BlockStack& s);
BlockStack load_block_stack(const std::string& path_prefix);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace sige
