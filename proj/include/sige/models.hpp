#pragma once

#include <string>
#include <vector>

#include "sige/graph.hpp"

namespace sige {

// Built-in models with deterministic weights. Each is constructed from a
// fixed internal seed, so weights are identical across builds and platforms.
std::vector<std::string> toy_model_names();
ModelSpec toy_model(const std::string& name);

// Hash over every parameter tensor of the model, in layer order. Guards the
// generators against accidental drift.
uint64_t model_weight_hash(const ModelSpec& model);

}  // namespace sige
