#pragma once

#include <memory>
#include <string>
#include <vector>

#include "hofar/config.hpp"
#include "hofar/flow_matching.hpp"
#include "hofar/rng.hpp"
#include "hofar/transformer.hpp"

// Full generative model: the next-scale transformer stack plus one
// velocity head and one acceleration head, and a learned null class
// embedding for guidance dropout.

namespace hofar {

struct Model {
    TrainConfig cfg;
    ArStack stack;
    FmHead first;      // predicts d/dt of the interpolation path
    FmHead second;     // predicts d^2/dt^2 of the interpolation path
    Tensor null_embed;  // coarsest grid x width, replaces class rows when dropped
};

// Initialization draws from `rng` in registry order (stack, null_embed,
// first head, second head), so a seed pins every weight.
Model make_model(const TrainConfig& cfg, Rng& rng);

// Stable name + shape + storage for one parameter; used by the optimizer,
// gradient checks, and checkpoints. Enumeration order is fixed.
struct ParamHandle {
    std::string name;
    std::vector<int> dims;
    std::shared_ptr<std::vector<double>> data;
    std::shared_ptr<std::vector<double>> grad;
};

std::vector<ParamHandle> param_handles(Model& model);

}  // namespace hofar
