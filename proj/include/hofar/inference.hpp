#pragma once

#include <cstdint>
#include <functional>
#include <utility>

#include "hofar/model.hpp"

// Reverse-time generation: quadratic Taylor stepping of the learned flow,
// scale by scale, with optional classifier-free guidance. No gradients are
// recorded anywhere in this path.

namespace hofar {

struct SampleConfig {
    int class_id = 0;
    int flow_steps = 25;
    double cfg_scale = 4.3;  // exactly 1.0 disables guidance
    std::uint64_t seed = 1;
    HeadOrder order = HeadOrder::second;
};

// x + v*dt + 0.5*s*dt^2, elementwise; shapes must agree.
Tensor taylor_step(const Tensor& x, const Tensor& v, const Tensor& s, double dt);

// Velocity and acceleration of the flow at (x, t). The second component is
// ignored (and may be empty) when integrating at first order.
using FieldFn = std::function<std::pair<Tensor, Tensor>(const Tensor&, double)>;

// Uniform left-endpoint steps on [t0, t1]: the field is queried at the left
// edge of each interval. Second order applies the quadratic Taylor update,
// first order the Euler update.
Tensor integrate_flow(Tensor x, const FieldFn& field, double t0, double t1,
                      int steps, HeadOrder order);

// One scale: fresh noise from `rng`, the transformer condition computed once
// from the class (and, when guiding, null) sequence, then flow_steps Taylor
// updates over [0, 1]. Guided fields: null + cfg_scale * (class - null).
Tensor sample_scale(const Model& model, const std::vector<Tensor>& prior_streams,
                    int h_i, int w_i, const SampleConfig& sc, Rng& rng);

// Full pyramid pass, coarse to fine. Each scale's prefix embeds the model's
// own earlier samples; noise is redrawn per scale from a seed-pinned Rng.
// Returns the finest map, n x n x c.
Tensor generate(const Model& model, const SampleConfig& sc);

}  // namespace hofar
