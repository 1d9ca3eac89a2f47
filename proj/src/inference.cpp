#include "hofar/inference.hpp"

#include <cmath>
#include <stdexcept>

#include "hofar/multiscale.hpp"

namespace hofar {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.h != b.h || a.w != b.w || a.c != b.c) {
        throw std::runtime_error(std::string(op) + ": shape mismatch");
    }
}

void validate_sample_config(const Model& model, const SampleConfig& sc) {
    if (sc.class_id < 0 || sc.class_id >= model.cfg.num_classes)
        throw std::runtime_error("sample: class_id out of range");
    if (sc.flow_steps < 1) throw std::runtime_error("sample: flow_steps must be >= 1");
    if (!std::isfinite(sc.cfg_scale)) throw std::runtime_error("sample: cfg_scale must be finite");
}

}  // namespace

Tensor taylor_step(const Tensor& x, const Tensor& v, const Tensor& s, double dt) {
    check_same_shape(x, v, "taylor_step");
    check_same_shape(x, s, "taylor_step");
    return add(add(x, scale(v, dt)), scale(s, 0.5 * dt * dt));
}

Tensor integrate_flow(Tensor x, const FieldFn& field, double t0, double t1,
                      int steps, HeadOrder order) {
    if (steps < 1) throw std::runtime_error("integrate_flow: steps must be >= 1");
    NoGradGuard guard;
    const double dt = (t1 - t0) / steps;
    for (int k = 0; k < steps; ++k) {
        const double t = t0 + k * dt;
        std::pair<Tensor, Tensor> vs = field(x, t);
        if (order == HeadOrder::second) {
            x = taylor_step(x, vs.first, vs.second, dt);
        } else {
            x = add(x, scale(vs.first, dt));
        }
    }
    return x;
}

Tensor sample_scale(const Model& model, const std::vector<Tensor>& prior_streams,
                    int h_i, int w_i, const SampleConfig& sc, Rng& rng) {
    validate_sample_config(model, sc);
    NoGradGuard guard;

    Tensor x = Tensor::zeros(h_i, w_i, model.cfg.c);
    for (double& v : *x.data) v = rng.normal();

    const bool guided = sc.cfg_scale != 1.0;
    Matrix z = build_sequence(model.stack.class_table[sc.class_id], prior_streams, model.cfg.a);
    Tensor cond = forward_scale(model.stack, z, h_i, w_i);
    Tensor cond_null;
    if (guided) {
        Matrix zn = build_sequence(model.null_embed, prior_streams, model.cfg.a);
        cond_null = forward_scale(model.stack, zn, h_i, w_i);
    }

    auto guide = [&](const Tensor& on, const Tensor& off) {
        return add(off, scale(sub(on, off), sc.cfg_scale));
    };
    FieldFn field = [&](const Tensor& state, double t) -> std::pair<Tensor, Tensor> {
        Tensor v = head_forward(model.first, cond, state, t);
        Tensor s;
        if (sc.order == HeadOrder::second) s = head_forward(model.second, cond, state, t);
        if (guided) {
            v = guide(v, head_forward(model.first, cond_null, state, t));
            if (sc.order == HeadOrder::second)
                s = guide(s, head_forward(model.second, cond_null, state, t));
        }
        return {v, s};
    };
    return integrate_flow(std::move(x), field, 0.0, 1.0, sc.flow_steps, sc.order);
}

Tensor generate(const Model& model, const SampleConfig& sc) {
    validate_sample_config(model, sc);
    NoGradGuard guard;
    Rng rng(sc.seed);
    PyramidConfig pyr{model.cfg.K, model.cfg.a};
    std::vector<Tensor> prior;
    Tensor last;
    for (int i = 0; i < model.cfg.K; ++i) {
        const int e = model.cfg.n / scale_factor(pyr, i);
        last = sample_scale(model, prior, e, e, sc, rng);
        if (i + 1 < model.cfg.K) prior.push_back(embed_map(model.stack, last));
    }
    return last;
}

}  // namespace hofar
