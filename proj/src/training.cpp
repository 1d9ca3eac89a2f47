#include "hofar/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "hofar/multiscale.hpp"

namespace hofar {

namespace {

// Sum of squared differences as a scalar graph node.
Tensor sse(const Tensor& pred, const Tensor& target) {
    Tensor d = sub(pred, target);
    return sum(hadamard(d, d));
}

std::string fmt17(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

}  // namespace

Tensor synth_mean(int class_id, int n, int c) {
    if (class_id < 0) throw std::runtime_error("synth_mean: class_id must be >= 0");
    double cx = n * (1.0 + class_id % 3) / 4.0;
    double cy = n * (1.0 + (class_id / 3) % 3) / 4.0;
    double two_sigma_sq = 2.0 * (n / 4.0) * (n / 4.0);
    Tensor out = Tensor::zeros(n, n, c);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double dy = i + 0.5 - cy;
            double dx = j + 0.5 - cx;
            double v = 2.0 * std::exp(-(dx * dx + dy * dy) / two_sigma_sq);
            for (int ch = 0; ch < c; ++ch) out.at(i, j, ch) = v;
        }
    return out;
}

Tensor synth_sample(Rng& rng, int class_id, int n, int c) {
    Tensor out = synth_mean(class_id, n, c);
    for (double& v : *out.data) v = std::clamp(v + 0.1 * rng.normal(), -3.0, 3.0);
    return out;
}

AdamState make_adam_state(const std::vector<ParamHandle>& params) {
    AdamState st;
    st.m.reserve(params.size());
    st.v.reserve(params.size());
    for (const ParamHandle& p : params) {
        st.m.emplace_back(p.data->size(), 0.0);
        st.v.emplace_back(p.data->size(), 0.0);
    }
    return st;
}

void adamw_step(std::vector<ParamHandle>& params, AdamState& st, double lr,
                double beta1, double beta2, double weight_decay) {
    if (st.m.size() != params.size() || st.v.size() != params.size())
        throw std::runtime_error("adamw_step: state does not match parameter list");
    st.t += 1;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.t));
    for (size_t i = 0; i < params.size(); ++i) {
        std::vector<double>& theta = *params[i].data;
        const std::vector<double>& g = *params[i].grad;
        std::vector<double>& m = st.m[i];
        std::vector<double>& v = st.v[i];
        if (theta.size() != g.size() || theta.size() != m.size())
            throw std::runtime_error("adamw_step: size mismatch in " + params[i].name);
        for (size_t k = 0; k < theta.size(); ++k) {
            theta[k] *= 1.0 - lr * weight_decay;
            m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
            v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
            double mhat = m[k] / bc1;
            double vhat = v[k] / bc2;
            theta[k] -= lr * mhat / (std::sqrt(vhat) + st.eps);
        }
    }
}

std::vector<StepDraws> draw_step_inputs(const TrainConfig& cfg, Rng& rng) {
    PyramidConfig pyr_cfg{cfg.K, cfg.a};
    std::vector<StepDraws> items;
    items.reserve(static_cast<size_t>(cfg.batch));
    for (int b = 0; b < cfg.batch; ++b) {
        StepDraws d;
        d.class_id = rng.uniform_int(cfg.num_classes);
        d.drop = rng.uniform() < cfg.cfg_dropout;
        d.sample = synth_sample(rng, d.class_id, cfg.n, cfg.c);
        for (int i = 0; i < cfg.K; ++i) {
            int r = scale_factor(pyr_cfg, i);
            int e = cfg.n / r;
            Tensor f0 = Tensor::zeros(e, e, cfg.c);
            for (double& v : *f0.data) v = rng.normal();
            d.noise.push_back(std::move(f0));
            d.t.push_back(std::min(rng.uniform(), 1.0 - 1e-4));
        }
        items.push_back(std::move(d));
    }
    return items;
}

Tensor step_loss(Model& model, const Schedule& sched,
                 const std::vector<StepDraws>& items,
                 std::vector<double>* per_scale) {
    const TrainConfig& cfg = model.cfg;
    if (items.empty()) throw std::runtime_error("step_loss: empty batch");
    PyramidConfig pyr_cfg{cfg.K, cfg.a};
    std::vector<double> sums(cfg.K, 0.0);
    Tensor loss_acc;
    bool have_loss = false;

    for (const StepDraws& d : items) {
        TokenPyramid pyr = tokenize(d.sample, pyr_cfg);
        const Tensor& z_init = d.drop ? model.null_embed : model.stack.class_table[d.class_id];
        std::vector<Tensor> prior;
        for (int i = 0; i < cfg.K; ++i) {
            const Tensor& map = pyr.maps[i];
            TrajectoryPoint pt = make_point(sched, map, d.noise[i], d.t[i]);
            Matrix z = build_sequence(z_init, prior, cfg.a);
            Tensor cond = forward_scale(model.stack, z, map.h, map.w);
            Tensor p1 = head_forward(model.first, cond, pt.noisy, d.t[i]);
            Tensor p2 = head_forward(model.second, cond, pt.noisy, d.t[i]);
            Tensor l = add(sse(p1, pt.first), sse(p2, pt.second));
            sums[i] += (*l.data)[0];
            loss_acc = have_loss ? add(loss_acc, l) : l;
            have_loss = true;
            if (i + 1 < cfg.K) prior.push_back(embed_map(model.stack, map));
        }
    }

    double inv_b = 1.0 / static_cast<double>(items.size());
    if (items.size() > 1) loss_acc = scale(loss_acc, inv_b);
    if (per_scale) {
        per_scale->assign(sums.begin(), sums.end());
        for (double& v : *per_scale) v *= inv_b;
    }
    return loss_acc;
}

LossRecord train_step(Model& model, const Schedule& sched,
                      std::vector<ParamHandle>& params, AdamState& adam,
                      Rng& rng, int step_index) {
    const TrainConfig& cfg = model.cfg;
    for (ParamHandle& p : params) std::fill(p.grad->begin(), p.grad->end(), 0.0);

    std::vector<StepDraws> items = draw_step_inputs(cfg, rng);
    LossRecord rec;
    rec.step = step_index;
    Tensor loss = step_loss(model, sched, items, &rec.per_scale);
    double loss_value = (*loss.data)[0];
    if (!std::isfinite(loss_value))
        throw std::runtime_error("train_step: non-finite loss at step " +
                                 std::to_string(step_index));
    backward(loss);
    adamw_step(params, adam, cfg.lr, cfg.beta1, cfg.beta2, cfg.weight_decay);

    rec.total = 0.0;
    for (double v : rec.per_scale) rec.total += v;
    return rec;
}

TrainResult train(const TrainConfig& cfg) {
    validate_config(cfg);
    Rng rng(cfg.seed);
    TrainResult result{make_model(cfg, rng), {}};
    std::vector<ParamHandle> params = param_handles(result.model);
    AdamState adam = make_adam_state(params);
    Schedule sched = make_schedule(cfg);
    result.records.reserve(static_cast<size_t>(cfg.steps));
    for (int s = 1; s <= cfg.steps; ++s)
        result.records.push_back(train_step(result.model, sched, params, adam, rng, s));
    return result;
}

std::string loss_csv(const std::vector<LossRecord>& records, int K) {
    std::ostringstream out;
    out << "step";
    for (int i = 0; i < K; ++i) out << ",scale_" << i;
    out << ",total\n";
    for (const LossRecord& r : records) {
        if (static_cast<int>(r.per_scale.size()) != K)
            throw std::runtime_error("loss_csv: record width does not match K");
        out << r.step;
        for (double v : r.per_scale) out << ',' << fmt17(v);
        out << ',' << fmt17(r.total) << '\n';
    }
    return out.str();
}

void write_loss_csv(const std::string& path, const std::vector<LossRecord>& records, int K) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("io: cannot open '" + path + "' for writing");
    out << loss_csv(records, K);
    if (!out) throw std::runtime_error("io: write failed for '" + path + "'");
}

}  // namespace hofar
