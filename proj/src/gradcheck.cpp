#include "hofar/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "hofar/multiscale.hpp"
#include "hofar/training.hpp"

namespace hofar {

namespace {

ParamHandle handle_of(const std::string& name, Matrix& m) {
    m.set_requires_grad();
    return {name, {m.rows, m.cols}, m.data, m.grad};
}

ParamHandle handle_of(const std::string& name, Tensor& t) {
    t.set_requires_grad();
    return {name, {t.h, t.w, t.c}, t.data, t.grad};
}

// Values in +/-[0.25, 1.25]: bounded away from the relu kink so central
// differences never straddle it.
double kink_free(Rng& rng) {
    double u = 0.25 + rng.uniform();
    return rng.uniform() < 0.5 ? -u : u;
}

Tensor rand_tensor(int h, int w, int c, Rng& rng) {
    Tensor t = Tensor::zeros(h, w, c);
    for (double& v : *t.data) v = kink_free(rng);
    return t;
}

Matrix rand_matrix(int r, int c, Rng& rng) {
    Matrix m = Matrix::zeros(r, c);
    for (double& v : *m.data) v = kink_free(rng);
    return m;
}

struct Check {
    std::string name;
    double tol;
    LossBuilder loss;
    std::vector<ParamHandle> params;
};

Tensor quad(const Tensor& y) { return sum(hadamard(y, y)); }
Tensor quad(const Matrix& y) { return sum(hadamard(y, y)); }

void add_elementwise_checks(std::vector<Check>& out, Rng& rng) {
    {
        Tensor a = rand_tensor(2, 3, 2, rng), b = rand_tensor(2, 3, 2, rng);
        std::vector<ParamHandle> p{handle_of("a", a), handle_of("b", b)};
        out.push_back({"add", 1e-4, [a, b]() { return quad(add(a, b)); }, p});
    }
    {
        Tensor a = rand_tensor(2, 3, 2, rng), b = rand_tensor(2, 3, 2, rng);
        std::vector<ParamHandle> p{handle_of("a", a), handle_of("b", b)};
        out.push_back({"sub", 1e-4, [a, b]() { return quad(sub(a, b)); }, p});
    }
    {
        Tensor a = rand_tensor(2, 3, 2, rng), b = rand_tensor(2, 3, 2, rng);
        std::vector<ParamHandle> p{handle_of("a", a), handle_of("b", b)};
        out.push_back({"hadamard", 1e-4, [a, b]() { return quad(hadamard(a, b)); }, p});
    }
    {
        Tensor a = rand_tensor(2, 3, 2, rng);
        std::vector<ParamHandle> p{handle_of("a", a)};
        out.push_back({"exp", 1e-4, [a]() { return quad(exp(a)); }, p});
    }
    {
        Tensor a = rand_tensor(2, 3, 2, rng);
        std::vector<ParamHandle> p{handle_of("a", a)};
        out.push_back({"relu", 1e-4, [a]() { return quad(relu(a)); }, p});
    }
    {
        Tensor a = rand_tensor(2, 3, 2, rng);
        std::vector<ParamHandle> p{handle_of("a", a)};
        out.push_back({"scale", 1e-4, [a]() { return quad(scale(a, 1.7)); }, p});
    }
    {
        Tensor a = rand_tensor(2, 3, 2, rng);
        std::vector<ParamHandle> p{handle_of("a", a)};
        out.push_back({"add_scalar", 1e-4, [a]() { return quad(add_scalar(a, 0.9)); }, p});
    }
    {
        Tensor a = rand_tensor(2, 2, 3, rng);
        std::vector<ParamHandle> p{handle_of("a", a)};
        out.push_back({"sum", 1e-4, [a]() { return sum(a); }, p});
    }
}

void add_matrix_checks(std::vector<Check>& out, Rng& rng) {
    {
        Matrix a = rand_matrix(3, 4, rng), b = rand_matrix(4, 2, rng);
        std::vector<ParamHandle> p{handle_of("a", a), handle_of("b", b)};
        out.push_back({"matmul", 1e-4, [a, b]() { return quad(matmul(a, b)); }, p});
    }
    {
        Matrix a = rand_matrix(3, 2, rng), b = rand_matrix(3, 4, rng);
        std::vector<ParamHandle> p{handle_of("a", a), handle_of("b", b)};
        out.push_back({"transpose", 1e-4, [a, b]() { return quad(matmul(transpose(a), b)); }, p});
    }
    {
        Matrix a = rand_matrix(3, 4, rng), b = rand_matrix(2, 4, rng);
        std::vector<ParamHandle> p{handle_of("a", a), handle_of("b", b)};
        out.push_back({"matmul_bt", 1e-4, [a, b]() { return quad(matmul_bt(a, b)); }, p});
    }
    {
        Matrix x = rand_matrix(3, 2, rng), w = rand_matrix(2, 4, rng), b = rand_matrix(1, 4, rng);
        std::vector<ParamHandle> p{handle_of("x", x), handle_of("w", w), handle_of("b", b)};
        out.push_back({"linear", 1e-4, [x, w, b]() { return quad(linear(x, w, b)); }, p});
    }
    {
        Matrix z = rand_matrix(3, 4, rng);
        Matrix w = rand_matrix(3, 4, rng);  // fixed linear readout, no grad
        std::vector<ParamHandle> p{handle_of("z", z)};
        out.push_back({"softmax_rows", 1e-4,
                       [z, w]() { return sum(hadamard(softmax_rows(z), w)); }, p});
    }
    {
        Matrix x = rand_matrix(4, 3, rng), b = rand_matrix(1, 3, rng);
        std::vector<ParamHandle> p{handle_of("x", x), handle_of("b", b)};
        out.push_back({"add_bias", 1e-4, [x, b]() { return quad(add_bias(x, b)); }, p});
    }
    {
        Matrix a = rand_matrix(2, 3, rng), b = rand_matrix(1, 3, rng), c = rand_matrix(3, 3, rng);
        std::vector<ParamHandle> p{handle_of("a", a), handle_of("b", b), handle_of("c", c)};
        out.push_back({"concat_rows", 1e-4,
                       [a, b, c]() { return quad(concat_rows({a, b, c})); }, p});
    }
    {
        Matrix a = rand_matrix(5, 3, rng);
        std::vector<ParamHandle> p{handle_of("a", a)};
        out.push_back({"slice_rows", 1e-4, [a]() { return quad(slice_rows(a, 1, 3)); }, p});
    }
    {
        Tensor t = rand_tensor(2, 2, 4, rng);
        std::vector<ParamHandle> p{handle_of("t", t)};
        out.push_back({"slice_channels", 1e-4, [t]() { return quad(slice_channels(t, 1, 2)); }, p});
    }
    {
        Tensor t = rand_tensor(2, 3, 2, rng);
        Matrix w = rand_matrix(2, 2, rng);
        std::vector<ParamHandle> p{handle_of("t", t), handle_of("w", w)};
        out.push_back({"reshape_roundtrip", 1e-4, [t, w]() {
                           Matrix rows = matmul(reshape_to_matrix(t), w);
                           return quad(reshape_to_tensor(rows, t.h, t.w));
                       },
                       p});
    }
}

void add_structure_checks(std::vector<Check>& out, Rng& rng) {
    {
        Tensor t = rand_tensor(4, 4, 2, rng);
        std::vector<ParamHandle> p{handle_of("t", t)};
        out.push_back({"downsample", 1e-4, [t]() { return quad(downsample(t, 2)); }, p});
    }
    {
        Tensor t = rand_tensor(3, 3, 2, rng);
        std::vector<ParamHandle> p{handle_of("t", t)};
        out.push_back({"upsample_bicubic_r2", 1e-4, [t]() { return quad(upsample_bicubic(t, 2)); }, p});
    }
    {
        Tensor t = rand_tensor(2, 3, 1, rng);
        std::vector<ParamHandle> p{handle_of("t", t)};
        out.push_back({"upsample_bicubic_r3", 1e-4, [t]() { return quad(upsample_bicubic(t, 3)); }, p});
    }
    {
        Tensor t = rand_tensor(2, 2, 3, rng);
        std::vector<ParamHandle> p{handle_of("t", t)};
        out.push_back({"layer_norm", 1e-4, [t]() { return quad(layer_norm(t)); }, p});
    }
    {
        Matrix x = rand_matrix(4, 3, rng);
        AttnWeights w{rand_matrix(3, 3, rng), rand_matrix(3, 3, rng), rand_matrix(3, 3, rng)};
        std::vector<ParamHandle> p{handle_of("x", x), handle_of("wq", w.wq),
                                   handle_of("wk", w.wk), handle_of("wv", w.wv)};
        out.push_back({"attention", 1e-4, [x, w]() { return quad(attention(x, w)); }, p});
    }
    {
        Matrix x = rand_matrix(3, 4, rng);
        FfnWeights w{rand_matrix(4, 4, rng), rand_matrix(4, 4, rng),
                     rand_matrix(1, 4, rng), rand_matrix(1, 4, rng)};
        std::vector<ParamHandle> p{handle_of("x", x), handle_of("w1", w.w1),
                                   handle_of("w2", w.w2), handle_of("b1", w.b1),
                                   handle_of("b2", w.b2)};
        out.push_back({"ffn", 1e-4, [x, w]() { return quad(ffn(x, w)); }, p});
    }
    {
        const int c = 2;
        Tensor cond = rand_tensor(2, 2, c, rng), state = rand_tensor(2, 2, c, rng);
        FmBlockWeights w;
        w.mod_w = rand_matrix(c, 6 * c, rng);
        w.mod_b = rand_matrix(1, 6 * c, rng);
        w.attn.wq = rand_matrix(c, c, rng);
        w.attn.wk = rand_matrix(c, c, rng);
        w.attn.wv = rand_matrix(c, c, rng);
        w.out_w = rand_matrix(c, c, rng);
        w.out_b = rand_matrix(1, c, rng);
        std::vector<ParamHandle> p{
            handle_of("cond", cond),   handle_of("state", state),
            handle_of("mod_w", w.mod_w), handle_of("mod_b", w.mod_b),
            handle_of("wq", w.attn.wq), handle_of("wk", w.attn.wk),
            handle_of("wv", w.attn.wv), handle_of("out_w", w.out_w),
            handle_of("out_b", w.out_b)};
        out.push_back({"fm_block", 1e-4,
                       [cond, state, w]() { return quad(fm_block(cond, state, 0.4, w)); }, p});
    }
}

Check make_step_check(bool two_scale) {
    TrainConfig cfg;
    cfg.K = two_scale ? 2 : 1;
    cfg.a = 2;
    cfg.n = 2;
    cfg.c = 2;
    cfg.width = 4;
    cfg.m = 1;
    cfg.head_depth = 1;
    cfg.batch = 1;
    cfg.num_classes = 2;
    cfg.cfg_dropout = 0.0;
    Rng rng(777);
    auto model = std::make_shared<Model>(make_model(cfg, rng));
    std::vector<ParamHandle> params = param_handles(*model);
    // recondition: init biases are zero, which parks relu preactivations on
    // the kink; refill everything at a scale where differences stay one-sided
    Rng refill(4242);
    for (ParamHandle& p : params)
        for (double& v : *p.data) v = 0.3 * refill.normal();
    auto sched = std::make_shared<Schedule>(make_schedule(cfg));
    auto items = std::make_shared<std::vector<StepDraws>>(draw_step_inputs(cfg, rng));
    LossBuilder loss = [model, sched, items]() {
        return step_loss(*model, *sched, *items, nullptr);
    };
    return {two_scale ? "train_step_graph_two_scale" : "train_step_graph", 1e-3, loss, params};
}

}  // namespace

double fd_check(const LossBuilder& loss, std::vector<ParamHandle>& params, double eps) {
    tape().clear();
    for (ParamHandle& p : params) std::fill(p.grad->begin(), p.grad->end(), 0.0);
    Tensor l = loss();
    backward(l);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (ParamHandle& p : params) analytic.push_back(*p.grad);

    double worst = 0.0;
    NoGradGuard guard;
    for (size_t i = 0; i < params.size(); ++i) {
        std::vector<double>& data = *params[i].data;
        for (size_t k = 0; k < data.size(); ++k) {
            const double orig = data[k];
            data[k] = orig + eps;
            const double up = (*loss().data)[0];
            data[k] = orig - eps;
            const double dn = (*loss().data)[0];
            data[k] = orig;
            const double fd = (up - dn) / (2.0 * eps);
            const double err = std::fabs(analytic[i][k] - fd) /
                               std::max({1.0, std::fabs(analytic[i][k]), std::fabs(fd)});
            worst = std::max(worst, err);
        }
    }
    return worst;
}

GradCheckResult run_single_check(const std::string& name, const LossBuilder& loss,
                                 std::vector<ParamHandle> params, double tol, double eps) {
    GradCheckResult r;
    r.name = name;
    r.tolerance = tol;
    r.worst_rel_err = fd_check(loss, params, eps);
    r.pass = r.worst_rel_err < tol;
    return r;
}

std::vector<GradCheckResult> run_all_gradchecks() {
    Rng rng(20240915);
    std::vector<Check> checks;
    add_elementwise_checks(checks, rng);
    add_matrix_checks(checks, rng);
    add_structure_checks(checks, rng);
    checks.push_back(make_step_check(false));
    checks.push_back(make_step_check(true));

    std::vector<GradCheckResult> results;
    results.reserve(checks.size());
    for (Check& c : checks)
        results.push_back(run_single_check(c.name, c.loss, c.params, c.tol));
    return results;
}

}  // namespace hofar
