#include "hofar/flow_matching.hpp"

#include <cmath>
#include <stdexcept>

namespace hofar {

namespace {

Matrix normal_matrix(int rows, int cols, double stddev, Rng& rng) {
    Matrix m = Matrix::zeros(rows, cols);
    for (double& v : *m.data) v = stddev * rng.normal();
    m.set_requires_grad();
    return m;
}

Matrix zero_bias(int cols) {
    Matrix b = Matrix::zeros(1, cols);
    b.set_requires_grad();
    return b;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.h != b.h || a.w != b.w || a.c != b.c) {
        throw std::runtime_error(std::string(op) + ": shape mismatch");
    }
}

}  // namespace

FmHead make_fm_head(HeadOrder order, int depth, int channels, Rng& rng) {
    if (depth < 0 || channels < 1) throw std::runtime_error("make_fm_head: invalid dimensions");
    FmHead head;
    head.order = order;
    head.blocks.reserve(depth);
    for (int i = 0; i < depth; ++i) {
        FmBlockWeights w;
        w.mod_w = normal_matrix(channels, 6 * channels, 0.02, rng);
        w.mod_b = zero_bias(6 * channels);
        w.attn.wq = normal_matrix(channels, channels, 0.02, rng);
        w.attn.wk = normal_matrix(channels, channels, 0.02, rng);
        w.attn.wv = normal_matrix(channels, channels, 0.02, rng);
        w.out_w = normal_matrix(channels, channels, 0.02, rng);
        w.out_b = zero_bias(channels);
        head.blocks.push_back(std::move(w));
    }
    return head;
}

Tensor layer_norm(const Tensor& x, LnEps eps) {
    if (eps.eps <= 0.0) throw std::runtime_error("layer_norm: eps must be positive");
    const int c = x.c;
    const std::size_t positions = static_cast<std::size_t>(x.h) * x.w;
    Tensor out = Tensor::zeros(x.h, x.w, x.c);
    // Per-position statistics are kept for the backward rule.
    auto mus = std::make_shared<std::vector<double>>(positions);
    auto sigmas = std::make_shared<std::vector<double>>(positions);
    for (std::size_t p = 0; p < positions; ++p) {
        const double* row = &(*x.data)[p * c];
        double mu = 0.0;
        for (int k = 0; k < c; ++k) mu += row[k];
        mu /= c;
        double var = 0.0;
        for (int k = 0; k < c; ++k) var += (row[k] - mu) * (row[k] - mu);
        var /= c;
        const double sigma = std::sqrt(var);
        (*mus)[p] = mu;
        (*sigmas)[p] = sigma;
        const double inv = 1.0 / (sigma + eps.eps);
        double* orow = &(*out.data)[p * c];
        for (int k = 0; k < c; ++k) orow[k] = (row[k] - mu) * inv;
    }
    for (double v : *out.data) {
        if (!std::isfinite(v)) throw std::runtime_error("layer_norm: non-finite output");
    }
    if (grad_enabled() && x.requires_grad) {
        out.set_requires_grad();
        const double e = eps.eps;
        tape().record([x, out, mus, sigmas, c, positions, e]() {
            for (std::size_t p = 0; p < positions; ++p) {
                const double mu = (*mus)[p];
                const double sigma = (*sigmas)[p];
                const double s = sigma + e;
                const double* row = &(*x.data)[p * c];
                const double* g = &(*out.grad)[p * c];
                double* dx = &(*x.grad)[p * c];
                double gm = 0.0, gu = 0.0;
                for (int k = 0; k < c; ++k) {
                    gm += g[k];
                    gu += g[k] * (row[k] - mu);
                }
                gm /= c;
                gu /= c;
                // d/dx_k of (x - mu)/(sigma + eps); the sigma term vanishes
                // on constant rows (sigma = 0), where the forward output is
                // identically zero.
                const double sig_term = sigma > 0.0 ? gu / (sigma * s * s) : 0.0;
                for (int k = 0; k < c; ++k) {
                    dx[k] += (g[k] - gm) / s - (row[k] - mu) * sig_term;
                }
            }
        });
    }
    return out;
}

Tensor mlp(const Tensor& x, const Matrix& w, const Matrix& b) {
    if (x.c != w.rows) throw std::runtime_error("mlp: channel width mismatch");
    Matrix rows = linear(reshape_to_matrix(x), w, b);
    return reshape_to_tensor(rows, x.h, x.w);
}

Tensor fm_block(const Tensor& cond, const Tensor& state, double t, const FmBlockWeights& w) {
    check_same_shape(cond, state, "fm_block");
    const int c = state.c;
    Tensor mod = mlp(add_scalar(cond, t), w.mod_w, w.mod_b);
    const Tensor a1 = slice_channels(mod, 0 * c, c);
    const Tensor a2 = slice_channels(mod, 1 * c, c);
    const Tensor b1 = slice_channels(mod, 2 * c, c);
    const Tensor b2 = slice_channels(mod, 3 * c, c);
    const Tensor g1 = slice_channels(mod, 4 * c, c);
    const Tensor g2 = slice_channels(mod, 5 * c, c);

    Tensor attn_in = add(hadamard(g1, layer_norm(state)), b1);
    Matrix attn_out = attention(reshape_to_matrix(attn_in), w.attn);
    Tensor fprime = hadamard(reshape_to_tensor(attn_out, state.h, state.w), a1);

    Tensor mlp_in = add(hadamard(g2, layer_norm(fprime)), b2);
    return hadamard(mlp(mlp_in, w.out_w, w.out_b), a2);
}

Tensor head_forward(const FmHead& head, const Tensor& cond, const Tensor& state, double t) {
    Tensor cur = state;
    for (const FmBlockWeights& w : head.blocks) cur = fm_block(cond, cur, t, w);
    return cur;
}

}  // namespace hofar
