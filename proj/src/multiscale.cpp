#include "hofar/multiscale.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hofar {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

void check_output(const Tensor& out) {
    for (double v : *out.data) {
        if (!std::isfinite(v)) fail("multiscale: non-finite output");
    }
}

// Whether the op should record a backward rule; if so, allocates the output
// grad buffer first so closures can capture the finished output.
bool wants_backward(const Tensor& x, Tensor& out) {
    check_output(out);
    if (!grad_enabled() || !x.requires_grad) return false;
    out.set_requires_grad();
    return true;
}

// Keys cubic convolution kernel with a = -0.5.
double keys_weight(double x) {
    x = std::abs(x);
    if (x <= 1.0) return (1.5 * x - 2.5) * x * x + 1.0;
    if (x < 2.0) return ((-0.5 * x + 2.5) * x - 4.0) * x + 2.0;
    return 0.0;
}

struct AxisTaps {
    int index[4];      // clamped source indices
    double weight[4];  // kernel weights, summing to 1
};

std::vector<AxisTaps> axis_taps(int out_len, int in_len, int r) {
    std::vector<AxisTaps> taps(out_len);
    for (int i = 0; i < out_len; ++i) {
        const int base = i / r;
        const double phase = static_cast<double>(i % r) / r;
        for (int s = -1; s <= 2; ++s) {
            taps[i].index[s + 1] = std::clamp(base + s, 0, in_len - 1);
            taps[i].weight[s + 1] = keys_weight(static_cast<double>(s) - phase);
        }
    }
    return taps;
}

std::size_t flat(const Tensor& t, int i, int j, int k) {
    return (static_cast<std::size_t>(i) * t.w + j) * t.c + k;
}

}  // namespace

int scale_factor(const PyramidConfig& cfg, int i) {
    if (cfg.K < 1 || cfg.a < 1) fail("scale_factor: invalid pyramid config");
    if (i < 0 || i >= cfg.K) fail("scale_factor: scale index out of range");
    int r = 1;
    for (int p = 0; p < cfg.K - 1 - i; ++p) r *= cfg.a;
    return r;
}

Tensor downsample(const Tensor& x, int r) {
    if (r < 1) fail("downsample: factor must be >= 1");
    if (x.h % r != 0 || x.w % r != 0) fail("downsample: dimensions not divisible by factor");
    const int oh = x.h / r, ow = x.w / r;
    Tensor out = Tensor::zeros(oh, ow, x.c);
    const double inv = 1.0 / (static_cast<double>(r) * r);
    for (int i = 0; i < oh; ++i) {
        for (int j = 0; j < ow; ++j) {
            for (int k = 0; k < x.c; ++k) {
                double acc = 0.0;
                for (int di = 0; di < r; ++di) {
                    for (int dj = 0; dj < r; ++dj) acc += x.at(i * r + di, j * r + dj, k);
                }
                out.at(i, j, k) = acc * inv;
            }
        }
    }
    if (wants_backward(x, out)) {
        tape().record([x, out, r, inv]() {
            for (int i = 0; i < out.h; ++i) {
                for (int j = 0; j < out.w; ++j) {
                    for (int k = 0; k < out.c; ++k) {
                        const double g = (*out.grad)[flat(out, i, j, k)] * inv;
                        for (int di = 0; di < r; ++di) {
                            for (int dj = 0; dj < r; ++dj) {
                                (*x.grad)[flat(x, i * r + di, j * r + dj, k)] += g;
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

TokenPyramid tokenize(const Tensor& x, const PyramidConfig& cfg) {
    TokenPyramid py;
    py.maps.reserve(cfg.K);
    for (int i = 0; i < cfg.K; ++i) py.maps.push_back(downsample(x, scale_factor(cfg, i)));
    return py;
}

Tensor upsample_bicubic(const Tensor& x, int r) {
    if (r < 1) fail("upsample_bicubic: factor must be >= 1");
    const int oh = x.h * r, ow = x.w * r;
    const std::vector<AxisTaps> rows = axis_taps(oh, x.h, r);
    const std::vector<AxisTaps> cols = axis_taps(ow, x.w, r);
    Tensor out = Tensor::zeros(oh, ow, x.c);
    for (int i = 0; i < oh; ++i) {
        for (int j = 0; j < ow; ++j) {
            for (int k = 0; k < x.c; ++k) {
                double acc = 0.0;
                for (int s = 0; s < 4; ++s) {
                    for (int t = 0; t < 4; ++t) {
                        acc += rows[i].weight[s] * cols[j].weight[t] *
                               x.at(rows[i].index[s], cols[j].index[t], k);
                    }
                }
                out.at(i, j, k) = acc;
            }
        }
    }
    if (wants_backward(x, out)) {
        tape().record([x, out, rows, cols]() {
            for (int i = 0; i < out.h; ++i) {
                for (int j = 0; j < out.w; ++j) {
                    for (int k = 0; k < out.c; ++k) {
                        const double g = (*out.grad)[flat(out, i, j, k)];
                        for (int s = 0; s < 4; ++s) {
                            for (int t = 0; t < 4; ++t) {
                                (*x.grad)[flat(x, rows[i].index[s], cols[j].index[t], k)] +=
                                    g * rows[i].weight[s] * cols[j].weight[t];
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

}  // namespace hofar
