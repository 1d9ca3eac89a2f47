#include "hofar/tensor.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace hofar {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

void check_finite(const std::vector<double>& v, const char* op) {
    // Branch-free scan so the loop vectorizes; |x| <= DBL_MAX is false for
    // NaN and both infinities.
    bool ok = true;
    for (double x : v) ok &= (std::fabs(x) <= std::numeric_limits<double>::max());
    if (!ok) fail(std::string(op) + ": non-finite output");
}

std::shared_ptr<std::vector<double>> alloc(std::size_t n, double fill = 0.0) {
    return std::make_shared<std::vector<double>>(n, fill);
}

thread_local Tape g_tape;
thread_local bool g_grad_enabled = true;

}  // namespace

// ---------------------------------------------------------------------------
// Tensor / Matrix basics
// ---------------------------------------------------------------------------

Tensor Tensor::zeros(int h, int w, int c, bool requires_grad) {
    if (h <= 0 || w <= 0 || c <= 0) fail("Tensor: dimensions must be positive");
    Tensor t;
    t.h = h;
    t.w = w;
    t.c = c;
    t.data = alloc(t.size());
    if (requires_grad) t.set_requires_grad();
    return t;
}

Tensor Tensor::from(int h, int w, int c, std::vector<double> values, bool requires_grad) {
    Tensor t = zeros(h, w, c, requires_grad);
    if (values.size() != t.size()) fail("Tensor::from: value count does not match shape");
    *t.data = std::move(values);
    check_finite(*t.data, "Tensor::from");
    return t;
}

Tensor Tensor::full(int h, int w, int c, double value) {
    Tensor t = zeros(h, w, c);
    for (double& x : *t.data) x = value;
    return t;
}

double Tensor::at(int i, int j, int k) const {
    return (*data)[(static_cast<std::size_t>(i) * w + j) * c + k];
}

double& Tensor::at(int i, int j, int k) {
    return (*data)[(static_cast<std::size_t>(i) * w + j) * c + k];
}

void Tensor::set_requires_grad() {
    requires_grad = true;
    if (!grad) grad = alloc(size());
}

void Tensor::zero_grad() {
    if (grad) std::fill(grad->begin(), grad->end(), 0.0);
}

Matrix Matrix::zeros(int rows, int cols, bool requires_grad) {
    if (rows <= 0 || cols <= 0) fail("Matrix: dimensions must be positive");
    Matrix m;
    m.rows = rows;
    m.cols = cols;
    m.data = alloc(m.size());
    if (requires_grad) m.set_requires_grad();
    return m;
}

Matrix Matrix::from(int rows, int cols, std::vector<double> values, bool requires_grad) {
    Matrix m = zeros(rows, cols, requires_grad);
    if (values.size() != m.size()) fail("Matrix::from: value count does not match shape");
    *m.data = std::move(values);
    check_finite(*m.data, "Matrix::from");
    return m;
}

Matrix Matrix::identity(int n) {
    Matrix m = zeros(n, n);
    for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

double Matrix::at(int i, int j) const {
    return (*data)[static_cast<std::size_t>(i) * cols + j];
}

double& Matrix::at(int i, int j) {
    return (*data)[static_cast<std::size_t>(i) * cols + j];
}

void Matrix::set_requires_grad() {
    requires_grad = true;
    if (!grad) grad = alloc(size());
}

void Matrix::zero_grad() {
    if (grad) std::fill(grad->begin(), grad->end(), 0.0);
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

void Tape::record(std::function<void()> backward_rule) {
    rules_.push_back(std::move(backward_rule));
}

void Tape::run_backward_and_clear() {
    for (auto it = rules_.rbegin(); it != rules_.rend(); ++it) (*it)();
    rules_.clear();
}

Tape& tape() { return g_tape; }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void backward(Tensor& loss) {
    if (loss.size() != 1) fail("backward: loss must be a 1x1x1 scalar");
    if (!loss.requires_grad || !loss.grad) {
        fail("backward: loss is detached from the tape");
    }
    (*loss.grad)[0] = 1.0;
    g_tape.run_backward_and_clear();
}

// ---------------------------------------------------------------------------
// Shared helpers for op construction
// ---------------------------------------------------------------------------

namespace {

bool same_shape(const Tensor& a, const Tensor& b) {
    return a.h == b.h && a.w == b.w && a.c == b.c;
}

bool same_shape(const Matrix& a, const Matrix& b) {
    return a.rows == b.rows && a.cols == b.cols;
}

Tensor like(const Tensor& x) { return Tensor::zeros(x.h, x.w, x.c); }
Matrix like(const Matrix& x) { return Matrix::zeros(x.rows, x.cols); }

// Marks the output differentiable and records the backward rule when any
// input tracks gradients and recording is enabled.
template <class Out, class Fn>
void finish(Out& out, bool any_input_grad, const char* op, Fn&& make_rule) {
    check_finite(*out.data, op);
    if (!g_grad_enabled || !any_input_grad) return;
    out.set_requires_grad();
    g_tape.record(make_rule());
}

template <class V>
V ew_binary(const V& a, const V& b, const char* op, double (*fwd)(double, double),
            void (*bwd)(double dy, double av, double bv, double& da, double& db)) {
    if (!same_shape(a, b)) fail(std::string(op) + ": shape mismatch");
    V out = like(a);
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = fwd((*a.data)[i], (*b.data)[i]);
    finish(out, a.requires_grad || b.requires_grad, op, [&] {
        return [a, b, out, bwd]() {
            const std::size_t n2 = out.size();
            for (std::size_t i = 0; i < n2; ++i) {
                double da = 0.0, db = 0.0;
                bwd((*out.grad)[i], (*a.data)[i], (*b.data)[i], da, db);
                if (a.requires_grad) (*a.grad)[i] += da;
                if (b.requires_grad) (*b.grad)[i] += db;
            }
        };
    });
    return out;
}

template <class V>
V ew_unary(const V& x, const char* op, double (*fwd)(double),
           double (*dfdx)(double xv, double yv)) {
    V out = like(x);
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = fwd((*x.data)[i]);
    finish(out, x.requires_grad, op, [&] {
        return [x, out, dfdx]() {
            const std::size_t n2 = out.size();
            for (std::size_t i = 0; i < n2; ++i) {
                (*x.grad)[i] += (*out.grad)[i] * dfdx((*x.data)[i], (*out.data)[i]);
            }
        };
    });
    return out;
}

template <class V>
V ew_affine(const V& x, double mul, double shift, const char* op) {
    V out = like(x);
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = mul * (*x.data)[i] + shift;
    finish(out, x.requires_grad, op, [&] {
        return [x, out, mul]() {
            const std::size_t n2 = out.size();
            for (std::size_t i = 0; i < n2; ++i) (*x.grad)[i] += mul * (*out.grad)[i];
        };
    });
    return out;
}

double fwd_add(double a, double b) { return a + b; }
double fwd_sub(double a, double b) { return a - b; }
double fwd_mul(double a, double b) { return a * b; }

void bwd_add(double dy, double, double, double& da, double& db) {
    da = dy;
    db = dy;
}
void bwd_sub(double dy, double, double, double& da, double& db) {
    da = dy;
    db = -dy;
}
void bwd_mul(double dy, double av, double bv, double& da, double& db) {
    da = dy * bv;
    db = dy * av;
}

double fwd_exp(double x) { return std::exp(x); }
double dfdx_exp(double, double y) { return y; }
double fwd_relu(double x) { return x > 0.0 ? x : 0.0; }
double dfdx_relu(double x, double) { return x > 0.0 ? 1.0 : 0.0; }

}  // namespace

// ---------------------------------------------------------------------------
// Reshapes (storage-sharing views)
// ---------------------------------------------------------------------------

Matrix reshape_to_matrix(const Tensor& t) {
    Matrix m;
    m.rows = t.h * t.w;
    m.cols = t.c;
    m.data = t.data;
    m.grad = t.grad;
    m.requires_grad = t.requires_grad;
    return m;
}

Tensor reshape_to_tensor(const Matrix& m, int h, int w) {
    if (h * w != m.rows) fail("reshape_to_tensor: h*w does not match row count");
    Tensor t;
    t.h = h;
    t.w = w;
    t.c = m.cols;
    t.data = m.data;
    t.grad = m.grad;
    t.requires_grad = m.requires_grad;
    return t;
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) { return ew_binary(a, b, "add", fwd_add, bwd_add); }
Tensor sub(const Tensor& a, const Tensor& b) { return ew_binary(a, b, "sub", fwd_sub, bwd_sub); }
Tensor hadamard(const Tensor& a, const Tensor& b) {
    return ew_binary(a, b, "hadamard", fwd_mul, bwd_mul);
}
Tensor exp(const Tensor& x) { return ew_unary(x, "exp", fwd_exp, dfdx_exp); }
Tensor relu(const Tensor& x) { return ew_unary(x, "relu", fwd_relu, dfdx_relu); }
Tensor scale(const Tensor& x, double s) { return ew_affine(x, s, 0.0, "scale"); }
Tensor add_scalar(const Tensor& x, double s) { return ew_affine(x, 1.0, s, "add_scalar"); }

Matrix add(const Matrix& a, const Matrix& b) { return ew_binary(a, b, "add", fwd_add, bwd_add); }
Matrix sub(const Matrix& a, const Matrix& b) { return ew_binary(a, b, "sub", fwd_sub, bwd_sub); }
Matrix hadamard(const Matrix& a, const Matrix& b) {
    return ew_binary(a, b, "hadamard", fwd_mul, bwd_mul);
}
Matrix exp(const Matrix& x) { return ew_unary(x, "exp", fwd_exp, dfdx_exp); }
Matrix relu(const Matrix& x) { return ew_unary(x, "relu", fwd_relu, dfdx_relu); }
Matrix scale(const Matrix& x, double s) { return ew_affine(x, s, 0.0, "scale"); }
Matrix add_scalar(const Matrix& x, double s) { return ew_affine(x, 1.0, s, "add_scalar"); }

// ---------------------------------------------------------------------------
// Matrix ops
// ---------------------------------------------------------------------------

namespace {

// out(p x r) += a(p x q) * b(q x r), plain i-k-j loops.
void gemm_acc(const std::vector<double>& a, const std::vector<double>& b,
              std::vector<double>& out, int p, int q, int r, bool a_t, bool b_t) {
    for (int i = 0; i < p; ++i) {
        for (int k = 0; k < q; ++k) {
            const double av = a_t ? a[static_cast<std::size_t>(k) * p + i]
                                  : a[static_cast<std::size_t>(i) * q + k];
            if (av == 0.0) continue;
            const double* brow = b_t ? nullptr : &b[static_cast<std::size_t>(k) * r];
            double* orow = &out[static_cast<std::size_t>(i) * r];
            if (b_t) {
                for (int j = 0; j < r; ++j) orow[j] += av * b[static_cast<std::size_t>(j) * q + k];
            } else {
                for (int j = 0; j < r; ++j) orow[j] += av * brow[j];
            }
        }
    }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) fail("matmul: inner dimensions disagree");
    Matrix out = Matrix::zeros(a.rows, b.cols);
    gemm_acc(*a.data, *b.data, *out.data, a.rows, a.cols, b.cols, false, false);
    finish(out, a.requires_grad || b.requires_grad, "matmul", [&] {
        return [a, b, out]() {
            // dA = dY * B^T, dB = A^T * dY
            if (a.requires_grad) {
                gemm_acc(*out.grad, *b.data, *a.grad, a.rows, b.cols, a.cols, false, true);
            }
            if (b.requires_grad) {
                gemm_acc(*a.data, *out.grad, *b.grad, a.cols, a.rows, b.cols, true, false);
            }
        };
    });
    return out;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols) fail("matmul_bt: inner dimensions disagree");
    Matrix out = Matrix::zeros(a.rows, b.rows);
    gemm_acc(*a.data, *b.data, *out.data, a.rows, a.cols, b.rows, false, true);
    finish(out, a.requires_grad || b.requires_grad, "matmul_bt", [&] {
        return [a, b, out]() {
            // Y = A * B^T, so dA = dY * B and dB = dY^T * A.
            if (a.requires_grad) {
                gemm_acc(*out.grad, *b.data, *a.grad, a.rows, b.rows, a.cols, false, false);
            }
            if (b.requires_grad) {
                gemm_acc(*out.grad, *a.data, *b.grad, b.rows, a.rows, a.cols, true, false);
            }
        };
    });
    return out;
}

Matrix linear(const Matrix& x, const Matrix& w, const Matrix& bias_row) {
    if (x.cols != w.rows) fail("linear: inner dimensions disagree");
    if (bias_row.rows != 1 || bias_row.cols != w.cols) fail("linear: bias must be 1 x cols");
    Matrix out = Matrix::zeros(x.rows, w.cols);
    for (int i = 0; i < out.rows; ++i) {
        std::copy(bias_row.data->begin(), bias_row.data->end(),
                  out.data->begin() + static_cast<std::size_t>(i) * out.cols);
    }
    gemm_acc(*x.data, *w.data, *out.data, x.rows, x.cols, w.cols, false, false);
    finish(out, x.requires_grad || w.requires_grad || bias_row.requires_grad, "linear", [&] {
        return [x, w, bias_row, out]() {
            if (x.requires_grad) {
                gemm_acc(*out.grad, *w.data, *x.grad, x.rows, w.cols, x.cols, false, true);
            }
            if (w.requires_grad) {
                gemm_acc(*x.data, *out.grad, *w.grad, x.cols, x.rows, w.cols, true, false);
            }
            if (bias_row.requires_grad) {
                for (int i = 0; i < out.rows; ++i) {
                    const double* g = &(*out.grad)[static_cast<std::size_t>(i) * out.cols];
                    for (int j = 0; j < out.cols; ++j) (*bias_row.grad)[j] += g[j];
                }
            }
        };
    });
    return out;
}

Matrix transpose(const Matrix& x) {
    Matrix out = Matrix::zeros(x.cols, x.rows);
    for (int i = 0; i < x.rows; ++i) {
        for (int j = 0; j < x.cols; ++j) out.at(j, i) = x.at(i, j);
    }
    finish(out, x.requires_grad, "transpose", [&] {
        return [x, out]() {
            for (int i = 0; i < x.rows; ++i) {
                for (int j = 0; j < x.cols; ++j) {
                    (*x.grad)[static_cast<std::size_t>(i) * x.cols + j] +=
                        (*out.grad)[static_cast<std::size_t>(j) * x.rows + i];
                }
            }
        };
    });
    return out;
}

Matrix softmax_rows(const Matrix& scores) {
    check_finite(*scores.data, "softmax_rows: input scores");
    Matrix out = Matrix::zeros(scores.rows, scores.cols);
    const int n = scores.cols;
    for (int i = 0; i < scores.rows; ++i) {
        const double* s = &(*scores.data)[static_cast<std::size_t>(i) * n];
        double* p = &(*out.data)[static_cast<std::size_t>(i) * n];
        double m = s[0];
        for (int j = 1; j < n; ++j) m = std::max(m, s[j]);
        double z = 0.0;
        for (int j = 0; j < n; ++j) {
            p[j] = std::exp(s[j] - m);
            z += p[j];
        }
        for (int j = 0; j < n; ++j) p[j] /= z;
    }
    finish(out, scores.requires_grad, "softmax_rows", [&] {
        return [scores, out]() {
            const int n2 = out.cols;
            for (int i = 0; i < out.rows; ++i) {
                const double* p = &(*out.data)[static_cast<std::size_t>(i) * n2];
                const double* dp = &(*out.grad)[static_cast<std::size_t>(i) * n2];
                double* ds = &(*scores.grad)[static_cast<std::size_t>(i) * n2];
                double dot = 0.0;
                for (int j = 0; j < n2; ++j) dot += dp[j] * p[j];
                for (int j = 0; j < n2; ++j) ds[j] += p[j] * (dp[j] - dot);
            }
        };
    });
    return out;
}

Matrix add_bias(const Matrix& x, const Matrix& bias_row) {
    if (bias_row.rows != 1 || bias_row.cols != x.cols) fail("add_bias: bias must be 1 x cols");
    Matrix out = Matrix::zeros(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i) {
        for (int j = 0; j < x.cols; ++j) out.at(i, j) = x.at(i, j) + (*bias_row.data)[j];
    }
    finish(out, x.requires_grad || bias_row.requires_grad, "add_bias", [&] {
        return [x, bias_row, out]() {
            for (int i = 0; i < out.rows; ++i) {
                for (int j = 0; j < out.cols; ++j) {
                    const double dy = (*out.grad)[static_cast<std::size_t>(i) * out.cols + j];
                    if (x.requires_grad) {
                        (*x.grad)[static_cast<std::size_t>(i) * out.cols + j] += dy;
                    }
                    if (bias_row.requires_grad) (*bias_row.grad)[j] += dy;
                }
            }
        };
    });
    return out;
}

Matrix concat_rows(const std::vector<Matrix>& parts) {
    if (parts.empty()) fail("concat_rows: no parts");
    const int cols = parts.front().cols;
    int rows = 0;
    bool any_grad = false;
    for (const Matrix& p : parts) {
        if (p.cols != cols) fail("concat_rows: column width mismatch");
        rows += p.rows;
        any_grad = any_grad || p.requires_grad;
    }
    Matrix out = Matrix::zeros(rows, cols);
    std::size_t offset = 0;
    for (const Matrix& p : parts) {
        std::copy(p.data->begin(), p.data->end(), out.data->begin() + offset);
        offset += p.size();
    }
    finish(out, any_grad, "concat_rows", [&] {
        return [parts, out]() {
            std::size_t off = 0;
            for (const Matrix& p : parts) {
                if (p.requires_grad) {
                    for (std::size_t i = 0; i < p.size(); ++i) {
                        (*p.grad)[i] += (*out.grad)[off + i];
                    }
                }
                off += p.size();
            }
        };
    });
    return out;
}

Matrix slice_rows(const Matrix& x, int start, int count) {
    if (start < 0 || count <= 0 || start + count > x.rows) fail("slice_rows: range out of bounds");
    Matrix out = Matrix::zeros(count, x.cols);
    const std::size_t base = static_cast<std::size_t>(start) * x.cols;
    std::copy(x.data->begin() + base, x.data->begin() + base + out.size(), out.data->begin());
    finish(out, x.requires_grad, "slice_rows", [&] {
        return [x, out, base]() {
            for (std::size_t i = 0; i < out.size(); ++i) (*x.grad)[base + i] += (*out.grad)[i];
        };
    });
    return out;
}

// ---------------------------------------------------------------------------
// Reductions and slicing
// ---------------------------------------------------------------------------

namespace {

template <class V>
Tensor sum_impl(const V& x) {
    Tensor out = Tensor::zeros(1, 1, 1);
    double acc = 0.0;
    for (double v : *x.data) acc += v;
    (*out.data)[0] = acc;
    finish(out, x.requires_grad, "sum", [&] {
        return [x, out]() {
            const double dy = (*out.grad)[0];
            for (double& g : *x.grad) g += dy;
        };
    });
    return out;
}

}  // namespace

Tensor sum(const Tensor& x) { return sum_impl(x); }
Tensor sum(const Matrix& x) { return sum_impl(x); }

Tensor slice_channels(const Tensor& x, int start, int count) {
    if (start < 0 || count <= 0 || start + count > x.c) {
        fail("slice_channels: range out of bounds");
    }
    Tensor out = Tensor::zeros(x.h, x.w, count);
    const std::size_t positions = static_cast<std::size_t>(x.h) * x.w;
    for (std::size_t p = 0; p < positions; ++p) {
        for (int k = 0; k < count; ++k) {
            (*out.data)[p * count + k] = (*x.data)[p * x.c + start + k];
        }
    }
    finish(out, x.requires_grad, "slice_channels", [&] {
        return [x, out, start, count]() {
            const std::size_t pos2 = static_cast<std::size_t>(x.h) * x.w;
            for (std::size_t p = 0; p < pos2; ++p) {
                for (int k = 0; k < count; ++k) {
                    (*x.grad)[p * x.c + start + k] += (*out.grad)[p * count + k];
                }
            }
        };
    });
    return out;
}

}  // namespace hofar
