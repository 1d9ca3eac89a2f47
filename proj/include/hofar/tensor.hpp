#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

// Dense rank-3 tensors and matrices over 64-bit floats with reverse-mode
// differentiation on a dynamic tape. Values are immutable once recorded;
// gradients accumulate into per-value buffers that are shared by views.

namespace hofar {

struct Tensor {
    int h = 0, w = 0, c = 0;
    std::shared_ptr<std::vector<double>> data;
    std::shared_ptr<std::vector<double>> grad;  // non-null iff requires_grad
    bool requires_grad = false;

    static Tensor zeros(int h, int w, int c, bool requires_grad = false);
    static Tensor from(int h, int w, int c, std::vector<double> values,
                       bool requires_grad = false);
    static Tensor full(int h, int w, int c, double value);

    std::size_t size() const { return static_cast<std::size_t>(h) * w * c; }
    double at(int i, int j, int k) const;
    double& at(int i, int j, int k);
    void set_requires_grad();  // allocates the grad buffer
    void zero_grad();
};

struct Matrix {
    int rows = 0, cols = 0;
    std::shared_ptr<std::vector<double>> data;
    std::shared_ptr<std::vector<double>> grad;
    bool requires_grad = false;

    static Matrix zeros(int rows, int cols, bool requires_grad = false);
    static Matrix from(int rows, int cols, std::vector<double> values,
                       bool requires_grad = false);
    static Matrix identity(int n);

    std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
    double at(int i, int j) const;
    double& at(int i, int j);
    void set_requires_grad();
    void zero_grad();
};

// ---------------------------------------------------------------------------
// Tape: ordered record of executed operations; backward runs the records in
// reverse order exactly once and then clears them. One tape per thread.
// ---------------------------------------------------------------------------

class Tape {
  public:
    void record(std::function<void()> backward_rule);
    std::size_t size() const { return rules_.size(); }
    void clear() { rules_.clear(); }
    void run_backward_and_clear();

  private:
    std::vector<std::function<void()>> rules_;
};

Tape& tape();
bool grad_enabled();

// Disables recording (and grad allocation) for its scope. Used by inference
// and benchmarks, where only forward values are needed.
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool previous_;
};

// Seeds d(loss)/d(loss) = 1, propagates through the tape in reverse, then
// clears the tape. loss must be a 1x1x1 scalar attached to the current tape.
void backward(Tensor& loss);

// ---------------------------------------------------------------------------
// Reshapes. Views share data and grad storage, so round trips are bit-exact
// and adjoints flow without a tape record.
// ---------------------------------------------------------------------------

Matrix reshape_to_matrix(const Tensor& t);                // (h*w) x c
Tensor reshape_to_tensor(const Matrix& m, int h, int w);  // h x w x m.cols

// ---------------------------------------------------------------------------
// Elementwise operations. Binary ops require exactly equal shapes; scalar
// broadcast exists only as add_scalar/scale. Every result is checked finite.
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor exp(const Tensor& x);
Tensor relu(const Tensor& x);  // backward uses subgradient 0 at 0
Tensor scale(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double s);

Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix exp(const Matrix& x);
Matrix relu(const Matrix& x);
Matrix scale(const Matrix& x, double s);
Matrix add_scalar(const Matrix& x, double s);

// ---------------------------------------------------------------------------
// Matrix operations.
// ---------------------------------------------------------------------------

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& x);

// a * transpose(b) without materializing the transpose. a is p x q, b is
// r x q, result is p x r; sums run in the same order as matmul, so the
// values are bit-identical to matmul(a, transpose(b)).
Matrix matmul_bt(const Matrix& a, const Matrix& b);

// x * w + bias broadcast over rows, in one pass. Equivalent to
// add_bias(matmul(x, w), bias_row) up to summation order but with one
// output buffer instead of two.
Matrix linear(const Matrix& x, const Matrix& w, const Matrix& bias_row);

// Row-normalized exp of scores: softmax_rows(S) == D^{-1} exp(S) with
// D = diag(exp(S) 1). Rows are shifted by their max before exponentiation,
// which cancels exactly in the normalization.
Matrix softmax_rows(const Matrix& scores);

// Adds a 1 x d bias row to every row of an N x d matrix.
Matrix add_bias(const Matrix& x, const Matrix& bias_row);

Matrix concat_rows(const std::vector<Matrix>& parts);
Matrix slice_rows(const Matrix& x, int start, int count);

// ---------------------------------------------------------------------------
// Reductions and slicing.
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& x);  // 1x1x1 scalar
Tensor sum(const Matrix& x);
Tensor slice_channels(const Tensor& x, int start, int count);

}  // namespace hofar
