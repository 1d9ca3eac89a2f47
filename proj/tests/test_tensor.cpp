#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "hofar/rng.hpp"
#include "hofar/tensor.hpp"
#include "oracles.hpp"

using namespace hofar;
using oracles::max_grad_rel_err;
using oracles::ref;

namespace {

Matrix random_matrix(int rows, int cols, Rng& rng, bool requires_grad = true) {
    Matrix m = Matrix::zeros(rows, cols, requires_grad);
    for (double& v : *m.data) v = rng.normal();
    return m;
}

constexpr double kGradTol = 1e-6;

}  // namespace

TEST_CASE("elementwise forward values") {
    Tensor a = Tensor::from(1, 2, 1, {1.0, 2.0});
    Tensor b = Tensor::from(1, 2, 1, {3.0, 4.0});
    CHECK_EQ(add(a, b).at(0, 0, 0), 4.0);
    CHECK_EQ(add(a, b).at(0, 1, 0), 6.0);
    CHECK_EQ(sub(a, b).at(0, 0, 0), -2.0);
    CHECK_EQ(hadamard(a, b).at(0, 1, 0), 8.0);
    CHECK_EQ(scale(a, -2.0).at(0, 1, 0), -4.0);
    CHECK_EQ(add_scalar(a, 0.5).at(0, 0, 0), 1.5);

    Tensor e = Tensor::from(1, 2, 1, {0.0, 1.0});
    CHECK_EQ(hofar::exp(e).at(0, 0, 0), 1.0);
    CHECK_EQ(hofar::exp(e).at(0, 1, 0), doctest::Approx(2.718281828459045).epsilon(1e-15));

    Tensor r = Tensor::from(1, 3, 1, {-1.0, 0.0, 2.0});
    CHECK_EQ(relu(r).at(0, 0, 0), 0.0);
    CHECK_EQ(relu(r).at(0, 1, 0), 0.0);
    CHECK_EQ(relu(r).at(0, 2, 0), 2.0);
}

TEST_CASE("matmul and transpose forward values") {
    Matrix a = Matrix::from(2, 2, {1.0, 2.0, 3.0, 4.0});
    Matrix b = Matrix::from(2, 2, {5.0, 6.0, 7.0, 8.0});
    Matrix y = matmul(a, b);
    CHECK_EQ(y.at(0, 0), 19.0);
    CHECK_EQ(y.at(0, 1), 22.0);
    CHECK_EQ(y.at(1, 0), 43.0);
    CHECK_EQ(y.at(1, 1), 50.0);

    Matrix i3 = Matrix::identity(3);
    Matrix x = Matrix::from(3, 2, {1, 2, 3, 4, 5, 6});
    Matrix ix = matmul(i3, x);
    for (std::size_t k = 0; k < x.size(); ++k) CHECK_EQ((*ix.data)[k], (*x.data)[k]);

    Matrix xt = transpose(x);
    CHECK_EQ(xt.rows, 2);
    CHECK_EQ(xt.cols, 3);
    CHECK_EQ(xt.at(0, 2), 5.0);
    CHECK_EQ(xt.at(1, 0), 2.0);
}

TEST_CASE("matmul_bt and linear match their composed forms") {
    Matrix a = Matrix::from(2, 3, {1, 2, 3, 4, 5, 6});
    Matrix b = Matrix::from(2, 3, {7, 8, 9, 10, 11, 12});
    Matrix y = matmul_bt(a, b);
    CHECK_EQ(y.rows, 2);
    CHECK_EQ(y.cols, 2);
    CHECK_EQ(y.at(0, 0), 50.0);   // 1*7 + 2*8 + 3*9
    CHECK_EQ(y.at(0, 1), 68.0);
    CHECK_EQ(y.at(1, 0), 122.0);
    CHECK_EQ(y.at(1, 1), 167.0);

    Rng rng(23);
    Matrix p = random_matrix(3, 4, rng, false);
    Matrix q = random_matrix(5, 4, rng, false);
    Matrix fused = matmul_bt(p, q);
    Matrix composed = matmul(p, transpose(q));
    for (std::size_t k = 0; k < fused.size(); ++k)
        CHECK_EQ((*fused.data)[k], (*composed.data)[k]);  // bit-identical sums

    Matrix x = Matrix::from(2, 2, {1, 2, 3, 4});
    Matrix w = Matrix::from(2, 2, {5, 6, 7, 8});
    Matrix bias = Matrix::from(1, 2, {100, 200});
    Matrix z = linear(x, w, bias);
    CHECK_EQ(z.at(0, 0), 119.0);
    CHECK_EQ(z.at(0, 1), 222.0);
    CHECK_EQ(z.at(1, 0), 143.0);
    CHECK_EQ(z.at(1, 1), 250.0);

    CHECK_THROWS_AS(matmul_bt(a, x), std::runtime_error);
    CHECK_THROWS_AS(linear(x, w, Matrix::from(1, 3, {1, 2, 3})), std::runtime_error);
    CHECK_THROWS_AS(linear(x, Matrix::from(3, 2, {1, 2, 3, 4, 5, 6}), bias), std::runtime_error);
}

TEST_CASE("softmax_rows matches row-normalized exp and survives large scores") {
    // exp([ln 1, ln 3]) normalizes to [1/4, 3/4].
    Matrix s = Matrix::from(1, 2, {0.0, std::log(3.0)});
    Matrix p = softmax_rows(s);
    CHECK_EQ(p.at(0, 0), doctest::Approx(0.25).epsilon(1e-14));
    CHECK_EQ(p.at(0, 1), doctest::Approx(0.75).epsilon(1e-14));

    // Same row shifted by 1000: naive exp would overflow, result is unchanged.
    Matrix big = Matrix::from(1, 2, {1000.0, 1000.0 + std::log(3.0)});
    Matrix pb = softmax_rows(big);
    CHECK_EQ(pb.at(0, 0), doctest::Approx(0.25).epsilon(1e-14));
    CHECK_EQ(pb.at(0, 1), doctest::Approx(0.75).epsilon(1e-14));

    Rng rng(7);
    Matrix r = random_matrix(4, 5, rng, false);
    Matrix pr = softmax_rows(r);
    for (int i = 0; i < pr.rows; ++i) {
        double row_sum = 0.0;
        for (int j = 0; j < pr.cols; ++j) {
            CHECK(pr.at(i, j) > 0.0);
            row_sum += pr.at(i, j);
        }
        CHECK_EQ(row_sum, doctest::Approx(1.0).epsilon(1e-13));
    }
}

TEST_CASE("add_bias, concat_rows, slice_rows, slice_channels, sum forward") {
    Matrix x = Matrix::from(2, 3, {1, 2, 3, 4, 5, 6});
    Matrix bias = Matrix::from(1, 3, {10, 20, 30});
    Matrix y = add_bias(x, bias);
    CHECK_EQ(y.at(0, 0), 11.0);
    CHECK_EQ(y.at(1, 2), 36.0);

    Matrix top = Matrix::from(1, 2, {1, 2});
    Matrix bottom = Matrix::from(2, 2, {3, 4, 5, 6});
    Matrix cat = concat_rows({top, bottom});
    CHECK_EQ(cat.rows, 3);
    CHECK_EQ(cat.at(0, 1), 2.0);
    CHECK_EQ(cat.at(2, 0), 5.0);
    Matrix back = slice_rows(cat, 1, 2);
    for (std::size_t k = 0; k < bottom.size(); ++k) CHECK_EQ((*back.data)[k], (*bottom.data)[k]);

    Tensor t = Tensor::from(1, 2, 3, {1, 2, 3, 4, 5, 6});
    Tensor ch = slice_channels(t, 1, 2);
    CHECK_EQ(ch.c, 2);
    CHECK_EQ(ch.at(0, 0, 0), 2.0);
    CHECK_EQ(ch.at(0, 1, 1), 6.0);

    CHECK_EQ(sum(t).at(0, 0, 0), 21.0);
    CHECK_EQ(sum(x).at(0, 0, 0), 21.0);
}

TEST_CASE("reshape views share storage both ways") {
    Tensor t = Tensor::from(2, 2, 3, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}, true);
    Matrix m = reshape_to_matrix(t);
    CHECK_EQ(m.rows, 4);
    CHECK_EQ(m.cols, 3);
    CHECK(m.data.get() == t.data.get());
    CHECK(m.grad.get() == t.grad.get());
    Tensor rt = reshape_to_tensor(m, 2, 2);
    CHECK(rt.data.get() == t.data.get());
    for (std::size_t k = 0; k < t.size(); ++k) CHECK_EQ((*rt.data)[k], (*t.data)[k]);

    // Token row (i, j) of the matrix view is channel vector (i, j, :).
    CHECK_EQ(m.at(1, 2), t.at(0, 1, 2));
    CHECK_EQ(m.at(3, 0), t.at(1, 1, 0));
}

TEST_CASE("backward through a reshape view reaches the base tensor") {
    Tensor t = Tensor::from(1, 2, 2, {1, 2, 3, 4}, true);
    Matrix m = reshape_to_matrix(t);
    Matrix w = Matrix::from(2, 2, {5, 6, 7, 8});
    Tensor loss = sum(hadamard(m, w));
    backward(loss);
    CHECK_EQ((*t.grad)[0], 5.0);
    CHECK_EQ((*t.grad)[1], 6.0);
    CHECK_EQ((*t.grad)[2], 7.0);
    CHECK_EQ((*t.grad)[3], 8.0);
}

TEST_CASE("finite-difference gradients: elementwise ops") {
    Rng rng(11);
    Matrix a = random_matrix(3, 4, rng);
    Matrix b = random_matrix(3, 4, rng);
    Matrix w = random_matrix(3, 4, rng, false);

    auto weighted = [&](Matrix y) { return sum(hadamard(y, w)); };

    CHECK(max_grad_rel_err([&] { return weighted(add(a, b)); }, {ref(a), ref(b)}) < kGradTol);
    CHECK(max_grad_rel_err([&] { return weighted(sub(a, b)); }, {ref(a), ref(b)}) < kGradTol);
    CHECK(max_grad_rel_err([&] { return weighted(hadamard(a, b)); }, {ref(a), ref(b)}) <
          kGradTol);
    CHECK(max_grad_rel_err([&] { return weighted(hofar::exp(scale(a, 0.5))); }, {ref(a)}) <
          kGradTol);
    CHECK(max_grad_rel_err([&] { return weighted(add_scalar(scale(a, -1.7), 0.3)); }, {ref(a)}) <
          kGradTol);

    // Keep relu inputs away from the kink.
    Matrix c = Matrix::zeros(2, 2, true);
    *c.data = {0.5, -0.7, 1.2, -2.0};
    Matrix wc = Matrix::from(2, 2, {1, 2, 3, 4});
    CHECK(max_grad_rel_err([&] { return sum(hadamard(relu(c), wc)); }, {ref(c)}) < kGradTol);
}

TEST_CASE("finite-difference gradients: matrix ops") {
    Rng rng(13);
    Matrix a = random_matrix(3, 2, rng);
    Matrix b = random_matrix(2, 4, rng);
    Matrix w = random_matrix(3, 4, rng, false);

    CHECK(max_grad_rel_err([&] { return sum(hadamard(matmul(a, b), w)); }, {ref(a), ref(b)}) <
          kGradTol);
    Matrix wt = random_matrix(2, 3, rng, false);
    CHECK(max_grad_rel_err([&] { return sum(hadamard(transpose(a), wt)); }, {ref(a)}) < kGradTol);

    Matrix s = random_matrix(3, 3, rng);
    Matrix ws = random_matrix(3, 3, rng, false);
    CHECK(max_grad_rel_err([&] { return sum(hadamard(softmax_rows(s), ws)); }, {ref(s)}) <
          kGradTol);

    Matrix bias = random_matrix(1, 4, rng);
    Matrix x = random_matrix(3, 4, rng);
    CHECK(max_grad_rel_err(
              [&] { return sum(hadamard(add_bias(x, bias), w)); }, {ref(x), ref(bias)}) <
          kGradTol);

    Matrix u = random_matrix(3, 2, rng);
    Matrix v = random_matrix(4, 2, rng);
    CHECK(max_grad_rel_err(
              [&] { return sum(hadamard(matmul_bt(u, v), w)); }, {ref(u), ref(v)}) < kGradTol);
    CHECK(max_grad_rel_err(
              [&] { return sum(hadamard(linear(a, b, bias), w)); },
              {ref(a), ref(b), ref(bias)}) < kGradTol);
}

TEST_CASE("finite-difference gradients: structural ops and tensors") {
    Rng rng(17);
    Matrix top = random_matrix(2, 3, rng);
    Matrix bottom = random_matrix(1, 3, rng);
    Matrix w = random_matrix(3, 3, rng, false);
    CHECK(max_grad_rel_err(
              [&] { return sum(hadamard(concat_rows({top, bottom}), w)); },
              {ref(top), ref(bottom)}) < kGradTol);
    CHECK(max_grad_rel_err(
              [&] { return sum(slice_rows(concat_rows({top, bottom}), 1, 2)); },
              {ref(top), ref(bottom)}) < kGradTol);

    Tensor t = Tensor::zeros(2, 2, 3, true);
    for (double& v : *t.data) v = rng.normal();
    Tensor wt = Tensor::zeros(2, 2, 2);
    for (double& v : *wt.data) v = rng.normal();
    CHECK(max_grad_rel_err(
              [&] { return sum(hadamard(slice_channels(t, 1, 2), wt)); }, {ref(t)}) < kGradTol);
}

TEST_CASE("finite-difference gradients: composite graph with parameter reuse") {
    Rng rng(19);
    Matrix a = random_matrix(2, 2, rng);
    Matrix b = random_matrix(2, 2, rng);
    // a appears in three places; accumulation must add, not overwrite.
    auto loss_fn = [&] {
        Matrix p = softmax_rows(matmul(a, b));
        Matrix q = add(hadamard(a, a), p);
        return sum(hadamard(q, transpose(matmul(b, a))));
    };
    CHECK(max_grad_rel_err(loss_fn, {ref(a), ref(b)}) < kGradTol);
}

TEST_CASE("tape lifecycle and NoGradGuard") {
    tape().clear();
    Matrix a = Matrix::from(1, 2, {1.0, 2.0}, true);
    Tensor loss = sum(scale(a, 3.0));
    CHECK(tape().size() > 0);
    backward(loss);
    CHECK_EQ(tape().size(), 0);
    CHECK_EQ((*a.grad)[0], 3.0);

    {
        NoGradGuard guard;
        Matrix y = scale(a, 2.0);
        CHECK_FALSE(y.requires_grad);
        CHECK_EQ(tape().size(), 0);
        Tensor detached = sum(y);
        CHECK_THROWS_AS(backward(detached), std::runtime_error);
    }
    CHECK(grad_enabled());
}

TEST_CASE("shape and finiteness violations throw") {
    Matrix a = Matrix::from(2, 2, {1, 2, 3, 4});
    Matrix b = Matrix::from(2, 3, {1, 2, 3, 4, 5, 6});
    CHECK_THROWS_AS(add(a, b), std::runtime_error);
    CHECK_THROWS_AS(matmul(b, b), std::runtime_error);
    CHECK_THROWS_AS(add_bias(a, b), std::runtime_error);
    CHECK_THROWS_AS(slice_rows(a, 1, 3), std::runtime_error);

    Tensor t = Tensor::from(1, 1, 2, {1, 2});
    CHECK_THROWS_AS(slice_channels(t, 2, 1), std::runtime_error);
    CHECK_THROWS_AS(Tensor::from(1, 1, 3, {1, 2}), std::runtime_error);

    Tensor huge = Tensor::full(1, 1, 1, 1000.0);
    CHECK_THROWS_AS(hofar::exp(huge), std::runtime_error);

    Tensor vec = Tensor::from(1, 2, 1, {1, 2}, true);
    CHECK_THROWS_AS(backward(vec), std::runtime_error);
    tape().clear();
}

TEST_CASE("rng is reproducible and draws are sane") {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK_EQ(a.uniform(), b.uniform());
    for (int i = 0; i < 100; ++i) CHECK_EQ(a.normal(), b.normal());

    Rng c(5);
    double mean = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        double u = c.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        mean += u;
    }
    CHECK_EQ(mean / n, doctest::Approx(0.5).epsilon(0.02));

    double m1 = 0.0, m2 = 0.0;
    for (int i = 0; i < n; ++i) {
        double z = c.normal();
        m1 += z;
        m2 += z * z;
    }
    CHECK_EQ(m1 / n, doctest::Approx(0.0).scale(1).epsilon(0.03));
    CHECK_EQ(m2 / n, doctest::Approx(1.0).epsilon(0.05));

    for (int i = 0; i < 1000; ++i) {
        int k = c.uniform_int(8);
        CHECK(k >= 0);
        CHECK(k < 8);
    }
}
