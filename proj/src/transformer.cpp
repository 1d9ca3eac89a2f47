#include "hofar/transformer.hpp"

#include <stdexcept>

#include "hofar/multiscale.hpp"

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

}  // namespace

ArStack make_ar_stack(int width, int channels, int m, int num_classes, int h0, int w0,
                      Rng& rng) {
    if (width < 1 || channels < 1 || m < 1 || num_classes < 1) {
        throw std::runtime_error("make_ar_stack: invalid dimensions");
    }
    ArStack stack;
    stack.width = width;
    stack.channels = channels;
    stack.in_embed = normal_matrix(channels, width, 0.02, rng);
    stack.out_proj = normal_matrix(width, channels, 0.02, rng);
    stack.layers.resize(m);
    for (ArLayer& layer : stack.layers) {
        layer.attn.wq = normal_matrix(width, width, 0.02, rng);
        layer.attn.wk = normal_matrix(width, width, 0.02, rng);
        layer.attn.wv = normal_matrix(width, width, 0.02, rng);
        layer.ffn.w1 = normal_matrix(width, width, 0.02, rng);
        layer.ffn.b1 = zero_bias(width);
        layer.ffn.w2 = normal_matrix(width, width, 0.02, rng);
        layer.ffn.b2 = zero_bias(width);
    }
    stack.class_table.reserve(num_classes);
    for (int k = 0; k < num_classes; ++k) {
        Tensor z = Tensor::zeros(h0, w0, width);
        for (double& v : *z.data) v = 0.02 * rng.normal();
        z.set_requires_grad();
        stack.class_table.push_back(z);
    }
    return stack;
}

Matrix attention(const Matrix& x, const AttnWeights& w) {
    Matrix q = matmul(x, w.wq);
    Matrix k = matmul(x, w.wk);
    Matrix p = softmax_rows(matmul_bt(q, k));
    return matmul(p, matmul(x, w.wv));
}

Matrix ffn(const Matrix& x, const FfnWeights& w) {
    Matrix hidden = relu(linear(x, w.w1, w.b1));
    return add(x, linear(hidden, w.w2, w.b2));
}

Tensor embed_map(const ArStack& stack, const Tensor& map) {
    if (map.c != stack.channels) throw std::runtime_error("embed_map: channel width mismatch");
    Matrix lifted = matmul(reshape_to_matrix(map), stack.in_embed);
    return reshape_to_tensor(lifted, map.h, map.w);
}

Matrix build_sequence(const Tensor& z_init, const std::vector<Tensor>& prior_maps, int a) {
    std::vector<Matrix> parts;
    parts.reserve(prior_maps.size() + 1);
    parts.push_back(reshape_to_matrix(z_init));
    for (const Tensor& map : prior_maps) {
        if (map.c != z_init.c) throw std::runtime_error("build_sequence: width mismatch");
        parts.push_back(reshape_to_matrix(upsample_bicubic(map, a)));
    }
    return concat_rows(parts);
}

Tensor forward_scale(const ArStack& stack, const Matrix& z, int h_i, int w_i) {
    if (z.cols != stack.width) throw std::runtime_error("forward_scale: stream width mismatch");
    const int count = h_i * w_i;
    if (count < 1 || z.rows < count) {
        throw std::runtime_error("forward_scale: sequence shorter than the scale block");
    }
    Matrix cur = z;
    for (const ArLayer& layer : stack.layers) cur = ffn(attention(cur, layer.attn), layer.ffn);
    Matrix tail = slice_rows(cur, z.rows - count, count);
    return reshape_to_tensor(matmul(tail, stack.out_proj), h_i, w_i);
}

}  // namespace hofar
