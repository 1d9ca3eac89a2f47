#pragma once

#include <vector>

#include "hofar/rng.hpp"
#include "hofar/tensor.hpp"

// Autoregressive next-scale transformer: softmax attention (unnormalized
// dot-product scores, as defined — no 1/sqrt(d) temperature), residual ReLU
// feed-forward, unified-grid sequence construction over the scale pyramid,
// and last-scale extraction producing the condition maps for the flow heads.
//
// The token stream runs at a single hidden width; latent maps (with their own
// channel count) enter through a learned tokenwise embedding and leave
// through a learned projection, so stream width and latent channels can
// differ.

namespace hofar {

struct AttnWeights {
    Matrix wq, wk, wv;  // width x width
};

struct FfnWeights {
    Matrix w1, w2;  // width x width
    Matrix b1, b2;  // 1 x width
};

struct ArLayer {
    AttnWeights attn;
    FfnWeights ffn;
};

struct ArStack {
    int width = 0;     // token stream width
    int channels = 0;  // latent channel count at the boundaries
    Matrix in_embed;   // channels x width
    Matrix out_proj;   // width x channels
    std::vector<ArLayer> layers;
    std::vector<Tensor> class_table;  // per-class initial embedding, coarsest grid x width
};

// All weights and class embeddings drawn from N(0, 0.02^2); biases zero.
// h0 x w0 is the coarsest-scale grid.
ArStack make_ar_stack(int width, int channels, int m, int num_classes, int h0, int w0,
                      Rng& rng);

// Y = D^{-1} A X W_V with A = exp(X W_Q W_K^T X^T), D = diag(A 1). Rows are
// max-shifted before exp inside softmax_rows, which cancels exactly in the
// normalization.
Matrix attention(const Matrix& x, const AttnWeights& w);

// Y = X + relu(X W_1 + b_1) W_2 + b_2, rowwise.
Matrix ffn(const Matrix& x, const FfnWeights& w);

// Tokenwise linear lift of a latent map into the stream width.
Tensor embed_map(const ArStack& stack, const Tensor& map);

// Concat(z_init, up(prior_1, a), ..., up(prior_last, a)) flattened row-major
// along the token axis. Prior maps must already be at stream width.
Matrix build_sequence(const Tensor& z_init, const std::vector<Tensor>& prior_maps, int a);

// Applies the stacked (attention, ffn) pairs, keeps the trailing h_i*w_i
// tokens, projects back to latent channels, reshapes to the scale grid.
Tensor forward_scale(const ArStack& stack, const Matrix& z, int h_i, int w_i);

}  // namespace hofar
