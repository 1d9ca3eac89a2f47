#pragma once

#include <vector>

#include "hofar/rng.hpp"
#include "hofar/tensor.hpp"
#include "hofar/transformer.hpp"

// Adaptive flow-matching block and the two prediction heads. A block takes a
// condition map and the current state at one scale, computes six modulation
// tensors from the condition plus the scalar timestep, and applies a
// modulated attention stage followed by a modulated MLP stage. The first-
// and second-order heads are structurally identical stacks of such blocks
// with independent weights; they predict the velocity and acceleration of
// the trajectory at (state, t).

namespace hofar {

struct LnEps {
    double eps = 1e-5;
};

struct FmBlockWeights {
    Matrix mod_w;  // c x 6c
    Matrix mod_b;  // 1 x 6c
    AttnWeights attn;  // c x c each
    Matrix out_w;  // c x c
    Matrix out_b;  // 1 x c
};

enum class HeadOrder { first, second };

struct FmHead {
    HeadOrder order = HeadOrder::first;
    std::vector<FmBlockWeights> blocks;
};

FmHead make_fm_head(HeadOrder order, int depth, int channels, Rng& rng);

// Per spatial position: mean over channels mu, population std sigma (1/c
// variance), output (x - mu) / (sigma + eps). No learnable affine — the
// modulation tensors supply scale and shift.
Tensor layer_norm(const Tensor& x, LnEps eps = {});

// Tokenwise affine map to d = w.cols channels: each channel vector row maps
// through x*W + b.
Tensor mlp(const Tensor& x, const Matrix& w, const Matrix& b);

// One modulated block:
//   (a1, a2, b1, b2, g1, g2) = mlp(cond + t, c, 6c), split in that order;
//   f' = attention(g1*LN(state) + b1) * a1;
//   out = mlp(g2*LN(f') + b2, c, c) * a2.
// Attention runs over the flattened tokens of this scale only.
Tensor fm_block(const Tensor& cond, const Tensor& state, double t, const FmBlockWeights& w);

// Sequential application of the head's blocks; depth 0 is the identity.
Tensor head_forward(const FmHead& head, const Tensor& cond, const Tensor& state, double t);

}  // namespace hofar
