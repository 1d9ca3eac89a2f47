#pragma once

#include <vector>

#include "hofar/tensor.hpp"

// Scale pyramid: a linear downsampling operator, the multi-scale tokenizer
// built from it, and bicubic upsampling. All three are linear maps; the two
// resamplers participate in autodiff with transpose adjoints.

namespace hofar {

struct PyramidConfig {
    int K = 1;  // number of scales
    int a = 1;  // scaling base; scale i in [0, K) is downsampled by a^(K-1-i)
};

// a^(K-1-i); the finest scale (i = K-1) has factor 1.
int scale_factor(const PyramidConfig& cfg, int i);

struct TokenPyramid {
    std::vector<Tensor> maps;  // maps[i] is (h/r_i) x (w/r_i) x c
};

// Average pooling over r x r blocks; h and w must be divisible by r.
Tensor downsample(const Tensor& x, int r);

// K maps, the i-th downsampled by a^(K-1-i); the last equals x.
TokenPyramid tokenize(const Tensor& x, const PyramidConfig& cfg);

// Bicubic upsampling by integer factor r >= 1 to (rh) x (rw) x c. Output
// pixel i reads source position i/r: taps floor(i/r)+s for s in {-1,0,1,2},
// weighted by the Keys cubic (a = -0.5) at s - frac(i/r), borders clamped to
// the edge. Kernel weights sum to 1, so constants are preserved.
Tensor upsample_bicubic(const Tensor& x, int r);

}  // namespace hofar
