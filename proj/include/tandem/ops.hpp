#pragma once

#include <cstddef>
#include <vector>

#include "tandem/rng.hpp"
#include "tandem/tensor.hpp"

namespace tandem {

enum class Mode { Train, Eval };

/// Convolution padding. `same` keeps H' = ceil(H / stride) for odd kernels.
struct Padding {
    static Padding same() { return Padding{-1}; }
    static Padding explicit_(int p) { return Padding{p}; }
    int amount = -1;
    bool is_same() const { return amount < 0; }
};

/// Per-channel running statistics updated by batchnorm in train mode.
struct BatchNormStats {
    Tensor running_mean;
    Tensor running_var;
    static BatchNormStats make(std::size_t channels);
};

namespace ops {

/// Cross-correlation of [N,Cin,H,W] with [Cout,Cin,kh,kw]. `bias` may be
/// undefined. Differentiable in input, weight and bias.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride = 1,
              Padding padding = Padding::same());

Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                   Mode mode, double momentum = 0.1, double eps = 1e-5);

Tensor relu(const Tensor& x);
/// Logistic function, clamped to [2^-24, 1 - 2^-24].
Tensor sigmoid(const Tensor& x);
Tensor maxpool2x2(const Tensor& x);
Tensor upsample_nearest2x(const Tensor& x);
/// Keeps every second row and column (grid subsampling).
Tensor subsample2x(const Tensor& x);
Tensor dropout(const Tensor& x, double p, Rng* rng, Mode mode);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// Elementwise a / b.
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, Real factor);
Tensor add_scalar(const Tensor& x, Real c);
/// Sum of all elements as a shape-{1} tensor.
Tensor sum(const Tensor& x);

/// Concatenates 4-D tensors along the channel axis.
Tensor concat_channels(const std::vector<Tensor>& parts);
/// Mirrors the width axis (horizontal) and/or the height axis (vertical).
Tensor flip(const Tensor& x, bool horizontal, bool vertical);

}  // namespace ops
}  // namespace tandem
