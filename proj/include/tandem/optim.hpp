#pragma once

#include <vector>

#include "tandem/tensor.hpp"

namespace tandem {

/// RMSprop with squared-gradient decay `rho` and no heavy-ball term:
///   acc <- rho * acc + (1 - rho) * g^2
///   p   <- p - lr * g / (sqrt(acc) + eps)
struct RmspropState {
    double rho = 0.9;
    double eps = 1e-8;
    double learning_rate = 1e-3;
    std::vector<std::vector<Real>> accumulators;  // one per parameter, shape-matched

    RmspropState() = default;
    RmspropState(const std::vector<Tensor>& params, double lr, double rho = 0.9, double eps = 1e-8);
};

/// Applies one update to `params` using `grads` (same order and shapes as
/// the state's accumulators). Missing gradients are treated as zero.
void rmsprop_step(std::vector<Tensor>& params, const std::vector<std::vector<Real>>& grads, RmspropState& state);

/// Convenience overload reading each parameter's own grad buffer.
void rmsprop_step(std::vector<Tensor>& params, RmspropState& state);

}  // namespace tandem
