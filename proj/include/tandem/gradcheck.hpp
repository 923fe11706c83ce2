#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tandem/tensor.hpp"

namespace tandem {

/// Norm-wise relative error ||a - n|| / max(||a||, ||n||) between the
/// analytic gradient of `loss` and central differences, over all inputs
/// jointly (norms below 1e-8 are compared absolutely). `loss` must be
/// deterministic and return a scalar; inputs are perturbed in place and
/// restored.
double gradient_error(const std::function<Tensor()>& loss, const std::vector<Tensor>& inputs, double step = 1e-6);

struct GradcheckCase {
    std::string name;
    double error = 0.0;
    std::size_t elements = 0;  // perturbed scalars
};

struct GradcheckOptions {
    std::uint64_t seed = 0;
    double step = 1e-6;
    double tolerance = 1e-5;
};

/// Every differentiable op, the residual blocks, the dice loss, the tandem
/// model and the combiner, on randomized shapes up to 2x4x16x16. Runs in
/// double precision.
std::vector<GradcheckCase> run_gradcheck_suite(const GradcheckOptions& options = {});

}  // namespace tandem
