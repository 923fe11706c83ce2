#pragma once

#include <string>
#include <vector>

#include "tandem/ops.hpp"
#include "tandem/rng.hpp"
#include "tandem/tensor.hpp"

namespace tandem {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

/// Mode plus the dropout stream for one forward pass.
struct ForwardContext {
    Mode mode = Mode::Eval;
    Rng* rng = nullptr;
};

class Conv2d {
public:
    Conv2d() = default;
    /// Normal weights with standard deviation `init_std` (He-normal when
    /// negative), zero bias.
    Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, int stride, bool with_bias,
           Rng& init, double init_std = -1.0);

    Tensor forward(const Tensor& x) const;

    std::size_t in_channels() const { return weight.dim(1); }
    std::size_t out_channels() const { return weight.dim(0); }
    std::size_t kernel() const { return weight.dim(2); }
    int stride() const { return stride_; }

    void collect(const std::string& prefix, std::vector<NamedTensor>& params) const;

    Tensor weight;
    Tensor bias;  // undefined when built without bias

private:
    int stride_ = 1;
};

class BatchNorm2d {
public:
    BatchNorm2d() = default;
    BatchNorm2d(std::size_t channels, double momentum, double eps);

    Tensor forward(const Tensor& x, Mode mode) const;

    void collect(const std::string& prefix, std::vector<NamedTensor>& params) const;
    void collect_buffers(const std::string& prefix, std::vector<NamedTensor>& buffers) const;

    Tensor gamma;
    Tensor beta;
    mutable BatchNormStats stats;
    double momentum = 0.1;
    double eps = 1e-5;
};

}  // namespace tandem
