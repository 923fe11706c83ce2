#include "tandem/layers.hpp"

#include <cmath>

namespace tandem {

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, int stride, bool with_bias,
               Rng& init, double init_std)
    : stride_(stride) {
    weight = Tensor::zeros({out_channels, in_channels, kernel, kernel});
    const double std_dev =
        init_std >= 0 ? init_std : std::sqrt(2.0 / static_cast<double>(in_channels * kernel * kernel));
    for (Real& w : weight.mutable_data()) w = static_cast<float>(init.normal(0.0, std_dev));
    weight.set_requires_grad(true);
    if (with_bias) {
        bias = Tensor::zeros({out_channels});
        bias.set_requires_grad(true);
    }
}

Tensor Conv2d::forward(const Tensor& x) const { return ops::conv2d(x, weight, bias, stride_, Padding::same()); }

void Conv2d::collect(const std::string& prefix, std::vector<NamedTensor>& params) const {
    params.push_back({prefix + ".weight", weight});
    if (bias.defined()) params.push_back({prefix + ".bias", bias});
}

BatchNorm2d::BatchNorm2d(std::size_t channels, double momentum_, double eps_)
    : gamma(Tensor::ones({channels})),
      beta(Tensor::zeros({channels})),
      stats(BatchNormStats::make(channels)),
      momentum(momentum_),
      eps(eps_) {
    gamma.set_requires_grad(true);
    beta.set_requires_grad(true);
}

Tensor BatchNorm2d::forward(const Tensor& x, Mode mode) const {
    return ops::batchnorm2d(x, gamma, beta, stats, mode, momentum, eps);
}

void BatchNorm2d::collect(const std::string& prefix, std::vector<NamedTensor>& params) const {
    params.push_back({prefix + ".gamma", gamma});
    params.push_back({prefix + ".beta", beta});
}

void BatchNorm2d::collect_buffers(const std::string& prefix, std::vector<NamedTensor>& buffers) const {
    buffers.push_back({prefix + ".running_mean", stats.running_mean});
    buffers.push_back({prefix + ".running_var", stats.running_var});
}

}  // namespace tandem
