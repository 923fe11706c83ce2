#include "tandem/optim.hpp"

#include <cmath>

#include "tandem/error.hpp"

namespace tandem {

RmspropState::RmspropState(const std::vector<Tensor>& params, double lr, double rho_, double eps_)
    : rho(rho_), eps(eps_), learning_rate(lr) {
    if (!(rho > 0 && rho < 1)) throw ConfigError("rmsprop: rho must lie in (0, 1)");
    if (!(eps > 0)) throw ConfigError("rmsprop: eps must be positive");
    if (!(lr > 0)) throw ConfigError("rmsprop: learning rate must be positive");
    accumulators.reserve(params.size());
    for (const auto& p : params) accumulators.emplace_back(p.numel(), 0.0);
}

void rmsprop_step(std::vector<Tensor>& params, const std::vector<std::vector<Real>>& grads, RmspropState& state) {
    if (params.size() != state.accumulators.size() || grads.size() != params.size())
        throw DimensionError("rmsprop: parameter, gradient and state counts differ");
    const bool single = precision() == Precision::Single;
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto p = params[k].mutable_data();
        auto& acc = state.accumulators[k];
        const auto& g = grads[k];
        if (g.empty()) continue;
        if (g.size() != p.size() || acc.size() != p.size())
            throw DimensionError("rmsprop: gradient shape does not match parameter " + std::to_string(k) + " (" +
                                 shape_string(params[k].shape()) + ")");
        for (std::size_t i = 0; i < p.size(); ++i) {
            acc[i] = state.rho * acc[i] + (1.0 - state.rho) * g[i] * g[i];
            Real v = p[i] - state.learning_rate * g[i] / (std::sqrt(acc[i]) + state.eps);
            if (single) v = static_cast<Real>(static_cast<float>(v));
            p[i] = v;
        }
    }
}

void rmsprop_step(std::vector<Tensor>& params, RmspropState& state) {
    std::vector<std::vector<Real>> grads;
    grads.reserve(params.size());
    for (const auto& p : params) grads.emplace_back(p.grad().begin(), p.grad().end());
    rmsprop_step(params, grads, state);
}

}  // namespace tandem
