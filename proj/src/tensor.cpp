#include "tandem/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "tandem/error.hpp"

namespace tandem {

namespace {

std::atomic<Precision> g_precision{Precision::Double};
thread_local bool t_grad_enabled = true;

void finalize_values(std::vector<Real>& values) {
    const bool single = precision() == Precision::Single;
    for (Real& v : values) {
        if (single) v = static_cast<Real>(static_cast<float>(v));
        if (!std::isfinite(v)) throw NumericError("non-finite value produced by forward pass");
    }
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

void set_precision(Precision p) { g_precision.store(p); }
Precision precision() { return g_precision.load(); }

NoGradGuard::NoGradGuard() : saved_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = saved_; }
bool grad_enabled() { return t_grad_enabled; }

std::span<Real> detail::TensorImpl::grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
}

Tensor::Tensor(Shape shape, Real fill) : impl_(std::make_shared<detail::TensorImpl>()) {
    for (auto e : shape)
        if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
    impl_->data.assign(shape_numel(shape), fill);
    impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<Real> values) : impl_(std::make_shared<detail::TensorImpl>()) {
    for (auto e : shape)
        if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
    if (shape_numel(shape) != values.size())
        throw DimensionError("shape " + shape_string(shape) + " does not match " +
                             std::to_string(values.size()) + " values");
    impl_->shape = std::move(shape);
    impl_->data = std::move(values);
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t i) const {
    if (i >= impl_->shape.size())
        throw DimensionError("dimension index " + std::to_string(i) + " out of range for " +
                             shape_string(impl_->shape));
    return impl_->shape[i];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }
std::span<const Real> Tensor::data() const { return impl_->data; }
std::span<Real> Tensor::mutable_data() { return impl_->data; }

Real Tensor::item() const {
    if (impl_->data.size() != 1) throw UsageError("item() on tensor of shape " + shape_string(shape()));
    return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
    impl_->requires_grad = on;
    return *this;
}

bool Tensor::is_leaf() const { return impl_->node == nullptr; }
bool Tensor::has_grad() const { return !impl_->grad.empty(); }
std::span<const Real> Tensor::grad() const { return impl_->grad; }
std::span<Real> Tensor::mutable_grad() { return impl_->grad_buffer(); }
void Tensor::zero_grad() { impl_->grad.clear(); }

Tensor Tensor::detach() const {
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = impl_->shape;
    impl->data = impl_->data;
    return Tensor(std::move(impl));
}

Tensor Tensor::make_result(Shape shape, std::vector<Real> data, std::vector<Tensor> inputs,
                           detail::BackwardFn fn) {
    finalize_values(data);
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    if (grad_enabled()) {
        const bool any = std::any_of(inputs.begin(), inputs.end(),
                                     [](const Tensor& t) { return t.defined() && t.requires_grad(); });
        if (any) {
            impl->requires_grad = true;
            impl->node = std::make_shared<detail::Node>();
            for (auto& t : inputs) impl->node->inputs.push_back(t.impl_);
            impl->node->backward = std::move(fn);
        }
    }
    return Tensor(std::move(impl));
}

void Tensor::backward() const {
    if (impl_->data.size() != 1)
        throw UsageError("backward() requires a scalar loss, got shape " + shape_string(shape()));
    if (!impl_->requires_grad) throw UsageError("backward() on a tensor that does not require grad");

    // Iterative post-order DFS gives a topological order.
    std::vector<detail::TensorImpl*> order;
    std::unordered_set<detail::TensorImpl*> visited;
    std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack{{impl_.get(), 0}};
    visited.insert(impl_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        const auto* inputs = node->node ? &node->node->inputs : nullptr;
        if (inputs && next < inputs->size()) {
            detail::TensorImpl* child = (*inputs)[next++].get();
            if (child && child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
            continue;
        }
        order.push_back(node);
        stack.pop_back();
    }

    impl_->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::TensorImpl* t = *it;
        if (t->node && !t->grad.empty()) t->node->backward(*t);
    }
    for (detail::TensorImpl* t : order) {
        if (t->node) {
            t->grad.clear();
            t->grad.shrink_to_fit();
        } else {
            for (Real g : t->grad)
                if (!std::isfinite(g)) throw NumericError("non-finite gradient produced by backward pass");
        }
    }
}

}  // namespace tandem
