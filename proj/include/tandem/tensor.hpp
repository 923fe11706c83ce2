#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tandem {

using Real = double;
using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Scalar precision of the engine. Values are always held in double storage;
/// in Single mode every op output and every optimizer update is rounded to
/// the nearest float, so trained models are exactly representable in CKPT1.
enum class Precision { Double, Single };

void set_precision(Precision p);
Precision precision();

class PrecisionScope {
public:
    explicit PrecisionScope(Precision p) : saved_(precision()) { set_precision(p); }
    ~PrecisionScope() { set_precision(saved_); }
    PrecisionScope(const PrecisionScope&) = delete;
    PrecisionScope& operator=(const PrecisionScope&) = delete;

private:
    Precision saved_;
};

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool saved_;
};

bool grad_enabled();

namespace detail {

struct TensorImpl;

using BackwardFn = std::function<void(const TensorImpl& out)>;

struct Node {
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    BackwardFn backward;
};

struct TensorImpl {
    Shape shape;
    std::vector<Real> data;
    std::vector<Real> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::shared_ptr<Node> node;  // null for leaves

    /// Gradient buffer, zero-initialised on first use.
    std::span<Real> grad_buffer();
};

}  // namespace detail

/// Dense row-major tensor handle. Copies share storage; use clone() for a
/// deep copy. 4-D tensors use the batch x channels x height x width layout.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, Real fill = 0);
    Tensor(Shape shape, std::vector<Real> values);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0); }
    static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1); }
    static Tensor scalar(Real v) { return Tensor(Shape{1}, v); }

    bool defined() const noexcept { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t i) const;
    std::size_t numel() const;

    std::span<const Real> data() const;
    /// Direct write access. Only meaningful for leaves (parameters, inputs).
    std::span<Real> mutable_data();
    Real item() const;
    Real at(std::size_t i) const { return data()[i]; }

    bool requires_grad() const;
    Tensor& set_requires_grad(bool on);
    bool is_leaf() const;
    bool has_grad() const;
    std::span<const Real> grad() const;
    std::span<Real> mutable_grad();
    void zero_grad();

    /// Reverse-mode sweep from this scalar. Accumulates into leaf grads;
    /// intermediate grad buffers are released afterwards.
    void backward() const;

    Tensor detach() const;  // shared-free copy without graph
    Tensor clone() const { return detach(); }

    /// Identity of the underlying storage.
    const void* id() const noexcept { return impl_.get(); }

    // Used by op implementations.
    static Tensor make_result(Shape shape, std::vector<Real> data, std::vector<Tensor> inputs,
                              detail::BackwardFn fn);
    const std::shared_ptr<detail::TensorImpl>& impl() const noexcept { return impl_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<detail::TensorImpl> impl_;
};

}  // namespace tandem
