#include "tandem/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "tandem/architecture.hpp"
#include "tandem/error.hpp"
#include "tandem/ops.hpp"
#include "tandem/rng.hpp"
#include "tandem/training.hpp"

namespace tandem {

namespace {

// Gradients whose norm is below this are compared in absolute terms.
constexpr double kAbsoluteFloor = 1e-8;

}  // namespace

double gradient_error(const std::function<Tensor()>& loss, const std::vector<Tensor>& inputs, double step) {
    std::vector<Tensor> xs = inputs;
    for (auto& x : xs) {
        x.set_requires_grad(true);
        x.zero_grad();
    }
    loss().backward();
    std::vector<std::vector<Real>> analytic;
    for (const auto& x : xs) {
        if (x.has_grad()) analytic.emplace_back(x.grad().begin(), x.grad().end());
        else analytic.emplace_back(x.numel(), 0.0);
    }

    NoGradGuard no_grad;
    double diff2 = 0, a2 = 0, n2 = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        auto data = xs[k].mutable_data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const Real saved = data[i];
            data[i] = saved + step;
            const double up = loss().item();
            data[i] = saved - step;
            const double down = loss().item();
            data[i] = saved;
            const double numeric = (up - down) / (2 * step);
            const double a = analytic[k][i];
            diff2 += (a - numeric) * (a - numeric);
            a2 += a * a;
            n2 += numeric * numeric;
        }
    }
    return std::sqrt(diff2) / std::max(std::sqrt(std::max(a2, n2)), kAbsoluteFloor);
}

namespace {

class Suite {
public:
    explicit Suite(const GradcheckOptions& o) : rng_(o.seed), step_(o.step) {}

    std::size_t pick(std::size_t lo, std::size_t hi) {
        return static_cast<std::size_t>(rng_.uniform_int(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
    }

    Shape image_shape(std::size_t max_c = 4) { return {pick(1, 2), pick(1, max_c), 2 * pick(2, 8), 2 * pick(2, 8)}; }

    Tensor randn(const Shape& s, double sigma = 1.0) {
        std::vector<Real> v(shape_numel(s));
        for (auto& x : v) x = rng_.normal(0.0, sigma);
        return Tensor(s, std::move(v));
    }

    Tensor uniform(const Shape& s, double lo, double hi) {
        std::vector<Real> v(shape_numel(s));
        for (auto& x : v) x = rng_.uniform(lo, hi);
        return Tensor(s, std::move(v));
    }

    /// Values at least 0.05 away from zero.
    Tensor away_from_zero(const Shape& s) {
        std::vector<Real> v(shape_numel(s));
        for (auto& x : v) x = (rng_.bernoulli(0.5) ? 1.0 : -1.0) * (0.05 + std::abs(rng_.normal()));
        return Tensor(s, std::move(v));
    }

    /// Pairwise distinct values on a 0.01 grid in random order.
    Tensor distinct(const Shape& s) {
        std::vector<Real> v(shape_numel(s));
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.01 * static_cast<double>(i) - 0.005 * static_cast<double>(v.size());
        for (std::size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[static_cast<std::size_t>(rng_.uniform_int(0, static_cast<std::int64_t>(i - 1)))]);
        return Tensor(s, std::move(v));
    }

    Tensor binary(const Shape& s) {
        std::vector<Real> v(shape_numel(s));
        for (auto& x : v) x = rng_.bernoulli(0.4) ? 1.0 : 0.0;
        return Tensor(s, std::move(v));
    }

    /// Checks sum(f() * R) for a fixed random R.
    void check(const std::string& name, const std::function<Tensor()>& f, const std::vector<Tensor>& inputs) {
        Shape out_shape;
        {
            NoGradGuard no_grad;
            out_shape = f().shape();
        }
        const Tensor r = randn(out_shape);
        check_scalar(name, [&] { return ops::sum(ops::mul(f(), r)); }, inputs);
    }

    void check_scalar(const std::string& name, const std::function<Tensor()>& loss, const std::vector<Tensor>& inputs) {
        std::size_t n = 0;
        for (const auto& t : inputs) n += t.numel();
        cases_.push_back({name, gradient_error(loss, inputs, step_), n});
    }

    Rng& rng() { return rng_; }
    std::vector<GradcheckCase> take() { return std::move(cases_); }

private:
    Rng rng_;
    double step_;
    std::vector<GradcheckCase> cases_;
};

void op_cases(Suite& s) {
    {
        const Shape xs = s.image_shape();
        const Tensor x = s.randn(xs), w = s.randn({s.pick(1, 4), xs[1], 3, 3}, 0.5), b = s.randn({w.dim(0)});
        s.check("conv2d 3x3 same", [&] { return ops::conv2d(x, w, b); }, {x, w, b});
    }
    {
        const Shape xs{s.pick(1, 2), s.pick(1, 4), s.pick(5, 16), s.pick(5, 16)};
        const Tensor x = s.randn(xs), w = s.randn({s.pick(1, 4), xs[1], 3, 3}, 0.5), b = s.randn({w.dim(0)});
        s.check("conv2d 3x3 stride 2", [&] { return ops::conv2d(x, w, b, 2); }, {x, w, b});
    }
    {
        const Shape xs = s.image_shape();
        const Tensor x = s.randn(xs), w = s.randn({s.pick(1, 4), xs[1], 1, 1});
        s.check("conv2d 1x1 no bias", [&] { return ops::conv2d(x, w, Tensor()); }, {x, w});
    }
    {
        const Shape xs = s.image_shape();
        const Tensor x = s.randn(xs), w = s.randn({s.pick(1, 4), xs[1], 3, 3}, 0.5), b = s.randn({w.dim(0)});
        s.check("conv2d 3x3 valid", [&] { return ops::conv2d(x, w, b, 1, Padding::explicit_(0)); }, {x, w, b});
    }
    {
        const Shape xs{2, s.pick(1, 4), 2 * s.pick(2, 8), 2 * s.pick(2, 8)};
        const Tensor x = s.randn(xs), g = s.uniform({xs[1]}, 0.5, 1.5), b = s.randn({xs[1]});
        s.check("batchnorm2d train", [&] {
            auto stats = BatchNormStats::make(xs[1]);
            return ops::batchnorm2d(x, g, b, stats, Mode::Train);
        }, {x, g, b});
    }
    {
        const Shape xs = s.image_shape();
        const Tensor x = s.randn(xs), g = s.uniform({xs[1]}, 0.5, 1.5), b = s.randn({xs[1]});
        BatchNormStats stats{s.randn({xs[1]}), s.uniform({xs[1]}, 0.5, 2.0)};
        s.check("batchnorm2d eval", [&] { return ops::batchnorm2d(x, g, b, stats, Mode::Eval); }, {x, g, b});
    }
    {
        const Tensor x = s.away_from_zero(s.image_shape());
        s.check("relu", [&] { return ops::relu(x); }, {x});
    }
    {
        const Tensor x = s.randn(s.image_shape(), 2.0);
        s.check("sigmoid", [&] { return ops::sigmoid(x); }, {x});
    }
    {
        const Tensor x = s.distinct(s.image_shape());
        s.check("maxpool2x2", [&] { return ops::maxpool2x2(x); }, {x});
    }
    {
        const Tensor x = s.randn({s.pick(1, 2), s.pick(1, 4), s.pick(1, 8), s.pick(1, 8)});
        s.check("upsample_nearest2x", [&] { return ops::upsample_nearest2x(x); }, {x});
    }
    {
        const Tensor x = s.randn({s.pick(1, 2), s.pick(1, 4), s.pick(3, 16), s.pick(3, 16)});
        s.check("subsample2x", [&] { return ops::subsample2x(x); }, {x});
    }
    {
        const Tensor x = s.randn(s.image_shape());
        const std::uint64_t seed = s.rng().next_u64();
        s.check("dropout train", [&] {
            Rng r(seed);
            return ops::dropout(x, 0.3, &r, Mode::Train);
        }, {x});
    }
    {
        const Shape sh = s.image_shape();
        const Tensor a = s.randn(sh), b = s.randn(sh), d = s.away_from_zero(sh);
        s.check("add", [&] { return ops::add(a, b); }, {a, b});
        s.check("sub", [&] { return ops::sub(a, b); }, {a, b});
        s.check("mul", [&] { return ops::mul(a, b); }, {a, b});
        s.check("div", [&] { return ops::div(a, d); }, {a, d});
        s.check("scale", [&] { return ops::scale(a, -1.7); }, {a});
        s.check("add_scalar", [&] { return ops::add_scalar(a, 0.3); }, {a});
        s.check_scalar("sum", [&] { return ops::scale(ops::sum(ops::mul(a, a)), 0.5); }, {a});
    }
    {
        const Shape sh = s.image_shape(2);
        const Tensor a = s.randn(sh), b = s.randn({sh[0], s.pick(1, 2), sh[2], sh[3]});
        s.check("concat_channels", [&] { return ops::concat_channels({a, b}); }, {a, b});
    }
    {
        const Tensor x = s.randn(s.image_shape());
        s.check("flip horizontal", [&] { return ops::flip(x, true, false); }, {x});
        s.check("flip vertical", [&] { return ops::flip(x, false, true); }, {x});
        s.check("flip both", [&] { return ops::flip(x, true, true); }, {x});
    }
    {
        const Shape sh{s.pick(1, 2), 1, 2 * s.pick(2, 8), 2 * s.pick(2, 8)};
        const Tensor p = s.uniform(sh, 0.05, 0.95), g = s.binary(sh);
        s.check_scalar("dice_loss", [&] { return dice_loss(p, g); }, {p});
        DiceConfig squared;
        squared.squared_denominator = true;
        s.check_scalar("dice_loss squared denominator", [&] { return dice_loss(p, g, squared); }, {p});
        const Tensor q = s.uniform(sh, 0.05, 0.95), h = s.binary(sh);
        const Targets t{g, h};
        s.check_scalar("total_loss", [&] { return total_loss(p, q, t); }, {p, q});
    }
}

std::vector<Tensor> with_input(const Tensor& x, const std::vector<NamedTensor>& params) {
    std::vector<Tensor> out{x};
    for (const auto& p : params) out.push_back(p.tensor);
    return out;
}

void block_cases(Suite& s) {
    struct Variant {
        const char* name;
        BlockKind kind;
        Resample resample;
    };
    const Variant variants[] = {{"block A down", BlockKind::A, Resample::Down},
                                {"block B down", BlockKind::B, Resample::Down},
                                {"block A up", BlockKind::A, Resample::Up},
                                {"block B up", BlockKind::B, Resample::Up},
                                {"block B same", BlockKind::B, Resample::None}};
    for (const auto& v : variants) {
        const std::size_t in = s.pick(1, 4);
        const std::size_t filters = s.pick(1, 4);
        Rng init(s.rng().next_u64());
        const Block block(BlockSpec{v.kind, filters, v.resample}, in, 0.2, 0.1, 1e-5, init);
        const std::size_t extent = v.resample == Resample::Up ? 2 * s.pick(1, 4) : 2 * s.pick(2, 8);
        const Tensor x = s.randn({2, in, extent, extent});
        std::vector<NamedTensor> params;
        block.collect("block", params);
        const std::uint64_t seed = s.rng().next_u64();
        s.check(v.name, [&] {
            Rng r(seed);
            return block.forward(x, ForwardContext{Mode::Train, &r});
        }, with_input(x, params));
    }
}

void model_cases(Suite& s) {
    ArchConfig arch;
    arch.depth = 2;
    arch.initial_filters = 3;
    arch.filters = {3, 4};
    arch.block_kinds = {BlockKind::A, BlockKind::B};
    // Dropout zeros whole groups of batchnorm inputs, which puts many ReLU inputs
    // on the same value; it is checked on its own and inside the blocks.
    arch.dropout_p = 0.0;
    arch.seed = s.rng().next_u64();
    TandemModel model(arch);
    const Tensor x = s.randn({2, 1, 8, 8});
    const std::uint64_t seed = s.rng().next_u64();
    const auto forward = [&] {
        Rng r(seed);
        return model.forward(x, ForwardContext{Mode::Train, &r});
    };
    const auto params = with_input(x, model.base_parameters());
    {
        Shape shape;
        {
            NoGradGuard no_grad;
            shape = forward().liver_prob.shape();
        }
        const Tensor r1 = s.randn(shape), r2 = s.randn(shape);
        s.check_scalar("tandem model", [&] {
            const auto out = forward();
            return ops::add(ops::sum(ops::mul(out.liver_prob, r1)), ops::sum(ops::mul(out.lesion_prob, r2)));
        }, params);
    }
    {
        std::vector<const LabelSlice*> labels;
        LabelSlice a(8, 8), b(8, 8);
        for (auto& v : a.data) v = static_cast<std::uint8_t>(s.pick(0, 2));
        for (auto& v : b.data) v = static_cast<std::uint8_t>(s.pick(0, 2));
        const Targets t = make_targets({&a, &b});
        s.check_scalar("tandem model total_loss", [&] {
            const auto out = forward();
            return total_loss(out.liver_prob, out.lesion_prob, t);
        }, params);
    }

    model.enable_combiner();
    auto cparams = model.combiner_parameters();
    for (auto& p : cparams)
        for (auto& v : p.tensor.mutable_data()) v = s.rng().normal(0.0, 0.3);
    std::array<SliceRepresentation, 3> reprs;
    std::vector<Tensor> inputs;
    for (auto& r : reprs) {
        r.fcn1 = s.randn({2, 3, 8, 8});
        r.fcn2 = s.randn({2, 3, 8, 8});
        inputs.push_back(r.fcn1);
        inputs.push_back(r.fcn2);
    }
    for (const auto& p : cparams) inputs.push_back(p.tensor);
    Shape shape{2, 1, 8, 8};
    const Tensor r1 = s.randn(shape), r2 = s.randn(shape);
    s.check_scalar("context combiner", [&] {
        const auto [lp, sp] = model.context_forward(reprs);
        return ops::add(ops::sum(ops::mul(lp, r1)), ops::sum(ops::mul(sp, r2)));
    }, inputs);
}

// Three levels at 16x16 reach a 2x2 bottleneck through long skips at every
// level, which the depth-2 model above does not exercise.
void deep_model_case(Suite& s) {
    ArchConfig arch;
    arch.depth = 3;
    arch.initial_filters = 3;
    arch.filters = {3, 4, 4};
    arch.block_kinds = {BlockKind::A, BlockKind::B, BlockKind::B};
    arch.dropout_p = 0.0;
    arch.seed = s.rng().next_u64();
    const TandemModel model(arch);
    const Tensor x = s.randn({2, 1, 16, 16});
    const Tensor r1 = s.randn({2, 1, 16, 16}), r2 = s.randn({2, 1, 16, 16});
    s.check_scalar("tandem model depth 3", [&] {
        const auto out = model.forward(x, ForwardContext{Mode::Train, nullptr});
        return ops::add(ops::sum(ops::mul(out.liver_prob, r1)), ops::sum(ops::mul(out.lesion_prob, r2)));
    }, with_input(x, model.base_parameters()));
}

}  // namespace

std::vector<GradcheckCase> run_gradcheck_suite(const GradcheckOptions& options) {
    PrecisionScope precision_scope(Precision::Double);
    Suite s(options);
    op_cases(s);
    block_cases(s);
    model_cases(s);
    deep_model_case(s);
    return s.take();
}

}  // namespace tandem
