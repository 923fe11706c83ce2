#include "tandem/inference.hpp"

#include <algorithm>
#include <numeric>
#include <thread>

#include "tandem/error.hpp"
#include "tandem/ops.hpp"

namespace tandem {

std::pair<Tensor, Tensor> SlicePredictor::predict(const Tensor& slice) const {
    ++calls_;
    return do_predict(slice);
}

SliceRepresentation SlicePredictor::features(const Tensor& slice) const {
    ++calls_;
    return do_features(slice);
}

std::pair<Tensor, Tensor> SlicePredictor::predict_context(const std::array<SliceRepresentation, 3>& reprs) const {
    return do_predict_context(reprs);
}

SliceRepresentation SlicePredictor::do_features(const Tensor&) const {
    throw UsageError("this predictor exposes no representations");
}

std::pair<Tensor, Tensor> SlicePredictor::do_predict_context(const std::array<SliceRepresentation, 3>&) const {
    throw UsageError("this predictor has no cross-slice combiner");
}

std::pair<Tensor, Tensor> TandemPredictor::do_predict(const Tensor& slice) const {
    NoGradGuard no_grad;
    auto out = model_.forward(slice, ForwardContext{Mode::Eval, nullptr});
    return {out.liver_prob, out.lesion_prob};
}

SliceRepresentation TandemPredictor::do_features(const Tensor& slice) const {
    NoGradGuard no_grad;
    return model_.forward(slice, ForwardContext{Mode::Eval, nullptr}).repr;
}

std::pair<Tensor, Tensor> TandemPredictor::do_predict_context(const std::array<SliceRepresentation, 3>& reprs) const {
    NoGradGuard no_grad;
    return model_.context_forward(reprs);
}

namespace {

struct Flip {
    bool h, v;
};
constexpr std::array<Flip, 4> kFlips{{{false, false}, {true, false}, {false, true}, {true, true}}};

Tensor slice_tensor(const ImageSlice& s) {
    return Tensor(Shape{1, 1, s.h, s.w}, std::vector<Real>(s.data.begin(), s.data.end()));
}

Tensor flipped(const Tensor& t, Flip f) {
    if (!f.h && !f.v) return t;
    return ops::flip(t, f.h, f.v);
}

void accumulate(std::vector<double>& acc, const Tensor& t) {
    const auto d = t.data();
    if (d.size() != acc.size()) throw DimensionError("predictor returned an unexpected extent");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += d[i];
}

ImageSlice to_slice(const std::vector<double>& acc, std::size_t h, std::size_t w, double factor) {
    ImageSlice s(h, w);
    for (std::size_t i = 0; i < acc.size(); ++i) s.data[i] = static_cast<float>(acc[i] * factor);
    return s;
}

void check_extent(const SlicePredictor& model, std::size_t h, std::size_t w) {
    const std::size_t m = model.required_multiple();
    if (h % m || w % m)
        throw DimensionError("slice extent " + std::to_string(h) + "x" + std::to_string(w) +
                             " is not a multiple of " + std::to_string(m));
}

/// Runs fn(z) for z in [0, n) on `jobs` threads; each z is handled exactly once.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn fn) {
    jobs = std::max<std::size_t>(1, std::min(jobs, n));
    if (jobs == 1) {
        for (std::size_t z = 0; z < n; ++z) fn(z);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(jobs);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t)
        pool.emplace_back([&, t] {
            try {
                for (std::size_t z = next++; z < n; z = next++) fn(z);
            } catch (...) {
                errors[t] = std::current_exception();
                next = n;
            }
        });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::size_t reflect_index(long i, std::size_t n) {
    if (n == 1) return 0;
    const long period = 2 * static_cast<long>(n - 1);
    long k = i % period;
    if (k < 0) k += period;
    return static_cast<std::size_t>(k <= static_cast<long>(n - 1) ? k : period - k);
}

}  // namespace

std::pair<ImageSlice, ImageSlice> predict_slice_tta(const SlicePredictor& model, const ImageSlice& scaled) {
    check_extent(model, scaled.h, scaled.w);
    const Tensor x = slice_tensor(scaled);
    std::vector<double> liver(scaled.data.size(), 0.0), lesion(scaled.data.size(), 0.0);
    for (const Flip f : kFlips) {
        const auto [lp, sp] = model.predict(flipped(x, f));
        accumulate(liver, flipped(lp, f));
        accumulate(lesion, flipped(sp, f));
    }
    return {to_slice(liver, scaled.h, scaled.w, 0.25), to_slice(lesion, scaled.h, scaled.w, 0.25)};
}

Volume pad_reflect(const Volume& v, std::size_t m) {
    const std::size_t h = (v.dims.h + m - 1) / m * m, w = (v.dims.w + m - 1) / m * m;
    if (h == v.dims.h && w == v.dims.w) return v;
    Volume out(Dims{v.dims.d, h, w}, v.spacing);
    for (std::size_t z = 0; z < v.dims.d; ++z)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                out.at(z, y, x) = v.at(z, reflect_index(static_cast<long>(y), v.dims.h),
                                       reflect_index(static_cast<long>(x), v.dims.w));
    return out;
}

Volume crop(const Volume& v, std::size_t h, std::size_t w) {
    if (h > v.dims.h || w > v.dims.w) throw DimensionError("crop extent exceeds the volume");
    if (h == v.dims.h && w == v.dims.w) return v;
    Volume out(Dims{v.dims.d, h, w}, v.spacing);
    for (std::size_t z = 0; z < v.dims.d; ++z)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) out.at(z, y, x) = v.at(z, y, x);
    return out;
}

namespace {

using SliceProbs = std::pair<std::vector<double>, std::vector<double>>;

/// Per-slice TTA sums (not yet divided) of one model over a padded volume.
std::vector<SliceProbs> model_sums(const SlicePredictor& model, const Volume& padded, const PredictOptions& options) {
    const auto d = padded.dims;
    const std::size_t plane = d.plane();
    std::vector<SliceProbs> sums(d.d, {std::vector<double>(plane, 0.0), std::vector<double>(plane, 0.0)});
    const auto input = [&](std::size_t z) { return slice_tensor(extract_slice(padded, z)); };
    const std::size_t flips = options.tta ? kFlips.size() : 1;
    for (std::size_t fi = 0; fi < flips; ++fi) {
        const Flip f = kFlips[fi];
        if (!options.context) {
            parallel_for(d.d, options.jobs, [&](std::size_t z) {
                const auto [lp, sp] = model.predict(flipped(input(z), f));
                accumulate(sums[z].first, flipped(lp, f));
                accumulate(sums[z].second, flipped(sp, f));
            });
            continue;
        }
        std::vector<SliceRepresentation> reprs(d.d);
        parallel_for(d.d, options.jobs, [&](std::size_t z) { reprs[z] = model.features(flipped(input(z), f)); });
        parallel_for(d.d, options.jobs, [&](std::size_t z) {
            const auto nb = context_neighbours(z, d.d);
            const auto [lp, sp] = model.predict_context({reprs[nb[0]], reprs[nb[1]], reprs[nb[2]]});
            accumulate(sums[z].first, flipped(lp, f));
            accumulate(sums[z].second, flipped(sp, f));
        });
    }
    const double factor = 1.0 / static_cast<double>(flips);
    for (auto& [l, s] : sums) {
        for (double& v : l) v *= factor;
        for (double& v : s) v *= factor;
    }
    return sums;
}

}  // namespace

PredictionVolume predict_volume(const std::vector<const SlicePredictor*>& models, const Volume& raw,
                                const PredictOptions& options) {
    if (models.empty()) throw UsageError("predict_volume needs at least one model");
    validate_volume(raw);
    std::size_t m = 1;
    for (const auto* model : models) {
        if (options.context && !model->has_context())
            throw UsageError("context prediction requested but a model has no cross-slice combiner");
        m = std::lcm(m, model->required_multiple());
    }
    const Volume padded = pad_reflect(scale_intensities(raw), m);
    const auto d = padded.dims;

    std::vector<SliceProbs> total(d.d, {std::vector<double>(d.plane(), 0.0), std::vector<double>(d.plane(), 0.0)});
    for (const auto* model : models) {
        const auto sums = model_sums(*model, padded, options);
        for (std::size_t z = 0; z < d.d; ++z)
            for (std::size_t i = 0; i < d.plane(); ++i) {
                total[z].first[i] += sums[z].first[i];
                total[z].second[i] += sums[z].second[i];
            }
    }
    const double inv = 1.0 / static_cast<double>(models.size());
    Volume liver(d, raw.spacing), lesion(d, raw.spacing);
    for (std::size_t z = 0; z < d.d; ++z)
        for (std::size_t i = 0; i < d.plane(); ++i) {
            liver.data[z * d.plane() + i] = static_cast<float>(total[z].first[i] * inv);
            lesion.data[z * d.plane() + i] = static_cast<float>(total[z].second[i] * inv);
        }
    return {crop(liver, raw.dims.h, raw.dims.w), crop(lesion, raw.dims.h, raw.dims.w)};
}

std::vector<TandemModel> load_ensemble(const std::vector<std::string>& base_paths,
                                       const std::vector<std::string>& context_paths) {
    if (base_paths.empty()) throw UsageError("at least one checkpoint is required");
    if (!context_paths.empty() && context_paths.size() != base_paths.size())
        throw UsageError("give one context checkpoint per base checkpoint (" + std::to_string(base_paths.size()) +
                         " bases, " + std::to_string(context_paths.size()) + " context)");
    std::vector<TandemModel> models;
    models.reserve(base_paths.size());
    for (std::size_t i = 0; i < base_paths.size(); ++i) {
        models.push_back(model_from_checkpoint(load_checkpoint(base_paths[i])));
        if (context_paths.empty()) continue;
        const Checkpoint ctx = load_checkpoint(context_paths[i]);
        if (ctx.meta.kind != CheckpointKind::Context)
            throw UsageError(context_paths[i] + " is not a context checkpoint");
        if (!(ctx.arch == models.back().config()))
            throw Error("checkpoint/architecture mismatch: context checkpoint " + context_paths[i] +
                        " was trained for a different architecture");
        load_into(models.back(), ctx);
    }
    return models;
}

}  // namespace tandem
