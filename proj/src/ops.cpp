#include "tandem/ops.hpp"

#include <algorithm>
#include <cmath>

#include "tandem/error.hpp"

namespace tandem {

BatchNormStats BatchNormStats::make(std::size_t channels) {
    return BatchNormStats{Tensor::zeros({channels}), Tensor::ones({channels})};
}

namespace ops {

namespace {

using detail::TensorImpl;

/// Gradient buffer of the i-th recorded input, or empty if it needs none.
std::span<Real> input_grad(const TensorImpl& out, std::size_t i) {
    TensorImpl* in = out.node->inputs[i].get();
    if (!in || !in->requires_grad) return {};
    return in->grad_buffer();
}

const std::vector<Real>& input_data(const TensorImpl& out, std::size_t i) {
    return out.node->inputs[i]->data;
}

struct Dims4 {
    std::size_t n, c, h, w;
};

Dims4 dims4(const Tensor& t, const char* what) {
    if (t.rank() != 4)
        throw DimensionError(std::string(what) + " expects a 4-D tensor, got " + shape_string(t.shape()));
    return {t.dim(0), t.dim(1), t.dim(2), t.dim(3)};
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
}

// Four-way split accumulator keeps the reduction vectorisable and ordered.
inline Real dot_strided(const Real* a, const Real* b, std::size_t n, std::size_t stride_b) {
    Real s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[(i)*stride_b];
        s1 += a[i + 1] * b[(i + 1) * stride_b];
        s2 += a[i + 2] * b[(i + 2) * stride_b];
        s3 += a[i + 3] * b[(i + 3) * stride_b];
    }
    for (; i < n; ++i) s0 += a[i] * b[i * stride_b];
    return (s0 + s1) + (s2 + s3);
}

// Range of output columns whose input column ox*stride + k - pad lies in [0, in).
inline std::pair<long, long> valid_range(long out, long in, long stride, long k, long pad) {
    long lo = 0;
    while (lo < out && lo * stride + k - pad < 0) ++lo;
    long hi = out - 1;
    while (hi >= lo && hi * stride + k - pad > in - 1) --hi;
    return {lo, hi};
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, Padding padding) {
    const auto [n, c, h, w] = dims4(input, "conv2d input");
    const auto [o, ci, kh, kw] = dims4(weight, "conv2d weight");
    if (ci != c)
        throw DimensionError("conv2d: input has " + std::to_string(c) + " channels but weight expects " +
                             std::to_string(ci));
    if (stride < 1) throw ConfigError("conv2d: stride must be positive");
    if (bias.defined() && bias.shape() != Shape{o})
        throw DimensionError("conv2d: bias shape " + shape_string(bias.shape()) + " does not match " +
                             std::to_string(o) + " output channels");
    const long ph = padding.is_same() ? static_cast<long>(kh - 1) / 2 : padding.amount;
    const long pw = padding.is_same() ? static_cast<long>(kw - 1) / 2 : padding.amount;
    const long s = stride;
    if (static_cast<long>(h) + 2 * ph < static_cast<long>(kh) || static_cast<long>(w) + 2 * pw < static_cast<long>(kw))
        throw DimensionError("conv2d: kernel larger than padded input");
    const std::size_t ho = static_cast<std::size_t>((static_cast<long>(h) + 2 * ph - static_cast<long>(kh)) / s + 1);
    const std::size_t wo = static_cast<std::size_t>((static_cast<long>(w) + 2 * pw - static_cast<long>(kw)) / s + 1);

    const Real* x = input.data().data();
    const Real* wt = weight.data().data();
    std::vector<Real> out(n * o * ho * wo, 0.0);

    std::vector<std::pair<long, long>> xr(kw), yr(kh);
    for (std::size_t kx = 0; kx < kw; ++kx) xr[kx] = valid_range(static_cast<long>(wo), static_cast<long>(w), s, static_cast<long>(kx), pw);
    for (std::size_t ky = 0; ky < kh; ++ky) yr[ky] = valid_range(static_cast<long>(ho), static_cast<long>(h), s, static_cast<long>(ky), ph);

    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t oc = 0; oc < o; ++oc) {
            Real* op = out.data() + (b * o + oc) * ho * wo;
            if (bias.defined()) std::fill(op, op + ho * wo, bias.data()[oc]);
            for (std::size_t ic = 0; ic < c; ++ic) {
                const Real* ip = x + (b * c + ic) * h * w;
                const Real* wp = wt + (oc * c + ic) * kh * kw;
                for (std::size_t ky = 0; ky < kh; ++ky) {
                    for (std::size_t kx = 0; kx < kw; ++kx) {
                        const Real wv = wp[ky * kw + kx];
                        const auto [x0, x1] = xr[kx];
                        for (long oy = yr[ky].first; oy <= yr[ky].second; ++oy) {
                            const long iy = oy * s + static_cast<long>(ky) - ph;
                            Real* orow = op + oy * static_cast<long>(wo);
                            const Real* irow = ip + iy * static_cast<long>(w) + static_cast<long>(kx) - pw;
                            if (s == 1) {
                                for (long ox = x0; ox <= x1; ++ox) orow[ox] += wv * irow[ox];
                            } else {
                                for (long ox = x0; ox <= x1; ++ox) orow[ox] += wv * irow[ox * s];
                            }
                        }
                    }
                }
            }
        }
    }

    std::vector<Tensor> inputs{input, weight};
    if (bias.defined()) inputs.push_back(bias);
    const bool has_bias = bias.defined();
    auto fn = [=](const TensorImpl& res) {
        const Real* g = res.grad.data();
        const auto& xd = input_data(res, 0);
        const auto& wd = input_data(res, 1);
        auto gx = input_grad(res, 0);
        auto gw = input_grad(res, 1);
        auto gb = has_bias ? input_grad(res, 2) : std::span<Real>{};
        for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t oc = 0; oc < o; ++oc) {
                const Real* gp = g + (b * o + oc) * ho * wo;
                if (!gb.empty()) {
                    Real acc = 0;
                    for (std::size_t i = 0; i < ho * wo; ++i) acc += gp[i];
                    gb[oc] += acc;
                }
                for (std::size_t ic = 0; ic < c; ++ic) {
                    const Real* ip = xd.data() + (b * c + ic) * h * w;
                    Real* gip = gx.empty() ? nullptr : gx.data() + (b * c + ic) * h * w;
                    const std::size_t widx = (oc * c + ic) * kh * kw;
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const Real wv = wd[widx + ky * kw + kx];
                            const auto [x0, x1] = xr[kx];
                            if (x1 < x0) continue;
                            Real wacc = 0;
                            for (long oy = yr[ky].first; oy <= yr[ky].second; ++oy) {
                                const long iy = oy * s + static_cast<long>(ky) - ph;
                                const Real* grow = gp + oy * static_cast<long>(wo);
                                const long ioff = iy * static_cast<long>(w) + static_cast<long>(kx) - pw;
                                if (!gw.empty())
                                    wacc += dot_strided(grow + x0, ip + ioff + x0 * s,
                                                        static_cast<std::size_t>(x1 - x0 + 1),
                                                        static_cast<std::size_t>(s));
                                if (gip) {
                                    Real* girow = gip + ioff;
                                    if (s == 1) {
                                        for (long ox = x0; ox <= x1; ++ox) girow[ox] += wv * grow[ox];
                                    } else {
                                        for (long ox = x0; ox <= x1; ++ox) girow[ox * s] += wv * grow[ox];
                                    }
                                }
                            }
                            if (!gw.empty()) gw[widx + ky * kw + kx] += wacc;
                        }
                    }
                }
            }
        }
    };
    return Tensor::make_result({n, o, ho, wo}, std::move(out), std::move(inputs), fn);
}

Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                   Mode mode, double momentum, double eps) {
    if (!(eps > 0)) throw ConfigError("batchnorm2d: eps must be positive");
    if (momentum < 0 || momentum > 1) throw ConfigError("batchnorm2d: momentum must lie in [0, 1]");
    const auto [n, c, h, w] = dims4(input, "batchnorm2d");
    if (gamma.shape() != Shape{c} || beta.shape() != Shape{c})
        throw DimensionError("batchnorm2d: gamma/beta must have " + std::to_string(c) + " entries");
    if (stats.running_mean.shape() != Shape{c} || stats.running_var.shape() != Shape{c})
        throw DimensionError("batchnorm2d: running statistics must have " + std::to_string(c) + " entries");

    const std::size_t plane = h * w;
    const std::size_t m = n * plane;
    const Real* x = input.data().data();
    std::vector<Real> out(input.numel());
    std::vector<Real> xhat(input.numel());
    std::vector<Real> invstd(c);

    for (std::size_t ch = 0; ch < c; ++ch) {
        Real mean, var;
        if (mode == Mode::Train) {
            Real acc = 0;
            for (std::size_t b = 0; b < n; ++b) {
                const Real* p = x + (b * c + ch) * plane;
                for (std::size_t i = 0; i < plane; ++i) acc += p[i];
            }
            mean = acc / static_cast<Real>(m);
            Real sq = 0;
            for (std::size_t b = 0; b < n; ++b) {
                const Real* p = x + (b * c + ch) * plane;
                for (std::size_t i = 0; i < plane; ++i) sq += (p[i] - mean) * (p[i] - mean);
            }
            var = sq / static_cast<Real>(m);
            auto rm = stats.running_mean.mutable_data();
            auto rv = stats.running_var.mutable_data();
            const Real unbiased = m > 1 ? sq / static_cast<Real>(m - 1) : var;
            rm[ch] = (1 - momentum) * rm[ch] + momentum * mean;
            rv[ch] = (1 - momentum) * rv[ch] + momentum * unbiased;
            if (precision() == Precision::Single) {
                rm[ch] = static_cast<float>(rm[ch]);
                rv[ch] = static_cast<float>(rv[ch]);
            }
        } else {
            mean = stats.running_mean.data()[ch];
            var = stats.running_var.data()[ch];
        }
        invstd[ch] = 1.0 / std::sqrt(var + eps);
        const Real gm = gamma.data()[ch], bt = beta.data()[ch];
        for (std::size_t b = 0; b < n; ++b) {
            const std::size_t off = (b * c + ch) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                const Real xh = (x[off + i] - mean) * invstd[ch];
                xhat[off + i] = xh;
                out[off + i] = gm * xh + bt;
            }
        }
    }

    const bool train = mode == Mode::Train;
    auto fn = [=, xhat = std::move(xhat), invstd = std::move(invstd)](const TensorImpl& res) {
        const Real* g = res.grad.data();
        const auto& gmd = input_data(res, 1);
        auto gx = input_grad(res, 0);
        auto gg = input_grad(res, 1);
        auto gbt = input_grad(res, 2);
        for (std::size_t ch = 0; ch < c; ++ch) {
            Real sum_g = 0, sum_gx = 0;
            for (std::size_t b = 0; b < n; ++b) {
                const std::size_t off = (b * c + ch) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    sum_g += g[off + i];
                    sum_gx += g[off + i] * xhat[off + i];
                }
            }
            if (!gg.empty()) gg[ch] += sum_gx;
            if (!gbt.empty()) gbt[ch] += sum_g;
            if (gx.empty()) continue;
            const Real k = gmd[ch] * invstd[ch];
            const Real inv_m = 1.0 / static_cast<Real>(m);
            for (std::size_t b = 0; b < n; ++b) {
                const std::size_t off = (b * c + ch) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    if (train)
                        gx[off + i] += k * (g[off + i] - inv_m * sum_g - xhat[off + i] * inv_m * sum_gx);
                    else
                        gx[off + i] += k * g[off + i];
                }
            }
        }
    };
    return Tensor::make_result(input.shape(), std::move(out), {input, gamma, beta}, std::move(fn));
}

Tensor relu(const Tensor& x) {
    std::vector<Real> out(x.numel());
    const auto xd = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] > 0 ? xd[i] : 0.0;
    return Tensor::make_result(x.shape(), std::move(out), {x}, [](const TensorImpl& res) {
        auto gx = input_grad(res, 0);
        const auto& xd = input_data(res, 0);
        for (std::size_t i = 0; i < gx.size(); ++i)
            if (xd[i] > 0) gx[i] += res.grad[i];
    });
}

Tensor sigmoid(const Tensor& x) {
    // Kept strictly inside (0, 1) even where exp saturates; both bounds are
    // exact floats, so single precision cannot round onto 0 or 1 either.
    constexpr Real kFloor = 0x1.0p-24;
    std::vector<Real> out(x.numel());
    const auto xd = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const Real v = xd[i];
        if (v >= 0) {
            out[i] = 1.0 / (1.0 + std::exp(-v));
        } else {
            const Real e = std::exp(v);
            out[i] = e / (1.0 + e);
        }
        out[i] = std::clamp(out[i], kFloor, 1.0 - kFloor);
    }
    return Tensor::make_result(x.shape(), std::move(out), {x}, [](const TensorImpl& res) {
        auto gx = input_grad(res, 0);
        for (std::size_t i = 0; i < gx.size(); ++i) {
            const Real y = res.data[i];
            gx[i] += res.grad[i] * y * (1.0 - y);
        }
    });
}

Tensor maxpool2x2(const Tensor& x) {
    const auto [n, c, h, w] = dims4(x, "maxpool2x2");
    if (h % 2 || w % 2)
        throw DimensionError("maxpool2x2 requires even spatial extents, got " + std::to_string(h) + "x" +
                             std::to_string(w));
    const std::size_t ho = h / 2, wo = w / 2;
    std::vector<Real> out(n * c * ho * wo);
    std::vector<std::size_t> arg(out.size());
    const auto xd = x.data();
    for (std::size_t p = 0; p < n * c; ++p) {
        for (std::size_t y = 0; y < ho; ++y) {
            for (std::size_t xx = 0; xx < wo; ++xx) {
                const std::size_t base = p * h * w + 2 * y * w + 2 * xx;
                const std::size_t cand[4] = {base, base + 1, base + w, base + w + 1};
                std::size_t best = cand[0];
                for (int k = 1; k < 4; ++k)
                    if (xd[cand[k]] > xd[best]) best = cand[k];
                const std::size_t oi = p * ho * wo + y * wo + xx;
                out[oi] = xd[best];
                arg[oi] = best;
            }
        }
    }
    return Tensor::make_result({n, c, ho, wo}, std::move(out), {x},
                               [arg = std::move(arg)](const TensorImpl& res) {
                                   auto gx = input_grad(res, 0);
                                   for (std::size_t i = 0; i < arg.size(); ++i) gx[arg[i]] += res.grad[i];
                               });
}

Tensor upsample_nearest2x(const Tensor& x) {
    const auto [n, c, h, w] = dims4(x, "upsample_nearest2x");
    const std::size_t ho = 2 * h, wo = 2 * w;
    std::vector<Real> out(n * c * ho * wo);
    const auto xd = x.data();
    for (std::size_t p = 0; p < n * c; ++p)
        for (std::size_t y = 0; y < ho; ++y)
            for (std::size_t xx = 0; xx < wo; ++xx)
                out[p * ho * wo + y * wo + xx] = xd[p * h * w + (y / 2) * w + xx / 2];
    return Tensor::make_result({n, c, ho, wo}, std::move(out), {x}, [=](const TensorImpl& res) {
        auto gx = input_grad(res, 0);
        for (std::size_t p = 0; p < n * c; ++p)
            for (std::size_t y = 0; y < ho; ++y)
                for (std::size_t xx = 0; xx < wo; ++xx)
                    gx[p * h * w + (y / 2) * w + xx / 2] += res.grad[p * ho * wo + y * wo + xx];
    });
}

Tensor subsample2x(const Tensor& x) {
    const auto [n, c, h, w] = dims4(x, "subsample2x");
    const std::size_t ho = (h + 1) / 2, wo = (w + 1) / 2;
    std::vector<Real> out(n * c * ho * wo);
    const auto xd = x.data();
    for (std::size_t p = 0; p < n * c; ++p)
        for (std::size_t y = 0; y < ho; ++y)
            for (std::size_t xx = 0; xx < wo; ++xx) out[p * ho * wo + y * wo + xx] = xd[p * h * w + 2 * y * w + 2 * xx];
    return Tensor::make_result({n, c, ho, wo}, std::move(out), {x}, [=](const TensorImpl& res) {
        auto gx = input_grad(res, 0);
        for (std::size_t p = 0; p < n * c; ++p)
            for (std::size_t y = 0; y < ho; ++y)
                for (std::size_t xx = 0; xx < wo; ++xx)
                    gx[p * h * w + 2 * y * w + 2 * xx] += res.grad[p * ho * wo + y * wo + xx];
    });
}

Tensor dropout(const Tensor& x, double p, Rng* rng, Mode mode) {
    if (!(p >= 0 && p < 1)) throw ConfigError("dropout: rate must lie in [0, 1)");
    if (mode == Mode::Eval || p == 0) return x;
    if (!rng) throw UsageError("dropout in train mode needs a random stream");
    std::vector<Real> mask(x.numel());
    const Real keep = 1.0 / (1.0 - p);
    for (Real& m : mask) m = rng->uniform() >= p ? keep : 0.0;
    std::vector<Real> out(x.numel());
    const auto xd = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * mask[i];
    return Tensor::make_result(x.shape(), std::move(out), {x}, [mask = std::move(mask)](const TensorImpl& res) {
        auto gx = input_grad(res, 0);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += res.grad[i] * mask[i];
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<Real> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](const TensorImpl& res) {
        for (std::size_t k = 0; k < 2; ++k) {
            auto g = input_grad(res, k);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += res.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<Real> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](const TensorImpl& res) {
        auto ga = input_grad(res, 0);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += res.grad[i];
        auto gb = input_grad(res, 1);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= res.grad[i];
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<Real> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](const TensorImpl& res) {
        const auto& ad = input_data(res, 0);
        const auto& bd = input_data(res, 1);
        auto ga = input_grad(res, 0);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += res.grad[i] * bd[i];
        auto gb = input_grad(res, 1);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += res.grad[i] * ad[i];
    });
}

Tensor div(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "div");
    std::vector<Real> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] / b.data()[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](const TensorImpl& res) {
        const auto& bd = input_data(res, 1);
        auto ga = input_grad(res, 0);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += res.grad[i] / bd[i];
        auto gb = input_grad(res, 1);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= res.grad[i] * res.data[i] / bd[i];
    });
}

Tensor scale(const Tensor& x, Real factor) {
    std::vector<Real> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * factor;
    return Tensor::make_result(x.shape(), std::move(out), {x}, [factor](const TensorImpl& res) {
        auto g = input_grad(res, 0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += res.grad[i] * factor;
    });
}

Tensor add_scalar(const Tensor& x, Real c) {
    std::vector<Real> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] + c;
    return Tensor::make_result(x.shape(), std::move(out), {x}, [](const TensorImpl& res) {
        auto g = input_grad(res, 0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += res.grad[i];
    });
}

Tensor sum(const Tensor& x) {
    Real acc = 0;
    for (Real v : x.data()) acc += v;
    return Tensor::make_result({1}, {acc}, {x}, [](const TensorImpl& res) {
        auto g = input_grad(res, 0);
        const Real gv = res.grad[0];
        for (Real& v : g) v += gv;
    });
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_channels: no inputs");
    const auto d0 = dims4(parts[0], "concat_channels");
    std::vector<std::size_t> channels;
    std::size_t total = 0;
    for (const auto& t : parts) {
        const auto d = dims4(t, "concat_channels");
        if (d.n != d0.n || d.h != d0.h || d.w != d0.w)
            throw DimensionError("concat_channels: incompatible shapes " + shape_string(parts[0].shape()) +
                                 " and " + shape_string(t.shape()));
        channels.push_back(d.c);
        total += d.c;
    }
    const std::size_t plane = d0.h * d0.w;
    std::vector<Real> out(d0.n * total * plane);
    for (std::size_t b = 0; b < d0.n; ++b) {
        std::size_t coff = 0;
        for (std::size_t k = 0; k < parts.size(); ++k) {
            const Real* src = parts[k].data().data() + b * channels[k] * plane;
            std::copy(src, src + channels[k] * plane, out.data() + (b * total + coff) * plane);
            coff += channels[k];
        }
    }
    const std::size_t n = d0.n;
    return Tensor::make_result({n, total, d0.h, d0.w}, std::move(out), parts,
                               [=](const TensorImpl& res) {
                                   for (std::size_t b = 0; b < n; ++b) {
                                       std::size_t coff = 0;
                                       for (std::size_t k = 0; k < channels.size(); ++k) {
                                           auto g = input_grad(res, k);
                                           if (!g.empty()) {
                                               const Real* src = res.grad.data() + (b * total + coff) * plane;
                                               Real* dst = g.data() + b * channels[k] * plane;
                                               for (std::size_t i = 0; i < channels[k] * plane; ++i) dst[i] += src[i];
                                           }
                                           coff += channels[k];
                                       }
                                   }
                               });
}

Tensor flip(const Tensor& x, bool horizontal, bool vertical) {
    if (x.rank() < 2) throw DimensionError("flip expects at least 2 dimensions");
    const std::size_t h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
    const std::size_t planes = x.numel() / (h * w);
    std::vector<std::size_t> src(x.numel());
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx) {
                const std::size_t sy = vertical ? h - 1 - y : y;
                const std::size_t sx = horizontal ? w - 1 - xx : xx;
                src[p * h * w + y * w + xx] = p * h * w + sy * w + sx;
            }
    std::vector<Real> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[src[i]];
    return Tensor::make_result(x.shape(), std::move(out), {x}, [src = std::move(src)](const TensorImpl& res) {
        auto g = input_grad(res, 0);
        for (std::size_t i = 0; i < g.size(); ++i) g[src[i]] += res.grad[i];
    });
}

}  // namespace ops
}  // namespace tandem
