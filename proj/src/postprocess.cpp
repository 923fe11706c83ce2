#include "tandem/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>

#include "tandem/error.hpp"

namespace tandem {

using nlohmann::json;

void PostprocessConfig::validate() const {
    if (!(threshold > 0 && threshold < 1)) throw ConfigError("threshold must lie in (0, 1)");
    if (!(liver_dilation_mm >= 0)) throw ConfigError("liver_dilation_mm must be non-negative");
    if (connectivity != 6 && connectivity != 26) throw ConfigError("connectivity must be 6 or 26");
}

std::string PostprocessConfig::to_json() const {
    return json{{"threshold", threshold}, {"liver_dilation_mm", liver_dilation_mm}, {"connectivity", connectivity}}.dump(2);
}

PostprocessConfig PostprocessConfig::from_json(const std::string& text) {
    PostprocessConfig c;
    try {
        const json j = json::parse(text);
        c.threshold = j.value("threshold", c.threshold);
        c.liver_dilation_mm = j.value("liver_dilation_mm", c.liver_dilation_mm);
        c.connectivity = j.value("connectivity", c.connectivity);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("postprocess config: ") + e.what());
    }
    c.validate();
    return c;
}

Mask threshold_mask(const Volume& prob, double threshold) {
    Mask m(prob.dims, prob.spacing, 0);
    for (std::size_t i = 0; i < prob.data.size(); ++i) m.data[i] = prob.data[i] >= threshold ? 1 : 0;
    return m;
}

namespace {

struct Offset {
    int dz, dy, dx;
};

std::vector<Offset> neighbourhood(int connectivity) {
    if (connectivity != 6 && connectivity != 26) throw ConfigError("connectivity must be 6 or 26");
    std::vector<Offset> out;
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int manhattan = std::abs(dz) + std::abs(dy) + std::abs(dx);
                if (manhattan == 0 || (connectivity == 6 && manhattan != 1)) continue;
                out.push_back({dz, dy, dx});
            }
    return out;
}

// Lower envelope of parabolas s^2 (q - p)^2 + f(p) along one line.
void distance_1d(const double* f, double* out, std::size_t n, double s2, std::vector<std::size_t>& v,
                 std::vector<double>& z) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    v.resize(n);
    z.resize(n + 1);
    std::size_t k = 0;
    bool any = false;
    for (std::size_t q = 0; q < n; ++q) {
        if (!std::isfinite(f[q])) continue;
        const double fq = f[q] + s2 * static_cast<double>(q) * static_cast<double>(q);
        if (!any) {
            v[0] = q;
            z[0] = -inf;
            z[1] = inf;
            any = true;
            continue;
        }
        double sep;
        while (true) {
            const double p = static_cast<double>(v[k]);
            const double fp = f[v[k]] + s2 * p * p;
            sep = (fq - fp) / (2.0 * s2 * (static_cast<double>(q) - p));
            if (sep <= z[k] && k > 0) {
                --k;
                continue;
            }
            break;
        }
        ++k;
        v[k] = q;
        z[k] = sep;
        z[k + 1] = inf;
    }
    if (!any) {
        std::fill(out, out + n, inf);
        return;
    }
    k = 0;
    for (std::size_t q = 0; q < n; ++q) {
        while (z[k + 1] < static_cast<double>(q)) ++k;
        const double d = static_cast<double>(q) - static_cast<double>(v[k]);
        out[q] = s2 * d * d + f[v[k]];
    }
}

}  // namespace

ComponentLabels label_components(const Mask& mask, int connectivity) {
    const auto nbrs = neighbourhood(connectivity);
    const auto d = mask.dims;
    ComponentLabels out;
    out.labels.assign(mask.data.size(), 0);
    std::vector<std::size_t> stack;
    for (std::size_t start = 0; start < mask.data.size(); ++start) {
        if (!mask.data[start] || out.labels[start]) continue;
        const auto label = static_cast<std::uint32_t>(out.sizes.size() + 1);
        std::size_t size = 0;
        out.labels[start] = label;
        stack.push_back(start);
        while (!stack.empty()) {
            const std::size_t i = stack.back();
            stack.pop_back();
            ++size;
            const long z = static_cast<long>(i / d.plane()), y = static_cast<long>((i / d.w) % d.h),
                       x = static_cast<long>(i % d.w);
            for (const auto& o : nbrs) {
                const long nz = z + o.dz, ny = y + o.dy, nx = x + o.dx;
                if (nz < 0 || ny < 0 || nx < 0 || nz >= static_cast<long>(d.d) || ny >= static_cast<long>(d.h) ||
                    nx >= static_cast<long>(d.w))
                    continue;
                const std::size_t j = mask.index(static_cast<std::size_t>(nz), static_cast<std::size_t>(ny),
                                                 static_cast<std::size_t>(nx));
                if (mask.data[j] && !out.labels[j]) {
                    out.labels[j] = label;
                    stack.push_back(j);
                }
            }
        }
        out.sizes.push_back(size);
    }
    return out;
}

Mask largest_component(const Mask& mask, int connectivity) {
    const auto comps = label_components(mask, connectivity);
    Mask out(mask.dims, mask.spacing, 0);
    if (comps.sizes.empty()) return out;
    const auto best = static_cast<std::uint32_t>(
        std::max_element(comps.sizes.begin(), comps.sizes.end()) - comps.sizes.begin() + 1);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = comps.labels[i] == best ? 1 : 0;
    return out;
}

std::vector<double> squared_distance_mm(const Mask& mask, const Spacing& spacing) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    const auto d = mask.dims;
    std::vector<double> g(mask.data.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = mask.data[i] ? 0.0 : inf;

    std::vector<double> line_in, line_out;
    std::vector<std::size_t> v;
    std::vector<double> z;
    const auto pass = [&](std::size_t n, std::size_t stride, double s, auto bases) {
        line_in.resize(n);
        line_out.resize(n);
        const double s2 = s * s;
        for (std::size_t base : bases) {
            for (std::size_t k = 0; k < n; ++k) line_in[k] = g[base + k * stride];
            distance_1d(line_in.data(), line_out.data(), n, s2, v, z);
            for (std::size_t k = 0; k < n; ++k) g[base + k * stride] = line_out[k];
        }
    };
    std::vector<std::size_t> bases;
    // x lines
    bases.clear();
    for (std::size_t zz = 0; zz < d.d; ++zz)
        for (std::size_t y = 0; y < d.h; ++y) bases.push_back(mask.index(zz, y, 0));
    pass(d.w, 1, spacing[2], bases);
    // y lines
    bases.clear();
    for (std::size_t zz = 0; zz < d.d; ++zz)
        for (std::size_t x = 0; x < d.w; ++x) bases.push_back(mask.index(zz, 0, x));
    pass(d.h, d.w, spacing[1], bases);
    // z lines
    bases.clear();
    for (std::size_t y = 0; y < d.h; ++y)
        for (std::size_t x = 0; x < d.w; ++x) bases.push_back(mask.index(0, y, x));
    pass(d.d, d.plane(), spacing[0], bases);
    return g;
}

Mask dilate_mm(const Mask& mask, const Spacing& spacing, double radius_mm) {
    if (!(radius_mm >= 0)) throw ConfigError("dilation radius must be non-negative");
    if (radius_mm == 0) return mask;
    const auto dist2 = squared_distance_mm(mask, spacing);
    const double limit = radius_mm * radius_mm * (1.0 + 1e-12);
    Mask out(mask.dims, mask.spacing, 0);
    for (std::size_t i = 0; i < dist2.size(); ++i) out.data[i] = dist2[i] <= limit ? 1 : 0;
    return out;
}

SegVolume finalize(const PredictionVolume& pred, const PostprocessConfig& config) {
    config.validate();
    if (pred.liver_prob.dims != pred.lesion_prob.dims)
        throw DimensionError("liver and lesion probability volumes differ in dims");
    const Mask liver = largest_component(threshold_mask(pred.liver_prob, config.threshold), config.connectivity);
    const Mask region = dilate_mm(liver, pred.liver_prob.spacing, config.liver_dilation_mm);
    SegVolume out(pred.liver_prob.dims, pred.liver_prob.spacing, kBackground);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        if (liver.data[i]) out.data[i] = kLiver;
        if (region.data[i] && pred.lesion_prob.data[i] >= config.threshold) out.data[i] = kLesion;
    }
    return out;
}

}  // namespace tandem
