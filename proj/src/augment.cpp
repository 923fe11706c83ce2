#include "tandem/augment.hpp"

#include <cmath>
#include <json.hpp>
#include <numbers>

#include "tandem/error.hpp"

namespace tandem {

using nlohmann::json;

AugmentConfig AugmentConfig::disabled() {
    AugmentConfig c;
    c.hflip_prob = c.vflip_prob = c.rotation_prob = c.zoom_prob = 0.0;
    c.elastic.probability = 0.0;
    c.elastic.enabled = false;
    return c;
}

void AugmentConfig::validate() const {
    for (double p : {hflip_prob, vflip_prob, rotation_prob, zoom_prob, elastic.probability})
        if (!(p >= 0 && p <= 1)) throw ConfigError("augmentation probabilities must lie in [0, 1]");
    if (!(max_rotation_deg >= 0)) throw ConfigError("max_rotation_deg must be non-negative");
    if (!(zoom_range >= 0 && zoom_range < 1)) throw ConfigError("zoom_range must lie in [0, 1)");
    if (elastic.grid < 2) throw ConfigError("elastic grid needs at least 2 nodes per axis");
    if (!(elastic.displacement_sigma >= 0) || !(elastic.smoothing_sigma >= 0))
        throw ConfigError("elastic sigmas must be non-negative");
}

std::string AugmentConfig::to_json() const {
    json j;
    j["hflip_prob"] = hflip_prob;
    j["vflip_prob"] = vflip_prob;
    j["rotation_prob"] = rotation_prob;
    j["max_rotation_deg"] = max_rotation_deg;
    j["zoom_prob"] = zoom_prob;
    j["zoom_range"] = zoom_range;
    j["elastic"] = {{"enabled", elastic.enabled},
                    {"probability", elastic.probability},
                    {"grid", elastic.grid},
                    {"displacement_sigma", elastic.displacement_sigma},
                    {"smoothing_sigma", elastic.smoothing_sigma}};
    return j.dump();
}

AugmentConfig AugmentConfig::from_json(const std::string& text) {
    AugmentConfig c;
    try {
        const json j = json::parse(text);
        c.hflip_prob = j.value("hflip_prob", c.hflip_prob);
        c.vflip_prob = j.value("vflip_prob", c.vflip_prob);
        c.rotation_prob = j.value("rotation_prob", c.rotation_prob);
        c.max_rotation_deg = j.value("max_rotation_deg", c.max_rotation_deg);
        c.zoom_prob = j.value("zoom_prob", c.zoom_prob);
        c.zoom_range = j.value("zoom_range", c.zoom_range);
        if (j.contains("elastic")) {
            const auto& e = j["elastic"];
            c.elastic.enabled = e.value("enabled", c.elastic.enabled);
            c.elastic.probability = e.value("probability", c.elastic.probability);
            c.elastic.grid = e.value("grid", c.elastic.grid);
            c.elastic.displacement_sigma = e.value("displacement_sigma", c.elastic.displacement_sigma);
            c.elastic.smoothing_sigma = e.value("smoothing_sigma", c.elastic.smoothing_sigma);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("augmentation config: ") + e.what());
    }
    c.validate();
    return c;
}

namespace {

std::vector<double> smooth_grid(const std::vector<double>& g, std::size_t n, double sigma) {
    if (sigma <= 0) return g;
    const int radius = static_cast<int>(std::ceil(3 * sigma));
    std::vector<double> kernel(2 * radius + 1);
    for (int k = -radius; k <= radius; ++k) kernel[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
    auto pass = [&](const std::vector<double>& in, bool rows) {
        std::vector<double> out(in.size());
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0, wsum = 0;
                for (int k = -radius; k <= radius; ++k) {
                    const long a = static_cast<long>(rows ? i : j) + k;
                    if (a < 0 || a >= static_cast<long>(n)) continue;
                    const std::size_t idx = rows ? static_cast<std::size_t>(a) * n + j : i * n + static_cast<std::size_t>(a);
                    acc += kernel[k + radius] * in[idx];
                    wsum += kernel[k + radius];
                }
                out[i * n + j] = acc / wsum;
            }
        return out;
    };
    return pass(pass(g, true), false);
}

// Cell index and fraction of pixel `p` on an n-node grid spanning [0, extent-1].
std::pair<std::size_t, double> grid_coord(std::size_t p, std::size_t extent, std::size_t n) {
    if (extent <= 1) return {0, 0.0};
    const double t = static_cast<double>(p) * static_cast<double>(n - 1) / static_cast<double>(extent - 1);
    std::size_t i = static_cast<std::size_t>(std::floor(t));
    if (i > n - 2) i = n - 2;
    return {i, t - static_cast<double>(i)};
}

}  // namespace

DisplacementField make_elastic_field(const ElasticConfig& config, std::size_t h, std::size_t w, Rng& rng) {
    const std::size_t n = config.grid;
    if (n < 2) throw ConfigError("elastic grid needs at least 2 nodes per axis");
    std::vector<double> gy(n * n), gx(n * n);
    for (std::size_t i = 0; i < n * n; ++i) {
        gy[i] = rng.normal(0.0, config.displacement_sigma);
        gx[i] = rng.normal(0.0, config.displacement_sigma);
    }
    gy = smooth_grid(gy, n, config.smoothing_sigma);
    gx = smooth_grid(gx, n, config.smoothing_sigma);

    DisplacementField f{h, w, std::vector<double>(h * w), std::vector<double>(h * w)};
    for (std::size_t y = 0; y < h; ++y) {
        const auto [i, fy] = grid_coord(y, h, n);
        for (std::size_t x = 0; x < w; ++x) {
            const auto [j, fx] = grid_coord(x, w, n);
            const double w00 = (1 - fy) * (1 - fx), w01 = (1 - fy) * fx, w10 = fy * (1 - fx), w11 = fy * fx;
            const std::size_t a = i * n + j;
            f.dy[y * w + x] = w00 * gy[a] + w01 * gy[a + 1] + w10 * gy[a + n] + w11 * gy[a + n + 1];
            f.dx[y * w + x] = w00 * gx[a] + w01 * gx[a + 1] + w10 * gx[a + n] + w11 * gx[a + n + 1];
        }
    }
    return f;
}

AugmentDecision sample_decision(const AugmentConfig& config, std::size_t h, std::size_t w, Rng& rng) {
    AugmentDecision d;
    d.hflip = rng.bernoulli(config.hflip_prob);
    d.vflip = rng.bernoulli(config.vflip_prob);
    if (rng.bernoulli(config.rotation_prob))
        d.rotation_deg = rng.uniform(-config.max_rotation_deg, config.max_rotation_deg);
    if (rng.bernoulli(config.zoom_prob)) d.zoom = rng.uniform(1.0 - config.zoom_range, 1.0 + config.zoom_range);
    if (config.elastic.enabled && rng.bernoulli(config.elastic.probability))
        d.elastic = make_elastic_field(config.elastic, h, w, rng);
    return d;
}

SampleMap sample_map(const AugmentDecision& d, std::size_t h, std::size_t w) {
    SampleMap m{h, w, std::vector<double>(h * w), std::vector<double>(h * w)};
    const double cy = 0.5 * static_cast<double>(h - 1), cx = 0.5 * static_cast<double>(w - 1);
    const double theta = d.rotation_deg * std::numbers::pi / 180.0;
    const double c = std::cos(theta), s = std::sin(theta);
    if (d.elastic && (d.elastic->h != h || d.elastic->w != w))
        throw DimensionError("elastic field extent does not match the slice");
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t i = y * w + x;
            double qy = static_cast<double>(y), qx = static_cast<double>(x);
            if (d.elastic) {
                qy += d.elastic->dy[i];
                qx += d.elastic->dx[i];
            }
            if (d.zoom != 1.0) {
                qy = cy + (qy - cy) / d.zoom;
                qx = cx + (qx - cx) / d.zoom;
            }
            if (d.rotation_deg != 0.0) {
                const double ry = qy - cy, rx = qx - cx;
                qx = cx + c * rx + s * ry;
                qy = cy - s * rx + c * ry;
            }
            if (d.hflip) qx = static_cast<double>(w - 1) - qx;
            if (d.vflip) qy = static_cast<double>(h - 1) - qy;
            m.y[i] = qy;
            m.x[i] = qx;
        }
    return m;
}

ImageSlice resample_image(const ImageSlice& img, const SampleMap& map) {
    ImageSlice out(map.h, map.w);
    const auto sample = [&](long y, long x) -> double {
        if (y < 0 || x < 0 || y >= static_cast<long>(img.h) || x >= static_cast<long>(img.w)) return kImageFill;
        return img.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
    };
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const double qy = map.y[i], qx = map.x[i];
        if (qy < -1 || qx < -1 || qy > static_cast<double>(img.h) || qx > static_cast<double>(img.w)) {
            out.data[i] = kImageFill;
            continue;
        }
        const double fy0 = std::floor(qy), fx0 = std::floor(qx);
        const double fy = qy - fy0, fx = qx - fx0;
        const long y0 = static_cast<long>(fy0), x0 = static_cast<long>(fx0);
        double v = (1 - fy) * (1 - fx) * sample(y0, x0);
        if (fx != 0) v += (1 - fy) * fx * sample(y0, x0 + 1);
        if (fy != 0) v += fy * (1 - fx) * sample(y0 + 1, x0);
        if (fy != 0 && fx != 0) v += fy * fx * sample(y0 + 1, x0 + 1);
        out.data[i] = static_cast<float>(v);
    }
    return out;
}

LabelSlice resample_labels(const LabelSlice& lab, const SampleMap& map) {
    LabelSlice out(map.h, map.w, 0);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const double ry = std::floor(map.y[i] + 0.5), rx = std::floor(map.x[i] + 0.5);
        if (ry < 0 || rx < 0 || ry >= static_cast<double>(lab.h) || rx >= static_cast<double>(lab.w)) continue;
        out.data[i] = lab.at(static_cast<std::size_t>(ry), static_cast<std::size_t>(rx));
    }
    return out;
}

namespace {

template <typename T>
Raster<T> flip_raster(const Raster<T>& r, bool hflip, bool vflip) {
    Raster<T> out(r.h, r.w);
    for (std::size_t y = 0; y < r.h; ++y)
        for (std::size_t x = 0; x < r.w; ++x)
            out.at(y, x) = r.at(vflip ? r.h - 1 - y : y, hflip ? r.w - 1 - x : x);
    return out;
}

}  // namespace

std::pair<ImageSlice, LabelSlice> apply_decision(const ImageSlice& img, const LabelSlice& lab, const AugmentDecision& d) {
    if (img.h != lab.h || img.w != lab.w) throw DimensionError("image and label slices differ in extent");
    if (d.is_pure_flip()) return {flip_raster(img, d.hflip, d.vflip), flip_raster(lab, d.hflip, d.vflip)};
    const SampleMap map = sample_map(d, img.h, img.w);
    return {resample_image(img, map), resample_labels(lab, map)};
}

std::pair<ImageSlice, LabelSlice> augment_pair(const ImageSlice& img, const LabelSlice& lab, const AugmentConfig& config,
                                               Rng& rng) {
    return apply_decision(img, lab, sample_decision(config, img.h, img.w, rng));
}

std::pair<ImageSlice, LabelSlice> elastic_deform(const ImageSlice& img, const LabelSlice& lab, const ElasticConfig& config,
                                                 Rng& rng) {
    AugmentDecision d;
    d.elastic = make_elastic_field(config, img.h, img.w, rng);
    return apply_decision(img, lab, d);
}

}  // namespace tandem
