#include "tandem/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "tandem/error.hpp"
#include "tandem/rng.hpp"

namespace tandem {

using nlohmann::json;

namespace {

constexpr int kPlacementAttempts = 2000;

std::array<double, 3> voxel_mm(const Spacing& s, std::size_t z, std::size_t y, std::size_t x) {
    return {static_cast<double>(z) * s[0], static_cast<double>(y) * s[1], static_cast<double>(x) * s[2]};
}

double dist2(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    double s = 0;
    for (int i = 0; i < 3; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

// Voxel index range along one axis covering [c - r, c + r] mm.
std::pair<std::size_t, std::size_t> axis_range(double c, double r, float spacing, std::size_t n) {
    const double lo = std::ceil((c - r) / spacing);
    const double hi = std::floor((c + r) / spacing);
    const auto clamp = [n](double v) { return static_cast<std::size_t>(std::clamp(v, 0.0, static_cast<double>(n - 1))); };
    return {clamp(lo), clamp(hi)};
}

}  // namespace

std::array<double, 3> PhantomSpec::center_mm() const {
    if (liver_center_mm) return *liver_center_mm;
    return {0.5 * static_cast<double>(dims.d - 1) * spacing[0], 0.5 * static_cast<double>(dims.h - 1) * spacing[1],
            0.5 * static_cast<double>(dims.w - 1) * spacing[2]};
}

void PhantomSpec::validate() const {
    if (dims.d == 0 || dims.h == 0 || dims.w == 0) throw ConfigError("phantom dims must be positive");
    for (float s : spacing)
        if (!(s > 0)) throw ConfigError("phantom spacing must be positive");
    for (double a : liver_semi_axes_mm)
        if (!(a > 0)) throw ConfigError("liver semi-axes must be positive");
    if (lesion_count_min > lesion_count_max) throw ConfigError("lesion_count range is empty");
    if (!(lesion_radius_min_mm > 0) || lesion_radius_min_mm > lesion_radius_max_mm)
        throw ConfigError("lesion radius range must satisfy 0 < min <= max");
    const double min_axis = *std::min_element(liver_semi_axes_mm.begin(), liver_semi_axes_mm.end());
    if (lesion_count_max > 0 && lesion_radius_max_mm >= min_axis)
        throw ConfigError("lesion radius " + std::to_string(lesion_radius_max_mm) +
                          " mm does not fit inside the liver (smallest semi-axis " + std::to_string(min_axis) + " mm)");
    if (!(noise_sigma >= 0)) throw ConfigError("noise_sigma must be non-negative");
}

bool inside_liver(const PhantomSpec& spec, const std::array<double, 3>& p) {
    const auto c = spec.center_mm();
    double s = 0;
    for (int i = 0; i < 3; ++i) {
        const double t = (p[i] - c[i]) / spec.liver_semi_axes_mm[i];
        s += t * t;
    }
    return s <= 1.0;
}

Phantom generate_phantom(const PhantomSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    Phantom ph;
    ph.labels = SegVolume(spec.dims, spec.spacing, kBackground);
    const auto& d = spec.dims;
    const auto center = spec.center_mm();

    for (std::size_t z = 0; z < d.d; ++z)
        for (std::size_t y = 0; y < d.h; ++y)
            for (std::size_t x = 0; x < d.w; ++x)
                if (inside_liver(spec, voxel_mm(spec.spacing, z, y, x))) ph.labels.at(z, y, x) = kLiver;

    const auto count = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(spec.lesion_count_min), static_cast<std::int64_t>(spec.lesion_count_max)));
    for (std::size_t k = 0; k < count; ++k) {
        const double r = rng.uniform(spec.lesion_radius_min_mm, spec.lesion_radius_max_mm);
        bool placed = false;
        for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
            // Candidate centre inside the ellipsoid shrunk by r, then exact checks.
            std::array<double, 3> c;
            double norm;
            do {
                for (int i = 0; i < 3; ++i) c[i] = rng.uniform(-1.0, 1.0);
                norm = c[0] * c[0] + c[1] * c[1] + c[2] * c[2];
            } while (norm > 1.0);
            for (int i = 0; i < 3; ++i) c[i] = center[i] + c[i] * (spec.liver_semi_axes_mm[i] - r);

            bool ok = true;
            for (const auto& other : ph.lesions) {
                const double gap = other.radius_mm + r + 2.0 * *std::max_element(spec.spacing.begin(), spec.spacing.end());
                if (dist2(c, other.center_mm) < gap * gap) ok = false;
            }
            const auto [z0, z1] = axis_range(c[0], r, spec.spacing[0], d.d);
            const auto [y0, y1] = axis_range(c[1], r, spec.spacing[1], d.h);
            const auto [x0, x1] = axis_range(c[2], r, spec.spacing[2], d.w);
            bool any_voxel = false;
            for (std::size_t z = z0; ok && z <= z1; ++z)
                for (std::size_t y = y0; ok && y <= y1; ++y)
                    for (std::size_t x = x0; ok && x <= x1; ++x) {
                        const auto p = voxel_mm(spec.spacing, z, y, x);
                        if (dist2(p, c) <= r * r) {
                            any_voxel = true;
                            if (!inside_liver(spec, p)) ok = false;
                        }
                    }
            if (!ok || !any_voxel) continue;
            for (std::size_t z = z0; z <= z1; ++z)
                for (std::size_t y = y0; y <= y1; ++y)
                    for (std::size_t x = x0; x <= x1; ++x)
                        if (dist2(voxel_mm(spec.spacing, z, y, x), c) <= r * r) ph.labels.at(z, y, x) = kLesion;
            ph.lesions.push_back({c, r});
            placed = true;
        }
        if (!placed) throw ConfigError("could not place lesion " + std::to_string(k) + " inside the liver");
    }

    ph.image = Volume(spec.dims, spec.spacing);
    for (std::size_t i = 0; i < ph.image.data.size(); ++i) {
        const auto l = ph.labels.data[i];
        const double base = l == kLesion ? spec.lesion_intensity : l == kLiver ? spec.liver_intensity : spec.background_intensity;
        ph.image.data[i] = static_cast<float>(base + (spec.noise_sigma > 0 ? rng.normal(0.0, spec.noise_sigma) : 0.0));
    }
    return ph;
}

std::string PhantomSpec::to_json() const {
    json j;
    j["dims"] = {dims.d, dims.h, dims.w};
    j["spacing"] = {spacing[0], spacing[1], spacing[2]};
    if (liver_center_mm) j["liver_center_mm"] = *liver_center_mm;
    j["liver_semi_axes_mm"] = liver_semi_axes_mm;
    j["lesion_count"] = {lesion_count_min, lesion_count_max};
    j["lesion_radius_mm"] = {lesion_radius_min_mm, lesion_radius_max_mm};
    j["intensity"] = {{"background", background_intensity}, {"liver", liver_intensity}, {"lesion", lesion_intensity}};
    j["noise_sigma"] = noise_sigma;
    j["seed"] = seed;
    return j.dump(2);
}

PhantomSpec PhantomSpec::from_json(const std::string& text) {
    PhantomSpec s;
    try {
        const json j = json::parse(text);
        if (j.contains("dims")) {
            const auto v = j["dims"].get<std::vector<std::size_t>>();
            if (v.size() != 3) throw ConfigError("phantom dims need 3 entries");
            s.dims = {v[0], v[1], v[2]};
        }
        if (j.contains("spacing")) {
            const auto v = j["spacing"].get<std::vector<float>>();
            if (v.size() != 3) throw ConfigError("phantom spacing needs 3 entries");
            s.spacing = {v[0], v[1], v[2]};
        }
        if (j.contains("liver_center_mm")) s.liver_center_mm = j["liver_center_mm"].get<std::array<double, 3>>();
        if (j.contains("liver_semi_axes_mm")) s.liver_semi_axes_mm = j["liver_semi_axes_mm"].get<std::array<double, 3>>();
        if (j.contains("lesion_count")) {
            const auto v = j["lesion_count"].get<std::array<std::size_t, 2>>();
            s.lesion_count_min = v[0];
            s.lesion_count_max = v[1];
        }
        if (j.contains("lesion_radius_mm")) {
            const auto v = j["lesion_radius_mm"].get<std::array<double, 2>>();
            s.lesion_radius_min_mm = v[0];
            s.lesion_radius_max_mm = v[1];
        }
        if (j.contains("intensity")) {
            const auto& i = j["intensity"];
            s.background_intensity = i.value("background", s.background_intensity);
            s.liver_intensity = i.value("liver", s.liver_intensity);
            s.lesion_intensity = i.value("lesion", s.lesion_intensity);
        }
        s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
        s.seed = j.value("seed", s.seed);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("phantom spec: ") + e.what());
    }
    s.validate();
    return s;
}

}  // namespace tandem
