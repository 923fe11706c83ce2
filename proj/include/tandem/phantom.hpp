#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tandem/volume.hpp"

namespace tandem {

/// Synthetic CT-like volume: an ellipsoidal liver with spherical lesions on a
/// uniform background plus Gaussian noise (image only). Lengths in mm, axes
/// ordered (z, y, x); voxel (z,y,x) sits at (z*sz, y*sy, x*sx).
struct PhantomSpec {
    Dims dims{64, 128, 128};
    Spacing spacing{2.0f, 1.0f, 1.0f};
    std::optional<std::array<double, 3>> liver_center_mm;  // default: volume centre
    std::array<double, 3> liver_semi_axes_mm{40.0, 40.0, 45.0};
    std::size_t lesion_count_min = 1;
    std::size_t lesion_count_max = 4;
    double lesion_radius_min_mm = 4.0;
    double lesion_radius_max_mm = 10.0;
    double background_intensity = -100.0;
    double liver_intensity = 60.0;
    double lesion_intensity = 10.0;
    double noise_sigma = 12.0;
    std::uint64_t seed = 0;

    std::array<double, 3> center_mm() const;
    /// Throws ConfigError for infeasible specs.
    void validate() const;

    std::string to_json() const;
    static PhantomSpec from_json(const std::string& text);
};

struct Lesion {
    std::array<double, 3> center_mm;
    double radius_mm;
};

struct Phantom {
    Volume image;
    SegVolume labels;
    std::vector<Lesion> lesions;
};

/// Pure function of the spec (including the seed).
Phantom generate_phantom(const PhantomSpec& spec);

/// Analytic liver test used by the generator.
bool inside_liver(const PhantomSpec& spec, const std::array<double, 3>& p_mm);

}  // namespace tandem
