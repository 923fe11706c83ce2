#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tandem/preprocess.hpp"
#include "tandem/rng.hpp"

namespace tandem {

struct ElasticConfig {
    bool enabled = true;
    double probability = 0.5;
    std::size_t grid = 3;             // coarse nodes per axis
    double displacement_sigma = 10.0;  // px, per component
    double smoothing_sigma = 0.0;      // Gaussian smoothing of the coarse grid, in grid cells
};

struct AugmentConfig {
    double hflip_prob = 0.5;
    double vflip_prob = 0.5;
    double rotation_prob = 0.5;
    double max_rotation_deg = 15.0;
    double zoom_prob = 0.5;
    double zoom_range = 0.10;
    ElasticConfig elastic;

    /// Every probability zero.
    static AugmentConfig disabled();
    void validate() const;

    std::string to_json() const;
    static AugmentConfig from_json(const std::string& text);
};

/// Dense per-pixel displacement (dy, dx) in pixels.
struct DisplacementField {
    std::size_t h = 0, w = 0;
    std::vector<double> dy, dx;
};

/// One concrete draw of the random transform.
struct AugmentDecision {
    bool hflip = false;
    bool vflip = false;
    double rotation_deg = 0.0;
    double zoom = 1.0;
    std::optional<DisplacementField> elastic;

    bool is_pure_flip() const { return rotation_deg == 0.0 && zoom == 1.0 && !elastic; }
};

/// Output-to-input coordinate map: for output pixel (y, x) the input point
/// sampled. Applied in the order flips -> rotation -> zoom -> elastic.
struct SampleMap {
    std::size_t h = 0, w = 0;
    std::vector<double> y, x;
};

AugmentDecision sample_decision(const AugmentConfig& config, std::size_t h, std::size_t w, Rng& rng);
SampleMap sample_map(const AugmentDecision& d, std::size_t h, std::size_t w);

/// Bilinear for images (out of bounds -> -2), nearest for labels (-> 0).
ImageSlice resample_image(const ImageSlice& img, const SampleMap& map);
LabelSlice resample_labels(const LabelSlice& lab, const SampleMap& map);

std::pair<ImageSlice, LabelSlice> apply_decision(const ImageSlice& img, const LabelSlice& lab, const AugmentDecision& d);

/// Draws a transform from `rng` and applies it to both rasters.
std::pair<ImageSlice, LabelSlice> augment_pair(const ImageSlice& img, const LabelSlice& lab, const AugmentConfig& config,
                                               Rng& rng);

/// Coarse Gaussian grid, optionally smoothed, bilinearly upsampled.
DisplacementField make_elastic_field(const ElasticConfig& config, std::size_t h, std::size_t w, Rng& rng);

std::pair<ImageSlice, LabelSlice> elastic_deform(const ImageSlice& img, const LabelSlice& lab, const ElasticConfig& config,
                                                 Rng& rng);

constexpr float kImageFill = -2.0f;

}  // namespace tandem
