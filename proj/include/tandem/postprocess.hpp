#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tandem/inference.hpp"
#include "tandem/volume.hpp"

namespace tandem {

struct PostprocessConfig {
    double threshold = 0.5;
    double liver_dilation_mm = 20.0;
    int connectivity = 6;  // 6 or 26

    void validate() const;
    std::string to_json() const;
    static PostprocessConfig from_json(const std::string& text);
};

/// prob >= threshold.
Mask threshold_mask(const Volume& prob, double threshold);

/// Component labels 1..count in order of each component's first voxel in
/// z-major raster order; background is 0.
struct ComponentLabels {
    std::vector<std::uint32_t> labels;
    std::vector<std::size_t> sizes;  // sizes[k] is the voxel count of label k + 1
};

ComponentLabels label_components(const Mask& mask, int connectivity = 6);

/// Voxels of the largest component; ties go to the component seen first in
/// raster order. Empty input gives empty output.
Mask largest_component(const Mask& mask, int connectivity = 6);

/// Squared Euclidean distance in mm from every voxel to the nearest nonzero
/// voxel of `mask` (exact, separable); infinity when the mask is empty.
std::vector<double> squared_distance_mm(const Mask& mask, const Spacing& spacing);

/// Voxels within `radius_mm` of the mask. Radius 0 returns the input.
Mask dilate_mm(const Mask& mask, const Spacing& spacing, double radius_mm);

/// Liver = largest component of the thresholded liver map. Lesion =
/// thresholded lesion map restricted to the liver dilated by
/// `liver_dilation_mm`. Lesion labels override liver labels.
SegVolume finalize(const PredictionVolume& pred, const PostprocessConfig& config = {});

}  // namespace tandem
