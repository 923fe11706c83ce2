#pragma once

#include <cstdint>
#include <vector>

#include "tandem/volume.hpp"

namespace tandem {

/// Row-major 2-D raster.
template <typename T>
struct Raster {
    std::size_t h = 0, w = 0;
    std::vector<T> data;

    Raster() = default;
    Raster(std::size_t h_, std::size_t w_, T fill = T{}) : h(h_), w(w_), data(h_ * w_, fill) {}

    T& at(std::size_t y, std::size_t x) { return data[y * w + x]; }
    const T& at(std::size_t y, std::size_t x) const { return data[y * w + x]; }

    bool operator==(const Raster&) const = default;
};

using ImageSlice = Raster<float>;
using LabelSlice = Raster<std::uint8_t>;

/// clamp(v / 255, -2, 2) elementwise.
Volume scale_intensities(const Volume& v);
float scale_intensity(float v);

/// Ascending z indices of slices holding at least one voxel with label >= 1.
std::vector<std::size_t> slices_with_liver(const SegVolume& seg);

template <typename T>
Raster<T> extract_slice(const Grid<T>& v, std::size_t z) {
    Raster<T> s(v.dims.h, v.dims.w);
    std::copy(v.data.begin() + static_cast<std::ptrdiff_t>(z * v.dims.plane()),
              v.data.begin() + static_cast<std::ptrdiff_t>((z + 1) * v.dims.plane()), s.data.begin());
    return s;
}

/// 2x2 mean pooling.
ImageSlice downscale_slice(const ImageSlice& s);
/// 2x2 label vote: a label with at least 3 of 4 votes wins, otherwise the
/// highest label present in the tile.
LabelSlice downscale_slice(const LabelSlice& s);

}  // namespace tandem
