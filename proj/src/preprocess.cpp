#include "tandem/preprocess.hpp"

#include <algorithm>

#include "tandem/error.hpp"

namespace tandem {

float scale_intensity(float v) { return std::clamp(v / 255.0f, -2.0f, 2.0f); }

Volume scale_intensities(const Volume& v) {
    Volume out = v;
    for (float& f : out.data) f = scale_intensity(f);
    return out;
}

std::vector<std::size_t> slices_with_liver(const SegVolume& seg) {
    std::vector<std::size_t> out;
    const std::size_t plane = seg.dims.plane();
    for (std::size_t z = 0; z < seg.dims.d; ++z) {
        const auto first = seg.data.begin() + static_cast<std::ptrdiff_t>(z * plane);
        if (std::any_of(first, first + static_cast<std::ptrdiff_t>(plane), [](std::uint8_t l) { return l >= kLiver; }))
            out.push_back(z);
    }
    return out;
}

namespace {

template <typename T>
void require_even(const Raster<T>& s) {
    if (s.h % 2 || s.w % 2)
        throw DimensionError("downscale_slice requires even extents, got " + std::to_string(s.h) + "x" +
                             std::to_string(s.w));
}

}  // namespace

ImageSlice downscale_slice(const ImageSlice& s) {
    require_even(s);
    ImageSlice out(s.h / 2, s.w / 2);
    for (std::size_t y = 0; y < out.h; ++y)
        for (std::size_t x = 0; x < out.w; ++x) {
            const double sum = static_cast<double>(s.at(2 * y, 2 * x)) + s.at(2 * y, 2 * x + 1) +
                               s.at(2 * y + 1, 2 * x) + s.at(2 * y + 1, 2 * x + 1);
            out.at(y, x) = static_cast<float>(sum / 4.0);
        }
    return out;
}

LabelSlice downscale_slice(const LabelSlice& s) {
    require_even(s);
    LabelSlice out(s.h / 2, s.w / 2);
    for (std::size_t y = 0; y < out.h; ++y)
        for (std::size_t x = 0; x < out.w; ++x) {
            const std::uint8_t tile[4] = {s.at(2 * y, 2 * x), s.at(2 * y, 2 * x + 1), s.at(2 * y + 1, 2 * x),
                                          s.at(2 * y + 1, 2 * x + 1)};
            std::uint8_t winner = *std::max_element(tile, tile + 4);
            for (std::uint8_t candidate : tile)
                if (std::count(tile, tile + 4, candidate) >= 3) winner = candidate;
            out.at(y, x) = winner;
        }
    return out;
}

}  // namespace tandem
