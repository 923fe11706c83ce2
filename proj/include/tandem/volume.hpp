#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace tandem {

struct Dims {
    std::size_t d = 0, h = 0, w = 0;

    std::size_t count() const { return d * h * w; }
    std::size_t plane() const { return h * w; }
    bool operator==(const Dims&) const = default;
};

/// Physical voxel size in mm, ordered (z, y, x).
using Spacing = std::array<float, 3>;

/// z-major 3-D raster with per-axis spacing.
template <typename T>
struct Grid {
    Dims dims;
    Spacing spacing{1.0f, 1.0f, 1.0f};
    std::vector<T> data;

    Grid() = default;
    Grid(Dims dims_, Spacing spacing_, T fill = T{}) : dims(dims_), spacing(spacing_), data(dims_.count(), fill) {}

    std::size_t index(std::size_t z, std::size_t y, std::size_t x) const { return (z * dims.h + y) * dims.w + x; }
    T& at(std::size_t z, std::size_t y, std::size_t x) { return data[index(z, y, x)]; }
    const T& at(std::size_t z, std::size_t y, std::size_t x) const { return data[index(z, y, x)]; }

    bool operator==(const Grid&) const = default;
};

using Volume = Grid<float>;
/// Labels 0 background, 1 liver, 2 lesion.
using SegVolume = Grid<std::uint8_t>;
/// Binary 0/1 mask.
using Mask = Grid<std::uint8_t>;

enum Label : std::uint8_t { kBackground = 0, kLiver = 1, kLesion = 2 };

/// Throws ValidationError("label out of range ...") for values above 2.
void validate_labels(const SegVolume& seg);
/// Invariant checks shared by reader and writer: positive spacing, finite values.
void validate_volume(const Volume& v);

/// Liver mask: labels >= 1 (lesions count as liver).
Mask liver_mask(const SegVolume& seg);
Mask lesion_mask(const SegVolume& seg);

// ---- SEGV1 files: "SEGV1", u8 dtype (0 f32, 1 u8), 3 x u32 dims (D,H,W),
// ---- 3 x f32 spacing, raw little-endian payload.

using AnyVolume = std::variant<Volume, SegVolume>;

std::string encode_volume(const Volume& v);
std::string encode_volume(const SegVolume& v);
AnyVolume decode_volume(std::string_view bytes);

void write_volume(const Volume& v, const std::string& path);
void write_volume(const SegVolume& v, const std::string& path);
AnyVolume read_volume(const std::string& path);
Volume read_image(const std::string& path);
/// Reads a u8 volume and validates its label range.
SegVolume read_labels(const std::string& path);

}  // namespace tandem
