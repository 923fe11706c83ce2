#include "tandem/volume.hpp"

#include <bit>
#include <cmath>

#include "tandem/checkpoint.hpp"
#include "tandem/error.hpp"

namespace tandem {

namespace {

constexpr std::string_view kMagic = "SEGV1";
constexpr std::size_t kHeaderSize = 5 + 1 + 12 + 12;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(std::string_view b, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[off + i])) << (8 * i);
    return v;
}

template <typename T>
std::string header(const Grid<T>& v, std::uint8_t dtype) {
    std::string out(kMagic);
    out.push_back(static_cast<char>(dtype));
    put_u32(out, static_cast<std::uint32_t>(v.dims.d));
    put_u32(out, static_cast<std::uint32_t>(v.dims.h));
    put_u32(out, static_cast<std::uint32_t>(v.dims.w));
    for (float s : v.spacing) put_u32(out, std::bit_cast<std::uint32_t>(s));
    return out;
}

template <typename T>
void check_grid(const Grid<T>& v) {
    if (v.data.size() != v.dims.count())
        throw DimensionError("volume holds " + std::to_string(v.data.size()) + " values for dims " +
                             std::to_string(v.dims.d) + "x" + std::to_string(v.dims.h) + "x" + std::to_string(v.dims.w));
    for (float s : v.spacing)
        if (!(s > 0) || !std::isfinite(s)) throw ValidationError("volume spacing must be positive and finite");
}

}  // namespace

void validate_labels(const SegVolume& seg) {
    check_grid(seg);
    for (std::size_t i = 0; i < seg.data.size(); ++i)
        if (seg.data[i] > kLesion)
            throw ValidationError("label out of range: value " + std::to_string(seg.data[i]) + " at voxel " +
                                  std::to_string(i));
}

void validate_volume(const Volume& v) {
    check_grid(v);
    for (float f : v.data)
        if (!std::isfinite(f)) throw ValidationError("volume contains non-finite values");
}

Mask liver_mask(const SegVolume& seg) {
    Mask m(seg.dims, seg.spacing, 0);
    for (std::size_t i = 0; i < seg.data.size(); ++i) m.data[i] = seg.data[i] >= kLiver ? 1 : 0;
    return m;
}

Mask lesion_mask(const SegVolume& seg) {
    Mask m(seg.dims, seg.spacing, 0);
    for (std::size_t i = 0; i < seg.data.size(); ++i) m.data[i] = seg.data[i] == kLesion ? 1 : 0;
    return m;
}

std::string encode_volume(const Volume& v) {
    validate_volume(v);
    std::string out = header(v, 0);
    out.reserve(out.size() + 4 * v.data.size());
    for (float f : v.data) put_u32(out, std::bit_cast<std::uint32_t>(f));
    return out;
}

std::string encode_volume(const SegVolume& v) {
    check_grid(v);
    std::string out = header(v, 1);
    out.append(reinterpret_cast<const char*>(v.data.data()), v.data.size());
    return out;
}

AnyVolume decode_volume(std::string_view b) {
    if (b.size() < kMagic.size() || b.substr(0, kMagic.size()) != kMagic)
        throw ParseError("bad volume magic (expected SEGV1)", 0);
    if (b.size() < kHeaderSize)
        throw ParseError("truncated volume header: expected " + std::to_string(kHeaderSize) + " bytes, got " +
                             std::to_string(b.size()),
                         b.size());
    const auto dtype = static_cast<std::uint8_t>(b[5]);
    if (dtype > 1) throw ParseError("unknown volume dtype code " + std::to_string(dtype), 5);
    Dims dims{get_u32(b, 6), get_u32(b, 10), get_u32(b, 14)};
    if (dims.d == 0 || dims.h == 0 || dims.w == 0) throw ParseError("volume dims must be positive", 6);
    Spacing spacing;
    for (int i = 0; i < 3; ++i) spacing[i] = std::bit_cast<float>(get_u32(b, 18 + 4 * i));
    for (float s : spacing)
        if (!(s > 0) || !std::isfinite(s)) throw ParseError("volume spacing must be positive and finite", 18);

    const std::size_t elem = dtype == 0 ? 4 : 1;
    const std::size_t expected = kHeaderSize + dims.count() * elem;
    if (b.size() != expected)
        throw ParseError((b.size() < expected ? std::string("truncated volume payload") : std::string("trailing bytes after volume payload")) +
                             ": expected " + std::to_string(expected) + " bytes, got " + std::to_string(b.size()),
                         std::min(b.size(), expected));

    if (dtype == 0) {
        Volume v(dims, spacing);
        for (std::size_t i = 0; i < v.data.size(); ++i) {
            v.data[i] = std::bit_cast<float>(get_u32(b, kHeaderSize + 4 * i));
            if (!std::isfinite(v.data[i])) throw ParseError("non-finite voxel value", kHeaderSize + 4 * i);
        }
        return v;
    }
    SegVolume v(dims, spacing);
    std::copy(b.begin() + kHeaderSize, b.end(), reinterpret_cast<char*>(v.data.data()));
    return v;
}

void write_volume(const Volume& v, const std::string& path) { write_file_bytes(path, encode_volume(v)); }
void write_volume(const SegVolume& v, const std::string& path) { write_file_bytes(path, encode_volume(v)); }

AnyVolume read_volume(const std::string& path) { return decode_volume(read_file_bytes(path)); }

Volume read_image(const std::string& path) {
    auto any = read_volume(path);
    if (!std::holds_alternative<Volume>(any)) throw ValidationError("'" + path + "' holds labels, expected an f32 image");
    return std::get<Volume>(std::move(any));
}

SegVolume read_labels(const std::string& path) {
    auto any = read_volume(path);
    if (!std::holds_alternative<SegVolume>(any)) throw ValidationError("'" + path + "' holds an image, expected u8 labels");
    auto seg = std::get<SegVolume>(std::move(any));
    validate_labels(seg);
    return seg;
}

}  // namespace tandem
