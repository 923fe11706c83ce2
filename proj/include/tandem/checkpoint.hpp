#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "tandem/tensor.hpp"

namespace tandem {

/// One named array of a CKPT1 file.
struct NamedArray {
    std::string name;
    Shape shape;
    std::vector<float> values;

    bool operator==(const NamedArray&) const = default;
};

/// CKPT1 layout: magic "CKPT1", then per entry until end of file:
/// u32 name length, UTF-8 name, u32 rank, rank x u32 extents,
/// extents-product x f32. All integers and floats little-endian.
std::string encode_ckpt(const std::vector<NamedArray>& entries);
std::vector<NamedArray> decode_ckpt(std::string_view bytes);

void write_ckpt(const std::string& path, const std::vector<NamedArray>& entries);
std::vector<NamedArray> read_ckpt(const std::string& path);

/// Text payloads (e.g. embedded JSON) are stored as a rank-1 entry whose
/// floats hold the byte values 0..255.
NamedArray text_entry(std::string name, std::string_view text);
std::string entry_text(const NamedArray& entry);

NamedArray to_named_array(const std::string& name, const Tensor& t);

std::string read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::string_view bytes);

}  // namespace tandem
