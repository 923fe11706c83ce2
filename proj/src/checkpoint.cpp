#include "tandem/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tandem/error.hpp"

namespace tandem {

namespace {

constexpr std::string_view kMagic = "CKPT1";

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    bool done() const { return pos_ == bytes_.size(); }
    std::size_t pos() const { return pos_; }

    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n)
            throw ParseError(std::string("truncated checkpoint while reading ") + what + ": expected " +
                                 std::to_string(n) + " bytes, " + std::to_string(bytes_.size() - pos_) +
                                 " available",
                             pos_);
    }

    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }

    std::string_view take(std::size_t n, const char* what) {
        need(n, what);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string encode_ckpt(const std::vector<NamedArray>& entries) {
    std::string out(kMagic);
    for (const auto& e : entries) {
        if (shape_numel(e.shape) != e.values.size())
            throw DimensionError("checkpoint entry '" + e.name + "' has shape " + shape_string(e.shape) +
                                 " but " + std::to_string(e.values.size()) + " values");
        put_u32(out, static_cast<std::uint32_t>(e.name.size()));
        out += e.name;
        put_u32(out, static_cast<std::uint32_t>(e.shape.size()));
        for (auto d : e.shape) put_u32(out, static_cast<std::uint32_t>(d));
        for (float f : e.values) put_f32(out, f);
    }
    return out;
}

std::vector<NamedArray> decode_ckpt(std::string_view bytes) {
    if (bytes.size() < kMagic.size() || bytes.substr(0, kMagic.size()) != kMagic)
        throw ParseError("bad checkpoint magic (expected CKPT1)", 0);
    Reader r(bytes.substr(kMagic.size()));
    std::vector<NamedArray> entries;
    while (!r.done()) {
        NamedArray e;
        const auto name_len = r.u32("name length");
        e.name = std::string(r.take(name_len, "name"));
        const auto rank = r.u32("rank");
        for (std::uint32_t i = 0; i < rank; ++i) e.shape.push_back(r.u32("extent"));
        const std::size_t count = shape_numel(e.shape);
        const std::size_t off = r.pos() + kMagic.size();
        if (count > (std::size_t{1} << 40)) throw ParseError("implausible extent product for '" + e.name + "'", off);
        auto payload = r.take(count * 4, "payload");
        e.values.resize(count);
        for (std::size_t i = 0; i < count; ++i) {
            std::uint32_t v = 0;
            for (int b = 0; b < 4; ++b)
                v |= static_cast<std::uint32_t>(static_cast<unsigned char>(payload[4 * i + b])) << (8 * b);
            e.values[i] = std::bit_cast<float>(v);
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_bytes(const std::string& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path + "'");
}

void write_ckpt(const std::string& path, const std::vector<NamedArray>& entries) {
    write_file_bytes(path, encode_ckpt(entries));
}

std::vector<NamedArray> read_ckpt(const std::string& path) { return decode_ckpt(read_file_bytes(path)); }

NamedArray text_entry(std::string name, std::string_view text) {
    NamedArray e;
    e.name = std::move(name);
    e.shape = {text.size()};
    e.values.reserve(text.size());
    for (char c : text) e.values.push_back(static_cast<float>(static_cast<unsigned char>(c)));
    if (text.empty()) e.shape = {0};
    return e;
}

std::string entry_text(const NamedArray& entry) {
    std::string s;
    s.reserve(entry.values.size());
    for (float f : entry.values) {
        if (f < 0 || f > 255 || f != static_cast<float>(static_cast<int>(f)))
            throw ParseError("entry '" + entry.name + "' does not hold text bytes", 0);
        s.push_back(static_cast<char>(static_cast<unsigned char>(f)));
    }
    return s;
}

NamedArray to_named_array(const std::string& name, const Tensor& t) {
    NamedArray e{name, t.shape(), {}};
    e.values.reserve(t.numel());
    for (Real v : t.data()) e.values.push_back(static_cast<float>(v));
    return e;
}

}  // namespace tandem
