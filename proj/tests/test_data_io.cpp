#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "tandem/checkpoint.hpp"
#include "tandem/error.hpp"
#include "tandem/phantom.hpp"
#include "tandem/preprocess.hpp"
#include "tandem/rng.hpp"

using namespace tandem;

namespace {

Volume random_volume(Dims d, std::uint64_t seed) {
    Rng rng(seed);
    Volume v(d, {2.5f, 0.7f, 0.7f});
    for (auto& x : v.data) x = static_cast<float>(rng.normal(0, 300));
    return v;
}

std::string error_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(Segv, RoundTripIsBitIdentical) {
    const Volume v = random_volume({4, 6, 8}, 1);
    const std::string bytes = encode_volume(v);
    EXPECT_EQ(bytes.size(), 30u + 4 * v.data.size());
    EXPECT_EQ(std::get<Volume>(decode_volume(bytes)), v);
    SegVolume s({2, 3, 3}, {1, 1, 1});
    s.data[4] = 2;
    s.data[5] = 1;
    EXPECT_EQ(std::get<SegVolume>(decode_volume(encode_volume(s))), s);
}

TEST(Segv, TruncatedFileNamesByteCounts) {
    const std::string bytes = encode_volume(random_volume({2, 2, 2}, 2));
    const std::string msg = error_of([&] { decode_volume(bytes.substr(0, bytes.size() - 3)); });
    EXPECT_NE(msg.find(std::to_string(bytes.size())), std::string::npos) << msg;
    EXPECT_NE(msg.find(std::to_string(bytes.size() - 3)), std::string::npos) << msg;
    EXPECT_THROW(decode_volume(bytes.substr(0, bytes.size() - 3)), ParseError);
    EXPECT_THROW(decode_volume("SEGV2" + bytes.substr(5)), ParseError);
}

TEST(Segv, LabelOutOfRangeIsRejected) {
    SegVolume s({1, 2, 2}, {1, 1, 1});
    s.data[3] = 3;
    EXPECT_NE(error_of([&] { validate_labels(s); }).find("label out of range"), std::string::npos);
    EXPECT_THROW(validate_labels(s), ValidationError);
}

TEST(Segv, MasksFollowLabelConvention) {
    SegVolume s({1, 1, 3}, {1, 1, 1});
    s.data = {0, 1, 2};
    EXPECT_EQ(liver_mask(s).data, (std::vector<std::uint8_t>{0, 1, 1}));
    EXPECT_EQ(lesion_mask(s).data, (std::vector<std::uint8_t>{0, 0, 1}));
}

TEST(Ckpt, RoundTripIsBitExact) {
    Rng rng(3);
    std::vector<NamedArray> entries;
    for (int k = 0; k < 4; ++k) {
        NamedArray a{"layer" + std::to_string(k) + ".w", {2, 3, static_cast<std::size_t>(k + 1)}, {}};
        for (std::size_t i = 0; i < 6u * (k + 1); ++i) a.values.push_back(static_cast<float>(rng.normal()));
        entries.push_back(a);
    }
    entries.push_back(text_entry("__meta__", R"({"stage":2})"));
    const auto back = decode_ckpt(encode_ckpt(entries));
    EXPECT_EQ(back, entries);
    EXPECT_EQ(entry_text(back.back()), R"({"stage":2})");
    EXPECT_THROW(decode_ckpt(encode_ckpt(entries).substr(0, 20)), ParseError);
}

TEST(Scaling, DivideAndClip) {
    EXPECT_FLOAT_EQ(scale_intensity(255), 1.0f);
    EXPECT_FLOAT_EQ(scale_intensity(0), 0.0f);
    EXPECT_FLOAT_EQ(scale_intensity(10000), 2.0f);
    EXPECT_FLOAT_EQ(scale_intensity(-10000), -2.0f);
    for (float v : scale_intensities(random_volume({3, 5, 5}, 4)).data) {
        EXPECT_GE(v, -2.0f);
        EXPECT_LE(v, 2.0f);
    }
}

TEST(LiverSlices, Fixtures) {
    SegVolume s({10, 4, 4}, {1, 1, 1});
    EXPECT_TRUE(slices_with_liver(s).empty());
    for (std::size_t z = 3; z <= 7; ++z) s.at(z, 1, 2) = z == 5 ? 2 : 1;
    EXPECT_EQ(slices_with_liver(s), (std::vector<std::size_t>{3, 4, 5, 6, 7}));
}

TEST(LiverSlices, MatchBruteForceScanOnPhantoms) {
    PhantomSpec spec;
    spec.dims = {16, 32, 32};
    spec.liver_semi_axes_mm = {10, 10, 12};
    spec.lesion_radius_min_mm = 2;
    spec.lesion_radius_max_mm = 4;
    spec.lesion_count_max = 2;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        spec.seed = seed;
        const Phantom p = generate_phantom(spec);
        std::vector<std::size_t> expected;
        for (std::size_t z = 0; z < spec.dims.d; ++z) {
            bool any = false;
            for (std::size_t i = 0; i < spec.dims.plane(); ++i) any = any || p.labels.data[z * spec.dims.plane() + i] >= 1;
            if (any) expected.push_back(z);
        }
        EXPECT_EQ(slices_with_liver(p.labels), expected);
    }
}

TEST(Downscale, MeansAndVotes) {
    ImageSlice c(4, 6, 3.5f);
    const ImageSlice half = downscale_slice(c);
    EXPECT_EQ(half.h, 2u);
    EXPECT_EQ(half.w, 3u);
    for (float v : half.data) EXPECT_EQ(v, 3.5f);
    ImageSlice t(2, 2);
    t.data = {1, 3, 5, 7};
    EXPECT_EQ(downscale_slice(t).data[0], 4.0f);

    // Tie table: majority (>= 3 of 4) wins, otherwise the highest label present.
    const std::vector<std::pair<std::vector<std::uint8_t>, std::uint8_t>> table{
        {{0, 0, 0, 0}, 0}, {{0, 0, 0, 2}, 0}, {{1, 1, 1, 0}, 1}, {{1, 1, 1, 2}, 1}, {{0, 0, 1, 1}, 1},
        {{0, 0, 1, 2}, 2}, {{2, 2, 0, 0}, 2}, {{1, 1, 2, 2}, 2}, {{0, 1, 1, 2}, 2}, {{2, 2, 2, 1}, 2},
    };
    for (const auto& [tile, expected] : table) {
        LabelSlice s(2, 2);
        s.data = tile;
        EXPECT_EQ(downscale_slice(s).data[0], expected);
    }
}

TEST(Phantom, DeterministicAndEmptyLesions) {
    PhantomSpec spec;
    spec.dims = {12, 32, 32};
    spec.liver_semi_axes_mm = {8, 12, 12};
    spec.lesion_radius_min_mm = 2;
    spec.lesion_radius_max_mm = 3;
    spec.seed = 7;
    const Phantom a = generate_phantom(spec), b = generate_phantom(spec);
    EXPECT_EQ(a.image, b.image);
    EXPECT_EQ(a.labels, b.labels);
    spec.lesion_count_min = spec.lesion_count_max = 0;
    const Phantom none = generate_phantom(spec);
    for (auto v : none.labels.data) EXPECT_NE(v, kLesion);
    EXPECT_TRUE(none.lesions.empty());
}

TEST(Phantom, LiverVolumeMatchesEllipsoid) {
    PhantomSpec spec;
    spec.dims = {64, 64, 64};
    spec.spacing = {1, 1, 1};
    spec.liver_semi_axes_mm = {18, 22, 25};
    spec.seed = 3;
    const Phantom p = generate_phantom(spec);
    std::size_t n = 0;
    for (auto v : p.labels.data) n += v >= 1;
    const double analytic = 4.0 / 3.0 * std::numbers::pi * 18 * 22 * 25;
    EXPECT_NEAR(static_cast<double>(n), analytic, 0.02 * analytic);
}

TEST(Phantom, SpecJsonRoundTrip) {
    PhantomSpec spec;
    spec.dims = {8, 16, 16};
    spec.seed = 42;
    spec.noise_sigma = 3.5;
    const PhantomSpec back = PhantomSpec::from_json(spec.to_json());
    EXPECT_EQ(back.to_json(), spec.to_json());
    spec.lesion_radius_min_mm = 9;
    spec.lesion_radius_max_mm = 2;
    EXPECT_THROW(spec.validate(), ConfigError);
}
