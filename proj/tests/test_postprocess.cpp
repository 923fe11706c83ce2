#include <gtest/gtest.h>

#include "oracles.hpp"
#include "tandem/error.hpp"
#include "tandem/postprocess.hpp"

using namespace tandem;

namespace {

std::size_t count(const Mask& m) {
    std::size_t n = 0;
    for (auto v : m.data) n += v != 0;
    return n;
}

bool subset(const Mask& a, const Mask& b) {
    for (std::size_t i = 0; i < a.data.size(); ++i)
        if (a.data[i] && !b.data[i]) return false;
    return true;
}

Mask single_voxel(Dims d, Spacing s) {
    Mask m(d, s, 0);
    m.at(d.d / 2, d.h / 2, d.w / 2) = 1;
    return m;
}

}  // namespace

TEST(Components, MatchFloodFillOracle) {
    Rng rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        const Mask m = oracle::random_mask({16, 16, 16}, {1, 1, 1}, rng, 0.05);
        for (int conn : {6, 26}) {
            const auto got = label_components(m, conn);
            const auto ref = oracle::flood_fill(m, conn);
            ASSERT_EQ(got.labels, ref) << "trial " << trial << " connectivity " << conn;
            std::vector<std::size_t> sizes(got.sizes.size(), 0);
            for (auto l : ref)
                if (l) ++sizes.at(l - 1);
            ASSERT_EQ(got.sizes, sizes);
        }
    }
}

TEST(Components, LargestMatchesOracle) {
    Mask empty({4, 4, 4}, {1, 1, 1}, 0);
    EXPECT_EQ(largest_component(empty), empty);
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const Mask m = oracle::random_mask({16, 16, 16}, {1, 1, 1}, rng, 0.05);
        ASSERT_EQ(largest_component(m, 6), oracle::largest_component(m, 6)) << "trial " << trial;
    }
}

TEST(Components, BlobOfFiveBeatsBlobOfThree) {
    Mask m({1, 1, 12}, {1, 1, 1}, 0);
    for (std::size_t x : {0u, 1u, 2u, 5u, 6u, 7u, 8u, 9u}) m.at(0, 0, x) = 1;
    const Mask l = largest_component(m);
    EXPECT_EQ(count(l), 5u);
    EXPECT_EQ(l.at(0, 0, 5), 1);
}

TEST(Components, TieGoesToFirstInRasterOrder) {
    Mask m({1, 1, 7}, {1, 1, 1}, 0);
    m.at(0, 0, 0) = m.at(0, 0, 1) = m.at(0, 0, 4) = m.at(0, 0, 5) = 1;
    EXPECT_EQ(largest_component(m).at(0, 0, 0), 1);
    EXPECT_EQ(largest_component(m).at(0, 0, 4), 0);
}

TEST(DistanceTransform, MatchesBruteForce) {
    Rng rng(3);
    for (const Spacing s : {Spacing{1, 1, 1}, Spacing{2.5f, 0.7f, 0.9f}}) {
        for (int trial = 0; trial < 10; ++trial) {
            const Mask m = oracle::random_mask({8, 10, 12}, s, rng, 0.01);
            const auto got = squared_distance_mm(m, s);
            const auto ref = oracle::sq_distance(m);
            for (std::size_t i = 0; i < ref.size(); ++i) {
                if (std::isinf(ref[i])) {
                    ASSERT_TRUE(std::isinf(got[i]));
                } else {
                    ASSERT_NEAR(got[i], ref[i], 1e-9 * (1 + ref[i]));
                }
            }
        }
    }
}

TEST(Dilation, SingleVoxelLatticeCounts) {
    const Spacing iso{1, 1, 1}, aniso{2, 1, 1};
    EXPECT_EQ(count(dilate_mm(single_voxel({9, 9, 9}, iso), iso, 2.0)), oracle::lattice_ball(iso, 2.0));
    EXPECT_EQ(count(dilate_mm(single_voxel({9, 9, 9}, aniso), aniso, 2.0)), oracle::lattice_ball(aniso, 2.0));
    EXPECT_EQ(oracle::lattice_ball(iso, 2.0), 33u);
    // Under the Euclidean-mm definition a z step of 2 mm already uses the
    // whole radius, so z = +-1 contributes one voxel each: 13 + 2.
    EXPECT_EQ(oracle::lattice_ball(aniso, 2.0), 15u);
}

TEST(Dilation, RadiusZeroIsIdentity) {
    Rng rng(4);
    const Mask m = oracle::random_mask({6, 6, 6}, {1, 1, 1}, rng);
    EXPECT_EQ(dilate_mm(m, {1, 1, 1}, 0.0), m);
}

TEST(Dilation, MatchesBruteForceAndIsMonotoneAndExtensive) {
    Rng rng(5);
    const Spacing s{2, 1, 1};
    for (int trial = 0; trial < 50; ++trial) {
        const Mask a = oracle::random_mask({8, 12, 12}, s, rng, 0.01);
        Mask b = a;
        const Mask extra = oracle::random_mask({8, 12, 12}, s, rng, 0.01);
        for (std::size_t i = 0; i < b.data.size(); ++i) b.data[i] |= extra.data[i];
        const double r = rng.uniform(0.5, 4.0);
        const Mask da = dilate_mm(a, s, r), db = dilate_mm(b, s, r);
        ASSERT_EQ(da, oracle::dilate(a, r)) << "trial " << trial;
        EXPECT_TRUE(subset(a, da));
        EXPECT_TRUE(subset(da, db));
    }
}

namespace {

// Liver probability 1 on x in [10, 30); a lesion blob centred `gap_mm` past
// the liver's x = 29 face.
PredictionVolume liver_with_outside_blob(double gap_mm) {
    const Dims d{12, 24, 64};
    const Spacing s{2, 1, 1};
    PredictionVolume p{Volume(d, s, 0.1f), Volume(d, s, 0.0f)};
    for (std::size_t z = 2; z < 10; ++z)
        for (std::size_t y = 4; y < 20; ++y)
            for (std::size_t x = 10; x < 30; ++x) p.liver_prob.at(z, y, x) = 0.9f;
    const std::size_t cx = 29 + static_cast<std::size_t>(gap_mm);
    for (std::size_t z = 5; z < 7; ++z)
        for (std::size_t y = 11; y < 13; ++y)
            for (std::size_t x = cx - 1; x <= cx + 1; ++x) p.lesion_prob.at(z, y, x) = 0.8f;
    return p;
}

std::size_t lesion_voxels(const SegVolume& s) {
    std::size_t n = 0;
    for (auto v : s.data) n += v == kLesion;
    return n;
}

}  // namespace

TEST(Finalize, DistantFalsePositiveIsRemoved) {
    EXPECT_EQ(lesion_voxels(finalize(liver_with_outside_blob(25.0))), 0u);
}

TEST(Finalize, NearbyLesionSurvivesUnderSegmentedLiver) {
    EXPECT_EQ(lesion_voxels(finalize(liver_with_outside_blob(10.0))), 12u);
}

TEST(Finalize, KeepsOnlyLargestLiverComponent) {
    PredictionVolume p = liver_with_outside_blob(25.0);
    p.liver_prob.at(0, 0, 60) = 0.95f;
    const SegVolume out = finalize(p);
    EXPECT_EQ(out.at(0, 0, 60), kBackground);
    EXPECT_EQ(out.at(4, 8, 15), kLiver);
}

TEST(Finalize, EmptyLiverGivesEmptyOutput) {
    const Dims d{4, 8, 8};
    PredictionVolume p{Volume(d, {1, 1, 1}, 0.0f), Volume(d, {1, 1, 1}, 0.9f)};
    for (auto v : finalize(p).data) EXPECT_EQ(v, kBackground);
}

TEST(Finalize, ThresholdIsInclusive) {
    const Volume v({1, 1, 3}, {1, 1, 1}, 0.5f);
    EXPECT_EQ(count(threshold_mask(v, 0.5)), 3u);
    EXPECT_EQ(count(threshold_mask(v, 0.51)), 0u);
}

TEST(PostprocessConfigTest, JsonAndValidation) {
    PostprocessConfig c;
    c.liver_dilation_mm = 12.5;
    c.connectivity = 26;
    EXPECT_EQ(PostprocessConfig::from_json(c.to_json()).to_json(), c.to_json());
    c.connectivity = 8;
    EXPECT_THROW(c.validate(), ConfigError);
}
