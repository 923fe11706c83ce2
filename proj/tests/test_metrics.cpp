#include <gtest/gtest.h>

#include <json.hpp>

#include "oracles.hpp"
#include "tandem/error.hpp"
#include "tandem/metrics.hpp"
#include "tandem/phantom.hpp"

using namespace tandem;

namespace {

Mask line_mask(std::size_t w, std::initializer_list<std::pair<std::size_t, std::size_t>> spans) {
    Mask m({1, 1, w}, {1, 1, 1}, 0);
    for (const auto& [a, b] : spans)
        for (std::size_t x = a; x < b; ++x) m.at(0, 0, x) = 1;
    return m;
}

SegVolume labels_from(const Mask& liver, const Mask& lesion) {
    SegVolume s(liver.dims, liver.spacing, 0);
    for (std::size_t i = 0; i < s.data.size(); ++i) s.data[i] = lesion.data[i] ? 2 : liver.data[i] ? 1 : 0;
    return s;
}

}  // namespace

TEST(Instances, EmptyAndUnitVoxels) {
    EXPECT_TRUE(connected_instances(Mask({3, 3, 3}, {1, 1, 1}, 0)).empty());
    Mask m({1, 1, 5}, {2, 1, 0.5f}, 0);
    m.at(0, 0, 0) = m.at(0, 0, 3) = 1;
    const auto inst = connected_instances(m);
    ASSERT_EQ(inst.size(), 2u);
    EXPECT_EQ(inst[0].voxels, (std::vector<std::size_t>{0}));
    EXPECT_EQ(inst[1].voxels, (std::vector<std::size_t>{3}));
    EXPECT_DOUBLE_EQ(inst[0].volume_mm3, 1.0);
}

TEST(Instances, PartitionMatchesFloodFill) {
    Rng rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        const Mask m = oracle::random_mask({16, 16, 16}, {1, 1, 1}, rng, 0.05);
        const auto inst = connected_instances(m);
        const auto ref = oracle::flood_fill(m, 6);
        std::vector<std::uint32_t> got(ref.size(), 0);
        for (const auto& in : inst)
            for (auto v : in.voxels) got[v] = static_cast<std::uint32_t>(in.id + 1);
        ASSERT_EQ(got, ref) << "trial " << trial;
    }
}

TEST(Matching, IdenticalSetsAreAllTruePositives) {
    const Mask m = line_mask(20, {{0, 3}, {5, 9}, {12, 13}});
    const auto i = connected_instances(m);
    const auto r = match_lesions(i, i, 0.5);
    EXPECT_EQ(r.tp, 3u);
    EXPECT_EQ(r.fp + r.fn, 0u);
    EXPECT_EQ(r.precision, 1.0);
    EXPECT_EQ(r.recall, 1.0);
}

TEST(Matching, IouPointFourFlipsAcrossThresholds) {
    const auto p = connected_instances(line_mask(20, {{0, 2}}));
    const auto g = connected_instances(line_mask(20, {{0, 5}}));
    ASSERT_DOUBLE_EQ(instance_iou(p[0], g[0]), 0.4);
    const auto r0 = match_lesions(p, g, 0.0), r5 = match_lesions(p, g, 0.5);
    EXPECT_EQ(std::tie(r0.tp, r0.fp, r0.fn), std::make_tuple(1u, 0u, 0u));
    EXPECT_EQ(std::tie(r5.tp, r5.fp, r5.fn), std::make_tuple(0u, 1u, 1u));
}

TEST(Matching, OneToOneConstraint) {
    const auto p = connected_instances(line_mask(20, {{1, 4}, {5, 9}}));
    const auto g = connected_instances(line_mask(20, {{2, 8}}));
    const auto r = match_lesions(p, g, 0.0);
    EXPECT_EQ(std::tie(r.tp, r.fp, r.fn), std::make_tuple(1u, 1u, 0u));
    ASSERT_EQ(r.matches.size(), 1u);
    EXPECT_EQ(r.matches[0].pred, 1u);  // IoU 3/7 beats 2/7
}

TEST(Matching, TiesResolveByPredThenGtId) {
    // Two preds with equal IoU against one gt: the lower pred id wins.
    const auto p = connected_instances(line_mask(20, {{0, 2}, {4, 6}}));
    const auto g = connected_instances(line_mask(20, {{1, 5}}));
    const auto r = match_lesions(p, g, 0.0);
    ASSERT_EQ(r.matches.size(), 1u);
    EXPECT_EQ(r.matches[0].pred, 0u);
    EXPECT_EQ(r.unmatched_pred, (std::vector<std::size_t>{1}));
}

TEST(Matching, EmptySetsGiveUnitRates) {
    const auto r = match_lesions({}, {}, 0.5);
    EXPECT_EQ(r.precision, 1.0);
    EXPECT_EQ(r.recall, 1.0);
    EXPECT_THROW(match_lesions({}, {}, 1.0), ConfigError);
}

TEST(Overlap, Fixtures) {
    const Mask a = line_mask(4, {{0, 2}}), b = line_mask(4, {{1, 3}}), c = line_mask(4, {{3, 4}});
    const auto same = overlap_metrics(a, a);
    EXPECT_EQ(same.dice, 1.0);
    EXPECT_EQ(same.voe, 0.0);
    EXPECT_EQ(*same.rvd, 0.0);
    const auto half = overlap_metrics(a, b);
    EXPECT_DOUBLE_EQ(half.dice, 0.5);
    EXPECT_DOUBLE_EQ(half.voe, 2.0 / 3.0);
    EXPECT_EQ(*half.rvd, 0.0);
    const auto disjoint = overlap_metrics(a, c);
    EXPECT_EQ(disjoint.dice, 0.0);
    EXPECT_EQ(disjoint.voe, 1.0);
    const auto empty = overlap_metrics(Mask({1, 1, 4}, {1, 1, 1}, 0), Mask({1, 1, 4}, {1, 1, 1}, 0));
    EXPECT_EQ(empty.dice, 1.0);
    EXPECT_EQ(empty.voe, 0.0);
    EXPECT_FALSE(empty.rvd);
    EXPECT_THROW(overlap_metrics(a, line_mask(5, {})), DimensionError);
}

TEST(Overlap, MatchesSetOracle) {
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const Mask p = oracle::random_mask({16, 16, 16}, {1, 1, 1}, rng), g = oracle::random_mask({16, 16, 16}, {1, 1, 1}, rng);
        const auto got = overlap_metrics(p, g);
        const auto ref = oracle::overlap(p, g);
        EXPECT_NEAR(got.dice, ref.dice, 1e-12);
        EXPECT_NEAR(got.voe, ref.voe, 1e-12);
        ASSERT_EQ(got.rvd.has_value(), ref.rvd_defined);
        if (ref.rvd_defined) EXPECT_NEAR(*got.rvd, ref.rvd, 1e-12);
    }
}

TEST(Surface, Fixtures) {
    const Mask a = line_mask(8, {{1, 2}}), b = line_mask(8, {{4, 5}});
    const auto s = surface_distances(a, b, {1, 1, 1});
    ASSERT_TRUE(s);
    EXPECT_EQ(s->assd_mm, 3.0);
    EXPECT_EQ(s->msd_mm, 3.0);
    EXPECT_EQ(s->rmsd_mm, 3.0);
    const auto same = surface_distances(a, a, {1, 1, 1});
    EXPECT_EQ(same->assd_mm + same->msd_mm + same->rmsd_mm, 0.0);
    EXPECT_FALSE(surface_distances(a, line_mask(8, {}), {1, 1, 1}));
}

TEST(Surface, BorderMatchesOracle) {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const Mask m = oracle::random_mask({10, 10, 10}, {1, 1, 1}, rng, 0.1);
        EXPECT_EQ(border_voxels(m), oracle::border(m));
    }
}

TEST(Surface, MatchesAllPairsOracle) {
    Rng rng(4);
    int checked = 0;
    for (int trial = 0; trial < 60; ++trial) {
        const Spacing sp = trial % 2 ? Spacing{1, 1, 1} : Spacing{2.5f, 0.8f, 0.8f};
        const Mask a = oracle::random_mask({12, 12, 12}, sp, rng), b = oracle::random_mask({12, 12, 12}, sp, rng);
        const auto got = surface_distances(a, b, sp);
        if (oracle::border(a).empty() || oracle::border(b).empty()) {
            EXPECT_FALSE(got);
            continue;
        }
        ASSERT_TRUE(got);
        const auto ref = oracle::surface(a, b);
        EXPECT_NEAR(got->assd_mm, ref.assd, 1e-9);
        EXPECT_NEAR(got->msd_mm, ref.msd, 1e-9);
        EXPECT_NEAR(got->rmsd_mm, ref.rmsd, 1e-9);
        ++checked;
    }
    EXPECT_GT(checked, 30);
}

TEST(Aggregate, SingleCaseGlobalEqualsCase) {
    const Dims d{1, 1, 10};
    Mask liver({d}, {1, 1, 1}, 0), gt_lesion = liver, pred_lesion = liver;
    for (std::size_t x = 0; x < 10; ++x) liver.at(0, 0, x) = 1;
    for (std::size_t x = 2; x < 6; ++x) gt_lesion.at(0, 0, x) = 1;
    for (std::size_t x = 3; x < 5; ++x) pred_lesion.at(0, 0, x) = 1;
    const auto rep = evaluate_case(labels_from(liver, pred_lesion), labels_from(liver, gt_lesion), {}, "a");
    const auto sum = aggregate({rep});
    EXPECT_DOUBLE_EQ(sum.global_dice, rep.lesion_dice);
    EXPECT_DOUBLE_EQ(sum.dice_per_case, rep.lesion_dice);
}

TEST(Aggregate, PooledCountsDifferFromCaseMean) {
    // Case a: perfect lesion of v = 4 voxels. Case b: predicts 2v voxels
    // disjoint from a v-voxel lesion. Case dices 1 and 0; pooled dice is
    // 2 * 4 / (4 + 4 + 8 + 4) = 0.4.
    const Dims d{1, 1, 20};
    Mask liver({d}, {1, 1, 1}, 0), ga = liver, gb = liver, pb = liver;
    for (std::size_t x = 0; x < 20; ++x) liver.at(0, 0, x) = 1;
    for (std::size_t x = 0; x < 4; ++x) ga.at(0, 0, x) = gb.at(0, 0, x) = 1;
    for (std::size_t x = 10; x < 18; ++x) pb.at(0, 0, x) = 1;
    const auto ra = evaluate_case(labels_from(liver, ga), labels_from(liver, ga), {}, "a");
    const auto rb = evaluate_case(labels_from(liver, pb), labels_from(liver, gb), {}, "b");
    const auto sum = aggregate({rb, ra});
    EXPECT_DOUBLE_EQ(sum.dice_per_case, 0.5);
    EXPECT_DOUBLE_EQ(sum.global_dice, 0.4);
    EXPECT_EQ(sum.cases, 2u);
}

TEST(Aggregate, PerfectPhantomBatch) {
    PhantomSpec spec;
    spec.dims = {12, 32, 32};
    spec.liver_semi_axes_mm = {9, 12, 12};
    spec.lesion_radius_min_mm = 2;
    spec.lesion_radius_max_mm = 3;
    std::vector<CaseReport> reports;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        spec.seed = seed;
        const auto p = generate_phantom(spec);
        reports.push_back(evaluate_case(p.labels, p.labels, {}, "c" + std::to_string(seed)));
    }
    const auto sum = aggregate(reports);
    EXPECT_EQ(sum.dice_per_case, 1.0);
    EXPECT_EQ(sum.liver_dice_per_case, 1.0);
    for (const auto& det : sum.detection) {
        EXPECT_EQ(det.precision, 1.0);
        EXPECT_EQ(det.recall, 1.0);
    }
    EXPECT_EQ(*sum.assd_mm, 0.0);
}

TEST(Reports, CsvAndJsonShapes) {
    const Dims d{1, 1, 8};
    Mask liver({d}, {1, 1, 1}, 0), g = liver, p = liver;
    for (std::size_t x = 0; x < 8; ++x) liver.at(0, 0, x) = 1;
    for (std::size_t x = 2; x < 6; ++x) g.at(0, 0, x) = 1;
    for (std::size_t x = 2; x < 5; ++x) p.at(0, 0, x) = 1;
    const auto rep = evaluate_case(labels_from(liver, p), labels_from(liver, g), {}, "x");
    const auto sum = aggregate({rep});
    const std::string csv = cases_csv({rep});
    EXPECT_EQ(csv.rfind("case,", 0), 0u);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
    const auto j = nlohmann::json::parse(report_json({rep}, sum));
    EXPECT_EQ(j["cases"].size(), 1u);
    // VOE of a 3-in-4 prediction is 25 %, RVD -25 %.
    EXPECT_NEAR(j["summary"]["VOE"].get<double>(), 25.0, 1e-9);
    EXPECT_NEAR(j["summary"]["RVD"].get<double>(), -25.0, 1e-9);
    EXPECT_THROW(evaluate_case(labels_from(liver, p), SegVolume({1, 1, 9}, {1, 1, 1}), {}, "y"), DimensionError);
}
