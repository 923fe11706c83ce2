#include "tandem/selftest.hpp"

#include <cmath>
#include <functional>
#include <sstream>

#include "tandem/augment.hpp"
#include "tandem/checkpoint.hpp"
#include "tandem/inference.hpp"
#include "tandem/metrics.hpp"
#include "tandem/optim.hpp"
#include "tandem/phantom.hpp"
#include "tandem/postprocess.hpp"
#include "tandem/training.hpp"

namespace tandem {

namespace {

class ConstantPredictor : public SlicePredictor {
public:
    ConstantPredictor(double liver, double lesion) : liver_(liver), lesion_(lesion) {}

protected:
    std::pair<Tensor, Tensor> do_predict(const Tensor& x) const override {
        const Shape s{x.dim(0), 1, x.dim(2), x.dim(3)};
        return {Tensor(s, liver_), Tensor(s, lesion_)};
    }

private:
    double liver_, lesion_;
};

Mask single_voxel(Dims d, Spacing s) {
    Mask m(d, s, 0);
    m.at(d.d / 2, d.h / 2, d.w / 2) = 1;
    return m;
}

std::size_t count(const Mask& m) {
    std::size_t n = 0;
    for (auto v : m.data) n += v != 0;
    return n;
}

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

std::string str(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

std::vector<SelftestResult> run_selftest() {
    std::vector<SelftestResult> results;
    const auto run = [&](const std::string& name, const std::function<std::string()>& body) {
        try {
            const std::string failure = body();
            results.push_back({name, failure.empty(), failure});
        } catch (const std::exception& e) {
            results.push_back({name, false, std::string("threw: ") + e.what()});
        }
    };
    PrecisionScope precision_scope(Precision::Double);

    run("dice loss spot values", [] {
        const Tensor g({1, 1, 2, 2}, {1, 1, 0, 0});
        const Tensor disjoint_p({1, 1, 2, 2}, {0, 0, 1, 1});
        const double perfect = dice_loss(g, g).item();
        const double empty = dice_loss(Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 2, 2})).item();
        const double disjoint = dice_loss(disjoint_p, g).item();
        if (perfect != 0.0 || empty != 0.0 || disjoint != 0.8)
            return "got " + str(perfect) + ", " + str(empty) + ", " + str(disjoint);
        return std::string();
    });
    run("rmsprop first step", [] {
        std::vector<Tensor> p{Tensor({1}, 0.0)};
        RmspropState st(p, 1e-3);
        rmsprop_step(p, {{1.0}}, st);
        if (!near(st.accumulators[0][0], 0.1, 1e-15) || !near(p[0].item(), -1e-3 / (std::sqrt(0.1) + 1e-8), 1e-15))
            return "update " + str(p[0].item());
        return std::string();
    });
    // At spacing (2,1,1) a z step is already 2 mm, so only the in-plane
    // disc (13) and the two voxels straight above and below remain.
    run("dilation lattice counts", [] {
        const std::size_t iso = count(dilate_mm(single_voxel({9, 9, 9}, {1, 1, 1}), {1, 1, 1}, 2.0));
        const std::size_t aniso = count(dilate_mm(single_voxel({9, 9, 9}, {2, 1, 1}), {2, 1, 1}, 2.0));
        if (iso != 33 || aniso != 15) return "counts " + std::to_string(iso) + ", " + std::to_string(aniso);
        return std::string();
    });
    run("largest component", [] {
        Mask m({1, 3, 12}, {1, 1, 1}, 0);
        for (std::size_t x = 0; x < 3; ++x) m.at(0, 1, x) = 1;
        for (std::size_t x = 5; x < 10; ++x) m.at(0, 1, x) = 1;
        const Mask lcc = largest_component(m);
        if (count(lcc) != 5 || !lcc.at(0, 1, 5)) return std::string("wrong component");
        return std::string();
    });
    run("overlap metrics", [] {
        Mask a({1, 1, 3}, {1, 1, 1}, 0), b = a;
        a.data = {1, 1, 0};
        b.data = {0, 1, 1};
        const auto o = overlap_metrics(a, b);
        if (!near(o.dice, 0.5, 1e-15) || !near(o.voe, 2.0 / 3.0, 1e-15) || !o.rvd || *o.rvd != 0.0)
            return "dice " + str(o.dice) + " voe " + str(o.voe);
        return std::string();
    });
    run("two-point surface distance", [] {
        Mask a({1, 1, 8}, {1, 1, 1}, 0), b = a;
        a.at(0, 0, 1) = 1;
        b.at(0, 0, 4) = 1;
        const auto s = surface_distances(a, b, {1, 1, 1});
        if (!s || s->assd_mm != 3.0 || s->msd_mm != 3.0 || s->rmsd_mm != 3.0) return std::string("distances differ from 3");
        return std::string();
    });
    run("lesion matching fixtures", [] {
        // |pred| = 2 inside |gt| = 5: IoU 0.4.
        Mask p2({1, 1, 20}, {1, 1, 1}, 0), g2 = p2;
        for (std::size_t x = 0; x < 2; ++x) p2.at(0, 0, x) = 1;
        for (std::size_t x = 0; x < 5; ++x) g2.at(0, 0, x) = 1;
        const auto pi = connected_instances(p2), gi = connected_instances(g2);
        const auto m0 = match_lesions(pi, gi, 0.0), m5 = match_lesions(pi, gi, 0.5);
        if (m0.tp != 1 || m0.fp != 0 || m0.fn != 0 || m5.tp != 0 || m5.fp != 1 || m5.fn != 1)
            return std::string("IoU 0.4 fixture miscounted");
        // Two predictions overlapping one ground-truth lesion.
        Mask q({1, 1, 20}, {1, 1, 1}, 0), h = q;
        for (std::size_t x = 2; x < 8; ++x) h.at(0, 0, x) = 1;
        for (std::size_t x = 1; x < 4; ++x) q.at(0, 0, x) = 1;
        for (std::size_t x = 5; x < 9; ++x) q.at(0, 0, x) = 1;
        const auto m = match_lesions(connected_instances(q), connected_instances(h), 0.0);
        if (m.tp != 1 || m.fp != 1 || m.fn != 0) return std::string("one-to-one fixture miscounted");
        return std::string();
    });
    run("constant-model TTA and ensemble mean", [] {
        const ConstantPredictor a(0.2, 0.1), b(0.4, 0.1), c(0.9, 0.1);
        ImageSlice s(4, 4, 0.5f);
        const auto [liver, lesion] = predict_slice_tta(a, s);
        if (a.forward_calls() != 4) return std::string("TTA made ") + std::to_string(a.forward_calls()) + " calls";
        for (float v : liver.data)
            if (v != 0.2f) return std::string("TTA altered a constant output");
        Volume vol({2, 4, 4}, {1, 1, 1}, 0.0f);
        const auto pv = predict_volume({&a, &b, &c}, vol);
        for (float v : pv.liver_prob.data)
            if (!near(v, 0.5, 1e-7)) return "ensemble mean " + str(v);
        return std::string();
    });
    run("SEGV1 and CKPT1 round trips", [] {
        Volume v({2, 3, 4}, {2.5f, 1, 0.75f});
        for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = static_cast<float>(i) * 0.37f - 3.0f;
        const auto back = std::get<Volume>(decode_volume(encode_volume(v)));
        if (!(back == v)) return std::string("SEGV1 round trip differs");
        const std::vector<NamedArray> entries{{"w", {2, 2}, {1.5f, -0.25f, 3e-8f, 7.0f}}, text_entry("note", "{}")};
        if (decode_ckpt(encode_ckpt(entries)) != entries) return std::string("CKPT1 round trip differs");
        return std::string();
    });
    run("label downscale vote", [] {
        LabelSlice s(2, 2);
        s.data = {0, 0, 1, 2};
        if (downscale_slice(s).data[0] != 2) return std::string("mixed tile should take the highest label");
        s.data = {1, 1, 1, 2};
        if (downscale_slice(s).data[0] != 1) return std::string("3-of-4 majority should win");
        return std::string();
    });
    run("90 degree rotation", [] {
        ImageSlice img(5, 5);
        for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<float>(i);
        AugmentDecision d;
        d.rotation_deg = 90.0;
        const auto [out, lab] = apply_decision(img, LabelSlice(5, 5), d);
        for (std::size_t y = 0; y < 5; ++y)
            for (std::size_t x = 0; x < 5; ++x)
                if (!near(out.at(y, x), img.at(4 - x, y), 1e-4)) return std::string("rotation mismatch");
        return std::string();
    });
    run("phantom determinism", [] {
        PhantomSpec spec;
        spec.dims = {8, 32, 32};
        spec.liver_semi_axes_mm = {6, 12, 12};
        spec.lesion_radius_min_mm = 2;
        spec.lesion_radius_max_mm = 3;
        spec.seed = 11;
        const auto a = generate_phantom(spec), b = generate_phantom(spec);
        if (!(a.image == b.image) || !(a.labels == b.labels)) return std::string("phantom not deterministic");
        return std::string();
    });
    return results;
}

}  // namespace tandem
