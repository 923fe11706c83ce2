#include "tandem/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <unordered_map>

#include "tandem/error.hpp"
#include "tandem/postprocess.hpp"

namespace tandem {

using nlohmann::json;

std::vector<LesionInstance> connected_instances(const Mask& mask, int connectivity) {
    const auto comps = label_components(mask, connectivity);
    const double voxel_mm3 = static_cast<double>(mask.spacing[0]) * mask.spacing[1] * mask.spacing[2];
    std::vector<LesionInstance> out(comps.sizes.size());
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k].id = k;
        out[k].voxels.reserve(comps.sizes[k]);
        out[k].volume_mm3 = static_cast<double>(comps.sizes[k]) * voxel_mm3;
    }
    for (std::size_t i = 0; i < comps.labels.size(); ++i)
        if (comps.labels[i]) out[comps.labels[i] - 1].voxels.push_back(i);
    return out;
}

namespace {

std::size_t intersection_size(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    std::size_t n = 0;
    auto i = a.begin(), j = b.begin();
    while (i != a.end() && j != b.end()) {
        if (*i < *j) ++i;
        else if (*j < *i) ++j;
        else {
            ++n;
            ++i;
            ++j;
        }
    }
    return n;
}

double ratio_or_one(std::size_t num, std::size_t den) {
    return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
}

void require_same_grid(const Mask& a, const Mask& b, const char* what) {
    if (a.dims != b.dims)
        throw DimensionError(std::string(what) + ": dims differ (" + std::to_string(a.dims.d) + "x" +
                             std::to_string(a.dims.h) + "x" + std::to_string(a.dims.w) + " vs " +
                             std::to_string(b.dims.d) + "x" + std::to_string(b.dims.h) + "x" +
                             std::to_string(b.dims.w) + ")");
}

}  // namespace

double instance_iou(const LesionInstance& a, const LesionInstance& b) {
    const std::size_t inter = intersection_size(a.voxels, b.voxels);
    const std::size_t uni = a.voxels.size() + b.voxels.size() - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

MatchResult match_lesions(const std::vector<LesionInstance>& pred, const std::vector<LesionInstance>& gt,
                          double iou_threshold) {
    if (!(iou_threshold >= 0 && iou_threshold < 1)) throw ConfigError("IoU threshold must lie in [0, 1)");
    std::unordered_map<std::size_t, std::size_t> gt_of_voxel;
    for (std::size_t g = 0; g < gt.size(); ++g)
        for (std::size_t v : gt[g].voxels) gt_of_voxel[v] = g;

    std::vector<MatchPair> candidates;
    for (std::size_t p = 0; p < pred.size(); ++p) {
        std::unordered_map<std::size_t, std::size_t> inter;
        for (std::size_t v : pred[p].voxels) {
            const auto it = gt_of_voxel.find(v);
            if (it != gt_of_voxel.end()) ++inter[it->second];
        }
        for (const auto& [g, n] : inter) {
            const double iou = static_cast<double>(n) /
                               static_cast<double>(pred[p].voxels.size() + gt[g].voxels.size() - n);
            candidates.push_back({p, g, iou});
        }
    }
    std::sort(candidates.begin(), candidates.end(), [](const MatchPair& a, const MatchPair& b) {
        if (a.iou != b.iou) return a.iou > b.iou;
        if (a.pred != b.pred) return a.pred < b.pred;
        return a.gt < b.gt;
    });

    MatchResult r;
    std::vector<bool> pred_used(pred.size(), false), gt_used(gt.size(), false);
    for (const auto& c : candidates) {
        if (!(c.iou > iou_threshold)) break;
        if (pred_used[c.pred] || gt_used[c.gt]) continue;
        pred_used[c.pred] = gt_used[c.gt] = true;
        r.matches.push_back(c);
    }
    for (std::size_t p = 0; p < pred.size(); ++p)
        if (!pred_used[p]) r.unmatched_pred.push_back(p);
    for (std::size_t g = 0; g < gt.size(); ++g)
        if (!gt_used[g]) r.unmatched_gt.push_back(g);
    r.tp = r.matches.size();
    r.fp = r.unmatched_pred.size();
    r.fn = r.unmatched_gt.size();
    r.precision = ratio_or_one(r.tp, r.tp + r.fp);
    r.recall = ratio_or_one(r.tp, r.tp + r.fn);
    return r;
}

OverlapMetrics overlap_metrics(const Mask& pred, const Mask& gt) {
    require_same_grid(pred, gt, "overlap_metrics");
    std::size_t np = 0, ng = 0, ni = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const bool p = pred.data[i] != 0, g = gt.data[i] != 0;
        np += p;
        ng += g;
        ni += p && g;
    }
    OverlapMetrics m;
    if (np + ng > 0) {
        m.dice = 2.0 * static_cast<double>(ni) / static_cast<double>(np + ng);
        m.voe = 1.0 - static_cast<double>(ni) / static_cast<double>(np + ng - ni);
    }
    if (ng > 0) m.rvd = (static_cast<double>(np) - static_cast<double>(ng)) / static_cast<double>(ng);
    return m;
}

std::vector<std::size_t> border_voxels(const Mask& mask) {
    const auto d = mask.dims;
    std::vector<std::size_t> out;
    for (std::size_t z = 0; z < d.d; ++z)
        for (std::size_t y = 0; y < d.h; ++y)
            for (std::size_t x = 0; x < d.w; ++x) {
                const std::size_t i = mask.index(z, y, x);
                if (!mask.data[i]) continue;
                const bool border = z == 0 || y == 0 || x == 0 || z + 1 == d.d || y + 1 == d.h || x + 1 == d.w ||
                                    !mask.at(z - 1, y, x) || !mask.at(z + 1, y, x) || !mask.at(z, y - 1, x) ||
                                    !mask.at(z, y + 1, x) || !mask.at(z, y, x - 1) || !mask.at(z, y, x + 1);
                if (border) out.push_back(i);
            }
    return out;
}

namespace {

struct Box {
    std::size_t z0, y0, x0, z1, y1, x1;  // inclusive
};

Box bounding_box(const Dims& d, const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    Box box{d.d, d.h, d.w, 0, 0, 0};
    for (const auto* list : {&a, &b})
        for (std::size_t i : *list) {
            const std::size_t z = i / d.plane(), y = (i / d.w) % d.h, x = i % d.w;
            box.z0 = std::min(box.z0, z);
            box.y0 = std::min(box.y0, y);
            box.x0 = std::min(box.x0, x);
            box.z1 = std::max(box.z1, z);
            box.y1 = std::max(box.y1, y);
            box.x1 = std::max(box.x1, x);
        }
    return box;
}

// Squared distances from each voxel of `from` to the nearest voxel of `to`, within `box`.
void directed_sq(const Dims& d, const Box& box, const Spacing& spacing, const std::vector<std::size_t>& from,
                 const std::vector<std::size_t>& to, std::vector<double>& out) {
    const Dims bd{box.z1 - box.z0 + 1, box.y1 - box.y0 + 1, box.x1 - box.x0 + 1};
    Mask target(bd, spacing, 0);
    const auto local = [&](std::size_t i) {
        return target.index(i / d.plane() - box.z0, (i / d.w) % d.h - box.y0, i % d.w - box.x0);
    };
    for (std::size_t i : to) target.data[local(i)] = 1;
    const auto dist2 = squared_distance_mm(target, spacing);
    for (std::size_t i : from) out.push_back(dist2[local(i)]);
}

}  // namespace

std::optional<SurfaceMetrics> surface_distances(const Mask& a, const Mask& b, const Spacing& spacing) {
    require_same_grid(a, b, "surface_distances");
    const auto ba = border_voxels(a), bb = border_voxels(b);
    if (ba.empty() || bb.empty()) return std::nullopt;
    const Box box = bounding_box(a.dims, ba, bb);
    std::vector<double> sq;
    sq.reserve(ba.size() + bb.size());
    directed_sq(a.dims, box, spacing, ba, bb, sq);
    directed_sq(a.dims, box, spacing, bb, ba, sq);
    SurfaceMetrics m;
    double sum = 0, sum_sq = 0;
    for (double s : sq) {
        const double dist = std::sqrt(s);
        sum += dist;
        sum_sq += s;
        m.msd_mm = std::max(m.msd_mm, dist);
    }
    const auto n = static_cast<double>(sq.size());
    m.assd_mm = sum / n;
    m.rmsd_mm = std::sqrt(sum_sq / n);
    return m;
}

namespace {

Mask instance_mask(const LesionInstance& inst, const Grid<std::uint8_t>& like) {
    Mask m(like.dims, like.spacing, 0);
    for (std::size_t v : inst.voxels) m.data[v] = 1;
    return m;
}

VoxelCounts counts(const Mask& pred, const Mask& gt) {
    VoxelCounts c;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        c.pred += pred.data[i] != 0;
        c.gt += gt.data[i] != 0;
        c.inter += pred.data[i] && gt.data[i];
    }
    return c;
}

double dice_of(const VoxelCounts& c) {
    return c.pred + c.gt == 0 ? 1.0 : 2.0 * static_cast<double>(c.inter) / static_cast<double>(c.pred + c.gt);
}

}  // namespace

CaseReport evaluate_case(const SegVolume& pred, const SegVolume& gt, const EvalConfig& config, const std::string& id) {
    if (pred.dims != gt.dims) require_same_grid(pred, gt, "evaluate_case");
    if (pred.spacing != gt.spacing) throw DimensionError("evaluate_case: prediction and ground truth spacing differ");
    validate_labels(pred);
    validate_labels(gt);
    CaseReport r;
    r.id = id;
    const Mask pl = liver_mask(pred), gl = liver_mask(gt);
    const Mask ps = lesion_mask(pred), gs = lesion_mask(gt);
    r.liver_counts = counts(pl, gl);
    r.lesion_counts = counts(ps, gs);
    r.liver_dice = dice_of(r.liver_counts);
    r.lesion_dice = dice_of(r.lesion_counts);

    const auto pi = connected_instances(ps, config.connectivity);
    const auto gi = connected_instances(gs, config.connectivity);
    r.pred_lesions = pi.size();
    r.gt_lesions = gi.size();
    for (double t : config.detection_thresholds) {
        const auto m = match_lesions(pi, gi, t);
        r.detection.push_back({t, m.tp, m.fp, m.fn, m.precision, m.recall});
    }
    for (const auto& p : match_lesions(pi, gi, 0.0).matches) r.detected_gt.push_back(p.gt);
    std::sort(r.detected_gt.begin(), r.detected_gt.end());

    for (const auto& pair : match_lesions(pi, gi, config.segmentation_iou_threshold).matches) {
        const Mask a = instance_mask(pi[pair.pred], gt), b = instance_mask(gi[pair.gt], gt);
        const auto o = overlap_metrics(a, b);
        r.lesions.push_back({pair.pred, pair.gt, pair.iou, o.dice, o.voe, o.rvd, surface_distances(a, b, gt.spacing)});
    }
    return r;
}

Summary aggregate(const std::vector<CaseReport>& reports) {
    std::vector<const CaseReport*> sorted;
    for (const auto& r : reports) sorted.push_back(&r);
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) { return a->id < b->id; });

    Summary s;
    s.cases = sorted.size();
    if (sorted.empty()) return s;
    VoxelCounts lesion, liver;
    double lesion_sum = 0, liver_sum = 0;
    s.detection = sorted.front()->detection;
    for (auto& d : s.detection) d.tp = d.fp = d.fn = 0;
    double dice = 0, voe = 0, rvd = 0, assd = 0, msd = 0, rmsd = 0;
    std::size_t n_rvd = 0, n_surface = 0;
    for (const auto* r : sorted) {
        lesion.pred += r->lesion_counts.pred;
        lesion.gt += r->lesion_counts.gt;
        lesion.inter += r->lesion_counts.inter;
        liver.pred += r->liver_counts.pred;
        liver.gt += r->liver_counts.gt;
        liver.inter += r->liver_counts.inter;
        lesion_sum += r->lesion_dice;
        liver_sum += r->liver_dice;
        if (r->detection.size() != s.detection.size())
            throw UsageError("case " + r->id + " was evaluated with different detection thresholds");
        for (std::size_t k = 0; k < s.detection.size(); ++k) {
            if (r->detection[k].threshold != s.detection[k].threshold)
                throw UsageError("case " + r->id + " was evaluated with different detection thresholds");
            s.detection[k].tp += r->detection[k].tp;
            s.detection[k].fp += r->detection[k].fp;
            s.detection[k].fn += r->detection[k].fn;
        }
        for (const auto& l : r->lesions) {
            ++s.detected_lesions;
            dice += l.dice;
            voe += l.voe;
            if (l.rvd) {
                rvd += *l.rvd;
                ++n_rvd;
            }
            if (l.surface) {
                assd += l.surface->assd_mm;
                msd += l.surface->msd_mm;
                rmsd += l.surface->rmsd_mm;
                ++n_surface;
            }
        }
    }
    for (auto& d : s.detection) {
        d.precision = ratio_or_one(d.tp, d.tp + d.fp);
        d.recall = ratio_or_one(d.tp, d.tp + d.fn);
    }
    const auto n = static_cast<double>(s.cases);
    s.global_dice = dice_of(lesion);
    s.dice_per_case = lesion_sum / n;
    s.liver_global_dice = dice_of(liver);
    s.liver_dice_per_case = liver_sum / n;
    if (s.detected_lesions) {
        const auto k = static_cast<double>(s.detected_lesions);
        s.dice = dice / k;
        s.voe = voe / k;
    }
    if (n_rvd) s.rvd = rvd / static_cast<double>(n_rvd);
    if (n_surface) {
        const auto k = static_cast<double>(n_surface);
        s.assd_mm = assd / k;
        s.msd_mm = msd / k;
        s.rmsd_mm = rmsd / k;
    }
    return s;
}

// ---- output

namespace {

std::string num(std::optional<double> v, double factor = 1.0) {
    if (!v) return "";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", *v * factor);
    return buf;
}

json jnum(std::optional<double> v, double factor = 1.0) { return v ? json(*v * factor) : json(nullptr); }

std::string threshold_label(double t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", t);
    return buf;
}

struct LesionMeans {
    std::optional<double> dice, voe, rvd, assd, msd, rmsd;
};

LesionMeans case_means(const CaseReport& r) {
    LesionMeans m;
    if (r.lesions.empty()) return m;
    double dice = 0, voe = 0, rvd = 0, assd = 0, msd = 0, rmsd = 0;
    std::size_t n_rvd = 0, n_surface = 0;
    for (const auto& l : r.lesions) {
        dice += l.dice;
        voe += l.voe;
        if (l.rvd) {
            rvd += *l.rvd;
            ++n_rvd;
        }
        if (l.surface) {
            assd += l.surface->assd_mm;
            msd += l.surface->msd_mm;
            rmsd += l.surface->rmsd_mm;
            ++n_surface;
        }
    }
    const auto k = static_cast<double>(r.lesions.size());
    m.dice = dice / k;
    m.voe = voe / k;
    if (n_rvd) m.rvd = rvd / static_cast<double>(n_rvd);
    if (n_surface) {
        const auto s = static_cast<double>(n_surface);
        m.assd = assd / s;
        m.msd = msd / s;
        m.rmsd = rmsd / s;
    }
    return m;
}

}  // namespace

std::string cases_csv(const std::vector<CaseReport>& reports) {
    std::string out = "case,Dice per case,Liver Dice,Dice,VOE,RVD,ASSD,MSD,RMSD";
    if (!reports.empty())
        for (const auto& d : reports.front().detection) {
            const auto t = threshold_label(d.threshold);
            out += ",Precision (IoU>" + t + "),Recall (IoU>" + t + ")";
        }
    out += ",GT lesions,Pred lesions\n";
    for (const auto& r : reports) {
        const auto m = case_means(r);
        out += r.id + "," + num(r.lesion_dice) + "," + num(r.liver_dice) + "," + num(m.dice) + "," + num(m.voe, 100) +
               "," + num(m.rvd, 100) + "," + num(m.assd) + "," + num(m.msd) + "," + num(m.rmsd);
        for (const auto& d : r.detection) out += "," + num(d.precision) + "," + num(d.recall);
        out += "," + std::to_string(r.gt_lesions) + "," + std::to_string(r.pred_lesions) + "\n";
    }
    return out;
}

std::string summary_csv(const Summary& s) {
    std::string head = "Dice,VOE,RVD,ASSD,MSD,RMSD";
    std::string row = num(s.dice) + "," + num(s.voe, 100) + "," + num(s.rvd, 100) + "," + num(s.assd_mm) + "," +
                      num(s.msd_mm) + "," + num(s.rmsd_mm);
    for (const auto& d : s.detection) {
        const auto t = threshold_label(d.threshold);
        head += ",Precision (IoU>" + t + "),Recall (IoU>" + t + ")";
        row += "," + num(d.precision) + "," + num(d.recall);
    }
    head += ",Global Dice,Dice per case,Liver Global Dice,Liver Dice per case,Cases,Detected lesions\n";
    row += "," + num(s.global_dice) + "," + num(s.dice_per_case) + "," + num(s.liver_global_dice) + "," +
           num(s.liver_dice_per_case) + "," + std::to_string(s.cases) + "," + std::to_string(s.detected_lesions) + "\n";
    return head + row;
}

std::string report_json(const std::vector<CaseReport>& reports, const Summary& s) {
    json cases = json::array();
    for (const auto& r : reports) {
        json lesions = json::array();
        for (const auto& l : r.lesions)
            lesions.push_back({{"pred_id", l.pred_id},
                               {"gt_id", l.gt_id},
                               {"IoU", l.iou},
                               {"Dice", l.dice},
                               {"VOE", l.voe * 100},
                               {"RVD", jnum(l.rvd, 100)},
                               {"ASSD", l.surface ? json(l.surface->assd_mm) : json(nullptr)},
                               {"MSD", l.surface ? json(l.surface->msd_mm) : json(nullptr)},
                               {"RMSD", l.surface ? json(l.surface->rmsd_mm) : json(nullptr)}});
        json detection = json::array();
        for (const auto& d : r.detection)
            detection.push_back({{"IoU threshold", d.threshold},
                                 {"TP", d.tp},
                                 {"FP", d.fp},
                                 {"FN", d.fn},
                                 {"Precision", d.precision},
                                 {"Recall", d.recall}});
        cases.push_back({{"case", r.id},
                         {"Dice per case", r.lesion_dice},
                         {"Liver Dice", r.liver_dice},
                         {"GT lesions", r.gt_lesions},
                         {"Pred lesions", r.pred_lesions},
                         {"lesions", lesions},
                         {"detection", detection}});
    }
    json detection = json::array();
    for (const auto& d : s.detection)
        detection.push_back({{"IoU threshold", d.threshold},
                             {"TP", d.tp},
                             {"FP", d.fp},
                             {"FN", d.fn},
                             {"Precision", d.precision},
                             {"Recall", d.recall}});
    json summary = {{"Cases", s.cases},
                    {"Global Dice", s.global_dice},
                    {"Dice per case", s.dice_per_case},
                    {"Liver Global Dice", s.liver_global_dice},
                    {"Liver Dice per case", s.liver_dice_per_case},
                    {"Detected lesions", s.detected_lesions},
                    {"Dice", jnum(s.dice)},
                    {"VOE", jnum(s.voe, 100)},
                    {"RVD", jnum(s.rvd, 100)},
                    {"ASSD", jnum(s.assd_mm)},
                    {"MSD", jnum(s.msd_mm)},
                    {"RMSD", jnum(s.rmsd_mm)},
                    {"detection", detection}};
    return json{{"cases", cases}, {"summary", summary}}.dump(2);
}

}  // namespace tandem
