#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tandem/volume.hpp"

namespace tandem {

struct LesionInstance {
    std::size_t id = 0;
    std::vector<std::size_t> voxels;  // ascending linear indices
    double volume_mm3 = 0.0;
};

/// Every connected component, ordered by its first voxel in z-major raster
/// order (the lexicographically smallest (z, y, x)); ids are 0, 1, ...
std::vector<LesionInstance> connected_instances(const Mask& mask, int connectivity = 6);

struct MatchPair {
    std::size_t pred = 0;
    std::size_t gt = 0;
    double iou = 0.0;
};

struct MatchResult {
    std::vector<MatchPair> matches;  // in acceptance order
    std::vector<std::size_t> unmatched_pred;
    std::vector<std::size_t> unmatched_gt;
    std::size_t tp = 0, fp = 0, fn = 0;
    double precision = 1.0;  // 0/0 -> 1
    double recall = 1.0;
};

double instance_iou(const LesionInstance& a, const LesionInstance& b);

/// Greedy one-to-one matching: candidate pairs sorted by descending IoU
/// (ties by pred id, then gt id) are accepted while IoU > threshold and both
/// sides are still free.
MatchResult match_lesions(const std::vector<LesionInstance>& pred, const std::vector<LesionInstance>& gt,
                          double iou_threshold);

struct OverlapMetrics {
    double dice = 1.0;  // 1 when both masks are empty
    double voe = 0.0;   // 0 when both masks are empty
    std::optional<double> rvd;  // undefined for an empty ground truth
};

/// `pred` against ground truth `gt`. Throws DimensionError on a dims mismatch.
OverlapMetrics overlap_metrics(const Mask& pred, const Mask& gt);

struct SurfaceMetrics {
    double assd_mm = 0.0;
    double msd_mm = 0.0;
    double rmsd_mm = 0.0;
};

/// Border voxels: mask voxels with a face neighbour outside the mask (the
/// volume edge counts as outside). Both directed nearest-border distance
/// lists are pooled before taking the mean, max and root mean square.
/// Undefined when either mask is empty.
std::optional<SurfaceMetrics> surface_distances(const Mask& a, const Mask& b, const Spacing& spacing);

/// Linear indices of border voxels, ascending.
std::vector<std::size_t> border_voxels(const Mask& mask);

struct EvalConfig {
    int connectivity = 6;
    std::vector<double> detection_thresholds{0.0, 0.5};
    /// Detected lesions whose segmentation metrics are reported.
    double segmentation_iou_threshold = 0.5;
};

struct LesionReport {
    std::size_t pred_id = 0, gt_id = 0;
    double iou = 0.0;
    double dice = 0.0, voe = 0.0;
    std::optional<double> rvd;
    std::optional<SurfaceMetrics> surface;
};

struct DetectionReport {
    double threshold = 0.0;
    std::size_t tp = 0, fp = 0, fn = 0;
    double precision = 1.0, recall = 1.0;
};

struct VoxelCounts {
    std::size_t pred = 0, gt = 0, inter = 0;
};

struct CaseReport {
    std::string id;
    std::vector<LesionReport> lesions;
    std::vector<DetectionReport> detection;
    /// gt instance ids detected at IoU > 0.
    std::vector<std::size_t> detected_gt;
    std::size_t gt_lesions = 0, pred_lesions = 0;
    double lesion_dice = 1.0;
    double liver_dice = 1.0;
    VoxelCounts lesion_counts, liver_counts;
};

CaseReport evaluate_case(const SegVolume& pred, const SegVolume& gt, const EvalConfig& config = {},
                         const std::string& id = "");

struct Summary {
    std::size_t cases = 0;
    double global_dice = 1.0;    // lesion, from pooled voxel counts
    double dice_per_case = 1.0;  // lesion, mean of case dices
    double liver_global_dice = 1.0;
    double liver_dice_per_case = 1.0;
    std::vector<DetectionReport> detection;  // pooled counts
    std::size_t detected_lesions = 0;        // TP pairs with segmentation metrics
    std::optional<double> dice, voe, rvd, assd_mm, msd_mm, rmsd_mm;  // means over lesions
};

/// Deterministic fold over the reports sorted by id.
Summary aggregate(const std::vector<CaseReport>& reports);

/// VOE and RVD in percent; undefined values are empty CSV fields / JSON null.
std::string cases_csv(const std::vector<CaseReport>& reports);
std::string summary_csv(const Summary& summary);
std::string report_json(const std::vector<CaseReport>& reports, const Summary& summary);

}  // namespace tandem
