#pragma once

#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hepar/image.hpp"

namespace hepar {

/// 2|a∩b| / (|a|+|b|); two empty masks score 1.
double dice(const LabelMask& a, const LabelMask& b);

struct HausdorffResult {
    double hd_mm = 0.0;
    double hd95_mm = 0.0;
};

/// Foreground voxels with a 6-neighbour outside the mask or the grid.
LabelMask surface_voxels(const LabelMask& m);

/// Exact Euclidean distance (mm) from every voxel to the nearest nonzero
/// voxel of `seeds`; +inf everywhere when `seeds` is empty.
std::vector<double> distance_transform(const LabelMask& seeds);

/// Surface-to-surface distances. hd is the symmetric maximum; hd95 is the
/// larger of the two directed 95th percentiles (linear interpolation).
/// UndefinedMetric when either mask is empty.
HausdorffResult hausdorff(const LabelMask& a, const LabelMask& b);

/// Mann-Whitney estimate with ties counted 1/2. UndefinedMetric unless
/// both classes are present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Fraction correct with score >= threshold predicted positive.
double accuracy(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

struct DiceCeWeights {
    double w_dc = 1.0;
    double w_ce = 1.0;
    double f_smooth = 1.0;
    double eps = 1e-8;
};

/// -w_dc (2Σpy + f)/(Σp + Σy + f + eps) - w_ce Σ y log(max(p, 1e-12)).
/// The cross-entropy term covers foreground voxels only.
double dice_ce_loss(const VoxelVolume& pred, const LabelMask& truth, const DiceCeWeights& w = {});

struct SegmentationCase {
    std::string case_id;
    std::string group;  // modality
    double dice = 0.0;
    // empty when a mask is empty
    std::optional<double> hausdorff_mm;
    std::optional<double> hd95_mm;
};

SegmentationCase evaluate_segmentation(std::string case_id, std::string group, const LabelMask& pred,
                                       const LabelMask& truth);

struct SegmentationSummary {
    std::string group;
    int n = 0;
    double dice_mean = 0.0;
    double dice_std = 0.0;
    // over the cases where the distance is defined
    int n_distance = 0;
    double hausdorff_mean_mm = 0.0;
    double hd95_mean_mm = 0.0;
};

struct ClassificationResult {
    std::string name;  // task, or task/group
    int n = 0;
    int n_positive = 0;
    double auc = 0.0;
    double acc = 0.0;
};

ClassificationResult evaluate_classification(std::string name, std::span<const double> scores,
                                             std::span<const int> labels, double threshold = 0.5);

struct EvalReport {
    std::vector<SegmentationCase> segmentation;
    std::vector<ClassificationResult> classification;

    /// Per-group means in group-name order, then an "all" row.
    [[nodiscard]] std::vector<SegmentationSummary> segmentation_summary() const;
};

nlohmann::json to_json(const EvalReport& r);
void write_table(std::ostream& out, const EvalReport& r);

}  // namespace hepar
