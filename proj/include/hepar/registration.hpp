#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hepar/image.hpp"
#include "hepar/transform.hpp"
#include "hepar/volume.hpp"

namespace hepar {

struct IntensityRange {
    double lo = 0.0;
    double hi = 0.0;
};

struct JointHistogram {
    int bins = 0;
    std::vector<double> counts;  // row = fixed bin, column = moving bin
    IntensityRange fixed_range;
    IntensityRange moving_range;

    [[nodiscard]] double at(int f, int m) const { return counts[static_cast<std::size_t>(f) * bins + m]; }
    [[nodiscard]] double total() const;
    [[nodiscard]] std::vector<double> fixed_marginal() const;
    [[nodiscard]] std::vector<double> moving_marginal() const;
    [[nodiscard]] JointHistogram transposed() const;
};

/// Bins are uniform over each image's observed [min, max] inside the
/// contributing region. `valid` marks in-bounds moving samples; a null
/// pointer means every voxel is valid.
JointHistogram joint_histogram(const VoxelVolume& fixed, const VoxelVolume& moving_resampled,
                               const LabelMask* region, int bins, const LabelMask* valid = nullptr);

/// Mutual information in nats.
double mutual_information(const JointHistogram& h);

VoxelVolume warp(const VoxelVolume& moving, const SimilarityTransform3D& t, const Grid& reference,
                 Interpolation interp = Interpolation::Trilinear);

LabelMask transfer_label(const LabelMask& annotated_on_moving, const SimilarityTransform3D& t, const Grid& reference);

struct RegistrationConfig {
    int bins = 32;
    int pyramid_levels = 3;
    int max_iterations = 200;
    double initial_step = 1.0;
    double step_shrink = 0.5;
    double tolerance = 1e-6;
    double min_step = 1e-4;
    double gradient_step = 1e-3;
    /// mm equivalent of one unit of each parameter (rad, mm, scale); the
    /// optimizer works on parameter / scale. Empty = rotation and scale 1,
    /// translation the gradient-weighted RMS radius of the fixed volume.
    std::optional<std::array<double, 7>> parameter_scales;
    double sample_fraction = 1.0;
    /// Evaluations whose overlap falls below this fraction of the overlap at
    /// the level's starting transform are treated as insufficient overlap.
    double min_overlap_ratio = 0.5;
    /// Gaussian pre-smoothing of both images at every level, in voxels of
    /// that level; 0 disables.
    double smoothing_voxels = 1.0;

    void validate() const;
};

struct IterationRecord {
    int level = 0;
    int iteration = 0;
    double mi = 0.0;
    double step = 0.0;
    bool accepted = false;
    std::array<double, 7> parameters{};
};

struct RegistrationResult {
    SimilarityTransform3D transform;
    /// Metric at full resolution (after the configured pre-smoothing) at
    /// the returned transform and at the starting transform.
    double mi = 0.0;
    double initial_mi = 0.0;
    int iterations = 0;
    std::array<double, 7> parameter_scales{};
    std::vector<IterationRecord> log;
};

/// Finds T maximizing MI(fixed, moving∘T); T maps fixed world points onto
/// moving world points.
RegistrationResult register_images(const VoxelVolume& fixed, const VoxelVolume& moving,
                                   const RegistrationConfig& cfg = {},
                                   const std::optional<SimilarityTransform3D>& init = std::nullopt,
                                   const LabelMask* region = nullptr);

/// Dense MI of `moving` warped by `t` against `fixed` at full resolution.
double evaluate_mi(const VoxelVolume& fixed, const VoxelVolume& moving, const SimilarityTransform3D& t, int bins,
                   const LabelMask* region = nullptr);

nlohmann::json transform_to_json(const SimilarityTransform3D& t, double mi, int iterations);
SimilarityTransform3D transform_from_json(const nlohmann::json& j);

}  // namespace hepar
