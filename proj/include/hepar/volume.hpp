#pragma once

#include "hepar/image.hpp"
#include "hepar/transform.hpp"

namespace hepar {

enum class Interpolation { Trilinear, Nearest };

/// Linear map of [min, max] onto integer values 0..255 (stored as float),
/// rounded half away from zero. A constant volume maps to all zeros.
VoxelVolume normalize_u8(const VoxelVolume& v);

/// Sample `v` on `target`: output voxel p takes v at world_map(p).
/// Samples outside v's grid take 0.
VoxelVolume resample(const VoxelVolume& v, const Grid& target, const SimilarityTransform3D& world_map,
                     Interpolation interp);

LabelMask resample(const LabelMask& m, const Grid& target, const SimilarityTransform3D& world_map);

struct ResampledVolume {
    VoxelVolume image;
    LabelMask valid;  // 1 where the sample fell inside the source grid
};

ResampledVolume resample_with_validity(const VoxelVolume& v, const Grid& target,
                                       const SimilarityTransform3D& world_map, Interpolation interp);

/// Sampled Gaussian, radius ceil(3 sigma / h) taps, normalized to sum 1.
std::vector<float> gaussian_kernel(double sigma_mm, double spacing_mm);

/// Separable Gaussian smoothing with clamp-to-edge boundaries.
VoxelVolume gaussian_smooth(const VoxelVolume& v, double sigma_mm);

/// Applies a separable filter: weights[a] along axis a (odd lengths).
VoxelVolume separable_filter(const VoxelVolume& v, const std::array<std::vector<float>, 3>& weights);

/// 2x2x2 block average; odd trailing planes are dropped. Spacing doubles
/// and the origin moves to the first block's center.
VoxelVolume downsample2(const VoxelVolume& v);
LabelMask downsample2_any(const LabelMask& m);

/// Binary dilation with the 6-neighbourhood, iterated `radius` times.
LabelMask dilate(const LabelMask& m, int radius);

/// Connected components of the foreground (26-connectivity).
int connected_components(const LabelMask& m);

}  // namespace hepar
