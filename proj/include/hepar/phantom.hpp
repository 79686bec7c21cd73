#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hepar/image.hpp"
#include "hepar/transform.hpp"

namespace hepar {

/// Monotone intensity transfer applied to the [0, 1] base anatomy.
enum class IntensityCurve { Identity, Gamma, Inverted, Sigmoid };

std::string to_string(IntensityCurve c);
IntensityCurve parse_intensity_curve(const std::string& s);
double apply_curve(IntensityCurve c, double x);

/// Spherical bump unioned with the organ ellipsoid (anatomy coordinates, mm).
struct Lobe {
    Vec3 center_mm{0, 0, 0};
    double radius_mm = 0.0;
};

/// Synthetic abdomen: a body ellipsoid, an organ ellipsoid with optional
/// lobes carrying a wave texture, and a bright off-center blob. The image is
/// rendered so that registering an untransformed phantom (fixed) with this
/// one (moving) recovers `transform`.
struct PhantomSpec {
    Index3 dims{64, 64, 64};
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 semi_axes_mm{22.0, 17.0, 14.0};
    Vec3 organ_center_mm{3.0, -2.0, 0.0};
    std::vector<Lobe> lobes;
    double edge_width_mm = 1.0;
    double texture_amplitude = 0.06;
    double texture_period_mm = 5.0;
    Vec3 grating_direction{1.0, 0.35, 0.2};
    /// 0 = isotropic wave mixture, 1 = single oriented grating.
    double coherence = 0.0;
    double noise_sigma = 0.02;
    IntensityCurve curve = IntensityCurve::Identity;
    double intensity_scale = 1000.0;
    SimilarityTransform3D transform;
    /// Drives texture phases/directions; shared by all modalities of a case.
    std::uint64_t anatomy_seed = 0;
    /// Drives the additive noise; distinct per image.
    std::uint64_t noise_seed = 0;

    void validate() const;
};

struct Phantom {
    VoxelVolume image;
    LabelMask mask;
};

/// Grid of the given size centered on the world origin, identity direction.
Grid centered_grid(const Index3& dims, const Vec3& spacing);

Phantom make_phantom(const PhantomSpec& spec);

/// Organ membership of an anatomy-space point, the analytic ground truth.
bool phantom_organ_contains(const PhantomSpec& spec, const Vec3& anatomy_point);

}  // namespace hepar
