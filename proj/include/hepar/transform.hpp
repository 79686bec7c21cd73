#pragma once

#include <array>

#include "hepar/geometry.hpp"

namespace hepar {

/// p -> center + scale * R * (p - center) + translation, R = Rz*Ry*Rx.
/// Maps reference (fixed) world points onto moving world points.
class SimilarityTransform3D {
public:
    SimilarityTransform3D() = default;
    SimilarityTransform3D(const Vec3& euler_angles, const Vec3& translation, double scale, const Vec3& center);

    static SimilarityTransform3D identity(const Vec3& center = {0, 0, 0});
    static SimilarityTransform3D translation(const Vec3& t) { return {{0, 0, 0}, t, 1.0, {0, 0, 0}}; }

    [[nodiscard]] Vec3 apply(const Vec3& p) const noexcept {
        return center_ + (scale_ * (rotation_ * (p - center_))) + translation_;
    }

    [[nodiscard]] const Vec3& euler_angles() const noexcept { return angles_; }
    [[nodiscard]] const Vec3& translation() const noexcept { return translation_; }
    [[nodiscard]] double scale() const noexcept { return scale_; }
    [[nodiscard]] const Vec3& center() const noexcept { return center_; }
    [[nodiscard]] const Mat3& rotation() const noexcept { return rotation_; }

    /// Linear part scale*R.
    [[nodiscard]] Mat3 linear() const noexcept;
    /// Offset b such that apply(p) == linear()*p + b.
    [[nodiscard]] Vec3 offset() const noexcept;

    /// Throws InvalidTransform unless scale > 0 and all fields finite.
    void validate() const;

    [[nodiscard]] SimilarityTransform3D inverse() const;

    /// Seven optimizer parameters: 3 angles, 3 translations, scale.
    [[nodiscard]] std::array<double, 7> parameters() const noexcept;
    static SimilarityTransform3D from_parameters(const std::array<double, 7>& p, const Vec3& center);

private:
    Vec3 angles_{0, 0, 0};
    Vec3 translation_{0, 0, 0};
    double scale_ = 1.0;
    Vec3 center_{0, 0, 0};
    Mat3 rotation_ = identity3();
};

/// (outer ∘ inner)(p) = outer(inner(p)); result keeps inner's center.
SimilarityTransform3D compose(const SimilarityTransform3D& outer, const SimilarityTransform3D& inner);

inline Vec3 transform_point(const SimilarityTransform3D& t, const Vec3& p) { return t.apply(p); }

}  // namespace hepar
