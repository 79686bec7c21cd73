#include "hepar/transform.hpp"

#include <cmath>

#include "hepar/error.hpp"

namespace hepar {

SimilarityTransform3D::SimilarityTransform3D(const Vec3& euler_angles, const Vec3& translation, double scale,
                                             const Vec3& center)
    : angles_(euler_angles),
      translation_(translation),
      scale_(scale),
      center_(center),
      rotation_(euler_zyx(euler_angles)) {}

SimilarityTransform3D SimilarityTransform3D::identity(const Vec3& center) { return {{0, 0, 0}, {0, 0, 0}, 1.0, center}; }

Mat3 SimilarityTransform3D::linear() const noexcept {
    Mat3 m = rotation_;
    for (auto& row : m)
        for (auto& x : row) x *= scale_;
    return m;
}

Vec3 SimilarityTransform3D::offset() const noexcept { return center_ + translation_ - linear() * center_; }

void SimilarityTransform3D::validate() const {
    auto finite = [](const Vec3& v) { return std::isfinite(v[0]) && std::isfinite(v[1]) && std::isfinite(v[2]); };
    require(std::isfinite(scale_) && scale_ > 0.0, ErrorKind::InvalidTransform,
            "similarity transform scale must be positive, got " + std::to_string(scale_));
    require(finite(angles_) && finite(translation_) && finite(center_), ErrorKind::InvalidTransform,
            "similarity transform has non-finite fields");
}

SimilarityTransform3D SimilarityTransform3D::inverse() const {
    validate();
    // p = c + (1/s) R^T (q - c - t)  ==  c + s' R' (q - c) + t'  with t' = -s' R^T t.
    const Mat3 rt = transpose(rotation_);
    const double inv_s = 1.0 / scale_;
    const Vec3 t = -inv_s * (rt * translation_);
    SimilarityTransform3D out(euler_zyx_angles(rt), t, inv_s, center_);
    out.rotation_ = rt;
    return out;
}

std::array<double, 7> SimilarityTransform3D::parameters() const noexcept {
    return {angles_[0], angles_[1], angles_[2], translation_[0], translation_[1], translation_[2], scale_};
}

SimilarityTransform3D SimilarityTransform3D::from_parameters(const std::array<double, 7>& p, const Vec3& center) {
    return {{p[0], p[1], p[2]}, {p[3], p[4], p[5]}, p[6], center};
}

SimilarityTransform3D compose(const SimilarityTransform3D& outer, const SimilarityTransform3D& inner) {
    // outer(inner(x)) = c_i + s_o s_i R_o R_i (x - c_i) + [outer(c_i + t_i) - c_i]
    const Mat3 r = outer.rotation() * inner.rotation();
    const Vec3& c = inner.center();
    const Vec3 t = outer.apply(c + inner.translation()) - c;
    SimilarityTransform3D out(euler_zyx_angles(r), t, outer.scale() * inner.scale(), c);
    return out;
}

}  // namespace hepar
