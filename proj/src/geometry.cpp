#include "hepar/geometry.hpp"

#include <algorithm>

namespace hepar {

Mat3 euler_zyx(const Vec3& angles) {
    const double ca = std::cos(angles[0]), sa = std::sin(angles[0]);
    const double cb = std::cos(angles[1]), sb = std::sin(angles[1]);
    const double cg = std::cos(angles[2]), sg = std::sin(angles[2]);
    return {{{cg * cb, cg * sb * sa - sg * ca, cg * sb * ca + sg * sa},
             {sg * cb, sg * sb * sa + cg * ca, sg * sb * ca - cg * sa},
             {-sb, cb * sa, cb * ca}}};
}

Vec3 euler_zyx_angles(const Mat3& r) {
    const double cb = std::hypot(r[0][0], r[1][0]);
    const double beta = std::atan2(-r[2][0], cb);
    if (cb > 1e-12) return {std::atan2(r[2][1], r[2][2]), beta, std::atan2(r[1][0], r[0][0])};
    // Gimbal lock: fold gamma into alpha.
    return {std::atan2(-r[1][2], r[1][1]), beta, 0.0};
}

double rotation_angle_between(const Mat3& a, const Mat3& b) {
    const Mat3 rel = transpose(a) * b;
    const double c = (rel[0][0] + rel[1][1] + rel[2][2] - 1.0) / 2.0;
    return std::acos(std::clamp(c, -1.0, 1.0));
}

}  // namespace hepar
