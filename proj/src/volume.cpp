#include "hepar/volume.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "hepar/simd/kernels.hpp"

namespace hepar {

namespace {

// Continuous source index as an affine function of the target voxel index.
struct IndexMap {
    Mat3 a;
    Vec3 b;

    [[nodiscard]] Vec3 at(int i, int j, int k) const noexcept {
        return Vec3{a[0][0] * i + a[0][1] * j + a[0][2] * k, a[1][0] * i + a[1][1] * j + a[1][2] * k,
                    a[2][0] * i + a[2][1] * j + a[2][2] * k} +
               b;
    }
};

IndexMap make_index_map(const Grid& source, const Grid& target, const SimilarityTransform3D& map) {
    map.validate();
    // idx_src = S_s^-1 D_s^T (L (O_t + D_t S_t ijk) + off - O_s)
    Mat3 src_inv = transpose(source.direction);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) src_inv[r][c] /= source.spacing[r];
    Mat3 tgt = target.direction;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) tgt[r][c] *= target.spacing[c];
    const Mat3 lin = map.linear();
    IndexMap m;
    m.a = src_inv * (lin * tgt);
    m.b = src_inv * (lin * target.origin + map.offset() - source.origin);
    return m;
}

// Removes round-off so that exact grid alignments sample exact voxels.
double snap(double x) {
    const double r = std::round(x);
    return std::abs(x - r) < 1e-6 ? r : x;
}

}  // namespace

VoxelVolume normalize_u8(const VoxelVolume& v) {
    const auto data = v.data();
    VoxelVolume out(v.grid(), 0.0f);
    if (data.empty()) return out;
    const auto [lo_it, hi_it] = std::minmax_element(data.begin(), data.end());
    const double lo = *lo_it, hi = *hi_it;
    require(std::isfinite(lo) && std::isfinite(hi), ErrorKind::Contract, "normalize_u8 requires finite input");
    if (hi == lo) return out;
    simd::active_kernels().normalize_u8(data.data(), data.size(), lo, hi, out.data().data());
    return out;
}

VoxelVolume resample(const VoxelVolume& v, const Grid& target, const SimilarityTransform3D& world_map,
                     Interpolation interp) {
    return resample_with_validity(v, target, world_map, interp).image;
}

ResampledVolume resample_with_validity(const VoxelVolume& v, const Grid& target,
                                       const SimilarityTransform3D& world_map, Interpolation interp) {
    const IndexMap m = make_index_map(v.grid(), target, world_map);
    const auto& d = v.dims();
    VoxelVolume out(target, 0.0f);
    LabelMask valid(target, 0);
    const std::size_t sy = static_cast<std::size_t>(d[0]);
    const std::size_t sz = sy * static_cast<std::size_t>(d[1]);
    const auto src = v.data();
    for (int k = 0; k < target.dims[2]; ++k)
        for (int j = 0; j < target.dims[1]; ++j)
            for (int i = 0; i < target.dims[0]; ++i) {
                const Vec3 raw = m.at(i, j, k);
                const Vec3 idx{snap(raw[0]), snap(raw[1]), snap(raw[2])};
                float value = 0.0f;
                if (interp == Interpolation::Nearest) {
                    const int x = static_cast<int>(std::round(idx[0]));
                    const int y = static_cast<int>(std::round(idx[1]));
                    const int z = static_cast<int>(std::round(idx[2]));
                    if (std::isfinite(idx[0]) && v.grid().contains(x, y, z)) {
                        value = v(x, y, z);
                        valid(i, j, k) = 1;
                    }
                } else {
                    bool inside = true;
                    for (int a = 0; a < 3; ++a) inside = inside && idx[a] >= 0.0 && idx[a] <= d[a] - 1;
                    if (inside) {
                        std::array<int, 3> i0{};
                        std::array<double, 3> f{};
                        std::array<std::size_t, 3> step{1, sy, sz};
                        for (int a = 0; a < 3; ++a) {
                            i0[a] = std::min(static_cast<int>(std::floor(idx[a])), std::max(d[a] - 2, 0));
                            f[a] = idx[a] - i0[a];
                            if (d[a] == 1) step[a] = 0;
                        }
                        const std::size_t o = v.grid().offset(i0[0], i0[1], i0[2]);
                        auto at = [&](int dx, int dy, int dz) -> double {
                            return src[o + dx * step[0] + dy * step[1] + dz * step[2]];
                        };
                        auto lerp = [](double a, double b, double t) { return (1.0 - t) * a + t * b; };
                        const double c00 = lerp(at(0, 0, 0), at(1, 0, 0), f[0]);
                        const double c10 = lerp(at(0, 1, 0), at(1, 1, 0), f[0]);
                        const double c01 = lerp(at(0, 0, 1), at(1, 0, 1), f[0]);
                        const double c11 = lerp(at(0, 1, 1), at(1, 1, 1), f[0]);
                        const double c0 = lerp(c00, c10, f[1]);
                        const double c1 = lerp(c01, c11, f[1]);
                        value = static_cast<float>(lerp(c0, c1, f[2]));
                        valid(i, j, k) = 1;
                    }
                }
                out(i, j, k) = value;
            }
    return {std::move(out), std::move(valid)};
}

LabelMask resample(const LabelMask& m, const Grid& target, const SimilarityTransform3D& world_map) {
    const IndexMap map = make_index_map(m.grid(), target, world_map);
    LabelMask out(target, 0);
    for (int k = 0; k < target.dims[2]; ++k)
        for (int j = 0; j < target.dims[1]; ++j)
            for (int i = 0; i < target.dims[0]; ++i) {
                const Vec3 idx = map.at(i, j, k);
                if (!std::isfinite(idx[0]) || !std::isfinite(idx[1]) || !std::isfinite(idx[2])) continue;
                const int x = static_cast<int>(std::round(snap(idx[0])));
                const int y = static_cast<int>(std::round(snap(idx[1])));
                const int z = static_cast<int>(std::round(snap(idx[2])));
                if (m.grid().contains(x, y, z)) out(i, j, k) = m(x, y, z);
            }
    return out;
}

namespace {

Grid half_grid(const Grid& g) {
    Grid h = g;
    for (int a = 0; a < 3; ++a) {
        h.dims[a] = std::max(1, g.dims[a] / 2);
        h.spacing[a] = g.dims[a] >= 2 ? 2.0 * g.spacing[a] : g.spacing[a];
    }
    h.origin = g.world(Vec3{g.dims[0] >= 2 ? 0.5 : 0.0, g.dims[1] >= 2 ? 0.5 : 0.0, g.dims[2] >= 2 ? 0.5 : 0.0});
    return h;
}

}  // namespace

VoxelVolume downsample2(const VoxelVolume& v) {
    const Grid h = half_grid(v.grid());
    VoxelVolume out(h, 0.0f);
    const auto& d = v.dims();
    const int fx = d[0] >= 2 ? 2 : 1, fy = d[1] >= 2 ? 2 : 1, fz = d[2] >= 2 ? 2 : 1;
    const float inv = 1.0f / static_cast<float>(fx * fy * fz);
    for (int k = 0; k < h.dims[2]; ++k)
        for (int j = 0; j < h.dims[1]; ++j)
            for (int i = 0; i < h.dims[0]; ++i) {
                float acc = 0.0f;
                for (int c = 0; c < fz; ++c)
                    for (int b = 0; b < fy; ++b)
                        for (int a = 0; a < fx; ++a) acc += v(fx * i + a, fy * j + b, fz * k + c);
                out(i, j, k) = acc * inv;
            }
    return out;
}

LabelMask downsample2_any(const LabelMask& m) {
    const Grid h = half_grid(m.grid());
    LabelMask out(h, 0);
    const auto& d = m.dims();
    const int fx = d[0] >= 2 ? 2 : 1, fy = d[1] >= 2 ? 2 : 1, fz = d[2] >= 2 ? 2 : 1;
    for (int k = 0; k < h.dims[2]; ++k)
        for (int j = 0; j < h.dims[1]; ++j)
            for (int i = 0; i < h.dims[0]; ++i) {
                std::uint8_t any = 0;
                for (int c = 0; c < fz; ++c)
                    for (int b = 0; b < fy; ++b)
                        for (int a = 0; a < fx; ++a) any |= m(fx * i + a, fy * j + b, fz * k + c);
                out(i, j, k) = any;
            }
    return out;
}

std::vector<float> gaussian_kernel(double sigma_mm, double spacing_mm) {
    require(sigma_mm >= 0.0 && spacing_mm > 0.0, ErrorKind::Contract, "gaussian kernel needs sigma >= 0, spacing > 0");
    if (sigma_mm == 0.0) return {1.0f};
    const double s = sigma_mm / spacing_mm;
    const int r = static_cast<int>(std::ceil(3.0 * s));
    std::vector<double> w(2 * r + 1);
    double sum = 0.0;
    for (int t = -r; t <= r; ++t) sum += w[t + r] = std::exp(-0.5 * t * t / (s * s));
    std::vector<float> out(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) out[i] = static_cast<float>(w[i] / sum);
    return out;
}

VoxelVolume separable_filter(const VoxelVolume& v, const std::array<std::vector<float>, 3>& weights) {
    const auto& kernels = simd::active_kernels();
    std::vector<float> a(v.data().begin(), v.data().end()), b(a.size());
    for (int axis = 0; axis < 3; ++axis) {
        const auto& w = weights[axis];
        require(w.size() % 2 == 1, ErrorKind::Contract, "separable filter weights must have odd length");
        if (w.size() == 1 && w[0] == 1.0f) continue;
        kernels.correlate_axis(a.data(), b.data(), v.dims(), axis, w);
        std::swap(a, b);
    }
    return VoxelVolume(v.grid(), std::move(a));
}

VoxelVolume gaussian_smooth(const VoxelVolume& v, double sigma_mm) {
    const auto& sp = v.grid().spacing;
    return separable_filter(v, {gaussian_kernel(sigma_mm, sp[0]), gaussian_kernel(sigma_mm, sp[1]),
                                gaussian_kernel(sigma_mm, sp[2])});
}

LabelMask dilate(const LabelMask& m, int radius) {
    LabelMask cur = m;
    const auto& d = m.dims();
    for (int step = 0; step < radius; ++step) {
        LabelMask next = cur;
        for (int k = 0; k < d[2]; ++k)
            for (int j = 0; j < d[1]; ++j)
                for (int i = 0; i < d[0]; ++i) {
                    if (cur(i, j, k)) continue;
                    const bool hit = (i > 0 && cur(i - 1, j, k)) || (i + 1 < d[0] && cur(i + 1, j, k)) ||
                                     (j > 0 && cur(i, j - 1, k)) || (j + 1 < d[1] && cur(i, j + 1, k)) ||
                                     (k > 0 && cur(i, j, k - 1)) || (k + 1 < d[2] && cur(i, j, k + 1));
                    if (hit) next(i, j, k) = 1;
                }
        cur = std::move(next);
    }
    return cur;
}

int connected_components(const LabelMask& m) {
    const auto& d = m.dims();
    std::vector<std::uint8_t> seen(m.size(), 0);
    int count = 0;
    std::deque<Index3> queue;
    for (int k = 0; k < d[2]; ++k)
        for (int j = 0; j < d[1]; ++j)
            for (int i = 0; i < d[0]; ++i) {
                const auto o = m.grid().offset(i, j, k);
                if (!m[o] || seen[o]) continue;
                ++count;
                seen[o] = 1;
                queue.push_back({i, j, k});
                while (!queue.empty()) {
                    const auto [x, y, z] = queue.front();
                    queue.pop_front();
                    for (int dz = -1; dz <= 1; ++dz)
                        for (int dy = -1; dy <= 1; ++dy)
                            for (int dx = -1; dx <= 1; ++dx) {
                                const int nx = x + dx, ny = y + dy, nz = z + dz;
                                if (!m.grid().contains(nx, ny, nz)) continue;
                                const auto q = m.grid().offset(nx, ny, nz);
                                if (m[q] && !seen[q]) {
                                    seen[q] = 1;
                                    queue.push_back({nx, ny, nz});
                                }
                            }
                }
            }
    return count;
}

}  // namespace hepar
