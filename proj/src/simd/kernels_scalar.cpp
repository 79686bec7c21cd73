#include <algorithm>
#include <cmath>

#include "hepar/simd/kernels.hpp"
#include "kernels_impl.hpp"

namespace hepar::simd {

namespace detail {

void correlate_axis_scalar(const float* src, float* dst, std::array<int, 3> dims, int axis,
                           std::span<const float> weights) {
    const int nx = dims[0], ny = dims[1], nz = dims[2];
    const int taps = static_cast<int>(weights.size());
    const int r = taps / 2;
    const std::size_t sx = 1, sy = static_cast<std::size_t>(nx), sz = sy * static_cast<std::size_t>(ny);
    const std::array<std::size_t, 3> stride{sx, sy, sz};
    const int n = dims[axis];
    for (int k = 0; k < nz; ++k) {
        for (int j = 0; j < ny; ++j) {
            for (int i = 0; i < nx; ++i) {
                const std::size_t base = i + sy * j + sz * k;
                const int pos = axis == 0 ? i : (axis == 1 ? j : k);
                const std::size_t line = base - stride[axis] * static_cast<std::size_t>(pos);
                float acc = 0.0f;
                for (int t = 0; t < taps; ++t) {
                    const int q = std::clamp(pos + t - r, 0, n - 1);
                    acc = acc + weights[t] * src[line + stride[axis] * static_cast<std::size_t>(q)];
                }
                dst[base] = acc;
            }
        }
    }
}

float sample_trilinear_scalar(const RowSampler& s, float ix, float iy, float iz, bool& ok) {
    const int nx = s.dims[0], ny = s.dims[1], nz = s.dims[2];
    ok = ix >= 0.0f && ix <= static_cast<float>(nx - 1) && iy >= 0.0f && iy <= static_cast<float>(ny - 1) &&
         iz >= 0.0f && iz <= static_cast<float>(nz - 1);
    if (!ok) return 0.0f;
    int i0 = static_cast<int>(std::floor(ix));
    int j0 = static_cast<int>(std::floor(iy));
    int k0 = static_cast<int>(std::floor(iz));
    i0 = std::min(i0, nx - 2);
    j0 = std::min(j0, ny - 2);
    k0 = std::min(k0, nz - 2);
    const float fx = ix - static_cast<float>(i0);
    const float fy = iy - static_cast<float>(j0);
    const float fz = iz - static_cast<float>(k0);
    const int o = i0 + nx * (j0 + ny * k0);
    const int oy = nx, oz = nx * ny;
    const float* v = s.volume;
    auto lerp = [](float a, float b, float f) { return (1.0f - f) * a + f * b; };
    const float c00 = lerp(v[o], v[o + 1], fx);
    const float c10 = lerp(v[o + oy], v[o + oy + 1], fx);
    const float c01 = lerp(v[o + oz], v[o + oz + 1], fx);
    const float c11 = lerp(v[o + oy + oz], v[o + oy + oz + 1], fx);
    const float c0 = lerp(c00, c10, fy);
    const float c1 = lerp(c01, c11, fy);
    return lerp(c0, c1, fz);
}

void sample_row_scalar(const RowSampler& s, std::array<float, 3> start, std::array<float, 3> step, int count,
                       float* out, std::uint8_t* valid) {
    for (int x = 0; x < count; ++x) {
        const float xf = static_cast<float>(x);
        bool ok = false;
        out[x] = sample_trilinear_scalar(s, start[0] + xf * step[0], start[1] + xf * step[1],
                                         start[2] + xf * step[2], ok);
        valid[x] = ok ? 1 : 0;
    }
}

std::int32_t bin_of(float v, float lo, float inv_width, int bins) {
    const float f = std::floor((v - lo) * inv_width);
    if (!(f >= 0.0f)) return 0;
    const float top = static_cast<float>(bins - 1);
    return static_cast<std::int32_t>(f > top ? top : f);
}

void bin_index_scalar(const float* values, int count, float lo, float inv_width, int bins, std::int32_t* out) {
    for (int i = 0; i < count; ++i) out[i] = bin_of(values[i], lo, inv_width, bins);
}

float normalize_one(float v, double lo, double range) {
    const double t = (static_cast<double>(v) - lo) * 255.0 / range;
    double r = std::floor(t);
    if (t - r >= 0.5) r += 1.0;
    return static_cast<float>(r);
}

void normalize_u8_scalar(const float* values, std::size_t count, double lo, double hi, float* out) {
    const double range = hi - lo;
    for (std::size_t i = 0; i < count; ++i) out[i] = normalize_one(values[i], lo, range);
}

}  // namespace detail

const KernelTable& scalar_kernels() noexcept {
    static constexpr KernelTable table{
        detail::correlate_axis_scalar,
        detail::sample_row_scalar,
        detail::bin_index_scalar,
        detail::normalize_u8_scalar,
    };
    return table;
}

}  // namespace hepar::simd
