// Compiled with -mavx2 -ffp-contract=off; only reached after a runtime CPU check.
#include <immintrin.h>

#include <algorithm>
#include <cmath>

#include "hepar/simd/kernels.hpp"
#include "kernels_impl.hpp"

namespace hepar::simd {

namespace {

constexpr int kLanes = 8;

void correlate_axis_avx2(const float* src, float* dst, std::array<int, 3> dims, int axis,
                         std::span<const float> weights) {
    const int nx = dims[0], ny = dims[1], nz = dims[2];
    const int taps = static_cast<int>(weights.size());
    const int r = taps / 2;
    const std::size_t sy = static_cast<std::size_t>(nx), sz = sy * static_cast<std::size_t>(ny);

    if (axis == 0) {
        for (int k = 0; k < nz; ++k) {
            for (int j = 0; j < ny; ++j) {
                const float* row = src + sy * j + sz * k;
                float* out = dst + sy * j + sz * k;
                auto scalar_at = [&](int i) {
                    float acc = 0.0f;
                    for (int t = 0; t < taps; ++t) acc = acc + weights[t] * row[std::clamp(i + t - r, 0, nx - 1)];
                    out[i] = acc;
                };
                int i = 0;
                for (; i < std::min(r, nx); ++i) scalar_at(i);
                for (; i + kLanes <= nx - r; i += kLanes) {
                    __m256 acc = _mm256_setzero_ps();
                    for (int t = 0; t < taps; ++t) {
                        const __m256 w = _mm256_set1_ps(weights[t]);
                        acc = _mm256_add_ps(acc, _mm256_mul_ps(w, _mm256_loadu_ps(row + i + t - r)));
                    }
                    _mm256_storeu_ps(out + i, acc);
                }
                for (; i < nx; ++i) scalar_at(i);
            }
        }
        return;
    }

    const int n = dims[axis];
    const std::size_t stride = axis == 1 ? sy : sz;
    for (int k = 0; k < nz; ++k) {
        for (int j = 0; j < ny; ++j) {
            const int pos = axis == 1 ? j : k;
            const std::size_t base = sy * j + sz * k;
            const std::size_t line = base - stride * static_cast<std::size_t>(pos);
            float* out = dst + base;
            int i = 0;
            for (; i + kLanes <= nx; i += kLanes) {
                __m256 acc = _mm256_setzero_ps();
                for (int t = 0; t < taps; ++t) {
                    const int q = std::clamp(pos + t - r, 0, n - 1);
                    const __m256 w = _mm256_set1_ps(weights[t]);
                    acc = _mm256_add_ps(acc, _mm256_mul_ps(w, _mm256_loadu_ps(src + line + stride * q + i)));
                }
                _mm256_storeu_ps(out + i, acc);
            }
            for (; i < nx; ++i) {
                float acc = 0.0f;
                for (int t = 0; t < taps; ++t) {
                    const int q = std::clamp(pos + t - r, 0, n - 1);
                    acc = acc + weights[t] * src[line + stride * q + i];
                }
                out[i] = acc;
            }
        }
    }
}

// (1 - f) * a + f * b, exact at both endpoints.
inline __m256 lerp(__m256 a, __m256 b, __m256 f) {
    return _mm256_add_ps(_mm256_mul_ps(_mm256_sub_ps(_mm256_set1_ps(1.0f), f), a), _mm256_mul_ps(f, b));
}

void sample_row_avx2(const RowSampler& s, std::array<float, 3> start, std::array<float, 3> step, int count,
                     float* out, std::uint8_t* valid) {
    const int nx = s.dims[0], ny = s.dims[1], nz = s.dims[2];
    const __m256 zero = _mm256_setzero_ps();
    const __m256 max_x = _mm256_set1_ps(static_cast<float>(nx - 1));
    const __m256 max_y = _mm256_set1_ps(static_cast<float>(ny - 1));
    const __m256 max_z = _mm256_set1_ps(static_cast<float>(nz - 1));
    const __m256i top_x = _mm256_set1_epi32(nx - 2);
    const __m256i top_y = _mm256_set1_epi32(ny - 2);
    const __m256i top_z = _mm256_set1_epi32(nz - 2);
    const __m256i vnx = _mm256_set1_epi32(nx);
    const __m256i vny = _mm256_set1_epi32(ny);
    const __m256i oy = _mm256_set1_epi32(nx);
    const __m256i oz = _mm256_set1_epi32(nx * ny);
    const __m256i one = _mm256_set1_epi32(1);
    const __m256 sx = _mm256_set1_ps(start[0]), sy = _mm256_set1_ps(start[1]), sz = _mm256_set1_ps(start[2]);
    const __m256 dx = _mm256_set1_ps(step[0]), dy = _mm256_set1_ps(step[1]), dz = _mm256_set1_ps(step[2]);
    const __m256i lane = _mm256_setr_epi32(0, 1, 2, 3, 4, 5, 6, 7);
    const float* v = s.volume;

    int x = 0;
    for (; x + kLanes <= count; x += kLanes) {
        const __m256 xf = _mm256_cvtepi32_ps(_mm256_add_epi32(_mm256_set1_epi32(x), lane));
        __m256 ix = _mm256_add_ps(sx, _mm256_mul_ps(xf, dx));
        __m256 iy = _mm256_add_ps(sy, _mm256_mul_ps(xf, dy));
        __m256 iz = _mm256_add_ps(sz, _mm256_mul_ps(xf, dz));
        __m256 ok = _mm256_and_ps(_mm256_cmp_ps(ix, zero, _CMP_GE_OQ), _mm256_cmp_ps(ix, max_x, _CMP_LE_OQ));
        ok = _mm256_and_ps(ok, _mm256_cmp_ps(iy, zero, _CMP_GE_OQ));
        ok = _mm256_and_ps(ok, _mm256_cmp_ps(iy, max_y, _CMP_LE_OQ));
        ok = _mm256_and_ps(ok, _mm256_cmp_ps(iz, zero, _CMP_GE_OQ));
        ok = _mm256_and_ps(ok, _mm256_cmp_ps(iz, max_z, _CMP_LE_OQ));
        const int okbits = _mm256_movemask_ps(ok);
        if (okbits == 0) {
            _mm256_storeu_ps(out + x, zero);
            for (int l = 0; l < kLanes; ++l) valid[x + l] = 0;
            continue;
        }
        // Invalid lanes sample index 0 so the gathers stay in bounds.
        ix = _mm256_and_ps(ix, ok);
        iy = _mm256_and_ps(iy, ok);
        iz = _mm256_and_ps(iz, ok);
        const __m256i i0 = _mm256_min_epi32(_mm256_cvttps_epi32(_mm256_floor_ps(ix)), top_x);
        const __m256i j0 = _mm256_min_epi32(_mm256_cvttps_epi32(_mm256_floor_ps(iy)), top_y);
        const __m256i k0 = _mm256_min_epi32(_mm256_cvttps_epi32(_mm256_floor_ps(iz)), top_z);
        const __m256 fx = _mm256_sub_ps(ix, _mm256_cvtepi32_ps(i0));
        const __m256 fy = _mm256_sub_ps(iy, _mm256_cvtepi32_ps(j0));
        const __m256 fz = _mm256_sub_ps(iz, _mm256_cvtepi32_ps(k0));
        const __m256i o = _mm256_add_epi32(
            i0, _mm256_mullo_epi32(vnx, _mm256_add_epi32(j0, _mm256_mullo_epi32(vny, k0))));
        const __m256i o1 = _mm256_add_epi32(o, one);
        const __m256i oy0 = _mm256_add_epi32(o, oy);
        const __m256i oy1 = _mm256_add_epi32(oy0, one);
        const __m256i oz0 = _mm256_add_epi32(o, oz);
        const __m256i oz1 = _mm256_add_epi32(oz0, one);
        const __m256i oyz0 = _mm256_add_epi32(oz0, oy);
        const __m256i oyz1 = _mm256_add_epi32(oyz0, one);
        const __m256 v000 = _mm256_i32gather_ps(v, o, 4);
        const __m256 v100 = _mm256_i32gather_ps(v, o1, 4);
        const __m256 v010 = _mm256_i32gather_ps(v, oy0, 4);
        const __m256 v110 = _mm256_i32gather_ps(v, oy1, 4);
        const __m256 v001 = _mm256_i32gather_ps(v, oz0, 4);
        const __m256 v101 = _mm256_i32gather_ps(v, oz1, 4);
        const __m256 v011 = _mm256_i32gather_ps(v, oyz0, 4);
        const __m256 v111 = _mm256_i32gather_ps(v, oyz1, 4);
        const __m256 c00 = lerp(v000, v100, fx);
        const __m256 c10 = lerp(v010, v110, fx);
        const __m256 c01 = lerp(v001, v101, fx);
        const __m256 c11 = lerp(v011, v111, fx);
        const __m256 c0 = lerp(c00, c10, fy);
        const __m256 c1 = lerp(c01, c11, fy);
        const __m256 res = _mm256_and_ps(lerp(c0, c1, fz), ok);
        _mm256_storeu_ps(out + x, res);
        for (int l = 0; l < kLanes; ++l) valid[x + l] = static_cast<std::uint8_t>((okbits >> l) & 1);
    }
    for (; x < count; ++x) {
        const float xf = static_cast<float>(x);
        bool ok = false;
        out[x] = detail::sample_trilinear_scalar(s, start[0] + xf * step[0], start[1] + xf * step[1],
                                                 start[2] + xf * step[2], ok);
        valid[x] = ok ? 1 : 0;
    }
}

void bin_index_avx2(const float* values, int count, float lo, float inv_width, int bins, std::int32_t* out) {
    const __m256 vlo = _mm256_set1_ps(lo);
    const __m256 vinv = _mm256_set1_ps(inv_width);
    const __m256 top = _mm256_set1_ps(static_cast<float>(bins - 1));
    const __m256 zero = _mm256_setzero_ps();
    int i = 0;
    for (; i + kLanes <= count; i += kLanes) {
        __m256 f = _mm256_floor_ps(_mm256_mul_ps(_mm256_sub_ps(_mm256_loadu_ps(values + i), vlo), vinv));
        // max(f, 0) returns 0 for NaN lanes, matching the scalar !(f >= 0) branch.
        f = _mm256_max_ps(f, zero);
        f = _mm256_min_ps(f, top);
        _mm256_storeu_si256(reinterpret_cast<__m256i*>(out + i), _mm256_cvttps_epi32(f));
    }
    for (; i < count; ++i) out[i] = detail::bin_of(values[i], lo, inv_width, bins);
}

void normalize_u8_avx2(const float* values, std::size_t count, double lo, double hi, float* out) {
    const double range = hi - lo;
    const __m256d vlo = _mm256_set1_pd(lo);
    const __m256d vrange = _mm256_set1_pd(range);
    const __m256d k255 = _mm256_set1_pd(255.0);
    const __m256d half = _mm256_set1_pd(0.5);
    const __m256d onev = _mm256_set1_pd(1.0);
    std::size_t i = 0;
    for (; i + 4 <= count; i += 4) {
        const __m256d v = _mm256_cvtps_pd(_mm_loadu_ps(values + i));
        const __m256d t = _mm256_div_pd(_mm256_mul_pd(_mm256_sub_pd(v, vlo), k255), vrange);
        __m256d r = _mm256_floor_pd(t);
        const __m256d up = _mm256_cmp_pd(_mm256_sub_pd(t, r), half, _CMP_GE_OQ);
        r = _mm256_add_pd(r, _mm256_and_pd(up, onev));
        _mm_storeu_ps(out + i, _mm256_cvtpd_ps(r));
    }
    for (; i < count; ++i) out[i] = detail::normalize_one(values[i], lo, range);
}

}  // namespace

const KernelTable& avx2_kernels() noexcept {
    static constexpr KernelTable table{
        correlate_axis_avx2,
        sample_row_avx2,
        bin_index_avx2,
        normalize_u8_avx2,
    };
    return table;
}

}  // namespace hepar::simd
