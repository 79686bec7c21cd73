#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

// Data-parallel inner loops. Every kernel has a scalar reference version and
// vectorized variants; all variants produce bitwise-identical output (same
// operation order, no FMA contraction), so the selected ISA never changes a
// stored result.

namespace hepar::simd {

enum class Isa { Scalar, Avx2 };

std::string_view to_string(Isa isa) noexcept;

/// Best ISA supported by this CPU and build. HEPAR_SIMD=scalar in the
/// environment forces the scalar path.
Isa detect_isa() noexcept;

/// ISA currently used by the dispatching entry points.
Isa active_isa() noexcept;

/// Overrides dispatch; returns false (and leaves dispatch unchanged) when
/// the ISA is unavailable.
bool set_active_isa(Isa isa) noexcept;

bool isa_available(Isa isa) noexcept;

/// Row-wise continuous-index sampling: x-th output samples `volume` at
/// index start + x*step (float arithmetic). Trilinear; samples outside
/// [0, dim-1] on any axis produce value 0 and valid 0.
struct RowSampler {
    const float* volume;
    std::array<int, 3> dims;  // each >= 2
};

struct KernelTable {
    /// Correlate along one axis with clamp-to-edge boundaries:
    /// dst[p] = sum_t weights[t] * src[p + (t - r) e_axis], r = weights.size()/2.
    void (*correlate_axis)(const float* src, float* dst, std::array<int, 3> dims, int axis,
                           std::span<const float> weights);

    void (*sample_row)(const RowSampler& sampler, std::array<float, 3> start, std::array<float, 3> step,
                       int count, float* out, std::uint8_t* valid);

    /// bin = clamp(floor((v - lo) * inv_width), 0, bins - 1).
    void (*bin_index)(const float* values, int count, float lo, float inv_width, int bins, std::int32_t* out);

    /// out = round_half_away((v - lo) * 255 / (hi - lo)), computed in double.
    void (*normalize_u8)(const float* values, std::size_t count, double lo, double hi, float* out);
};

const KernelTable& scalar_kernels() noexcept;
#if defined(__x86_64__) || defined(_M_X64)
const KernelTable& avx2_kernels() noexcept;
#endif

const KernelTable& kernels_for(Isa isa) noexcept;
const KernelTable& active_kernels() noexcept;

}  // namespace hepar::simd
