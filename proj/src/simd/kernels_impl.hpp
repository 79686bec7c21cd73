#pragma once

#include <cstdint>

#include "hepar/simd/kernels.hpp"

// Scalar helpers shared by the vector variants for their edge/tail lanes.
namespace hepar::simd::detail {

void correlate_axis_scalar(const float* src, float* dst, std::array<int, 3> dims, int axis,
                           std::span<const float> weights);
float sample_trilinear_scalar(const RowSampler& s, float ix, float iy, float iz, bool& ok);
void sample_row_scalar(const RowSampler& s, std::array<float, 3> start, std::array<float, 3> step, int count,
                       float* out, std::uint8_t* valid);
std::int32_t bin_of(float v, float lo, float inv_width, int bins);
void bin_index_scalar(const float* values, int count, float lo, float inv_width, int bins, std::int32_t* out);
float normalize_one(float v, double lo, double range);
void normalize_u8_scalar(const float* values, std::size_t count, double lo, double hi, float* out);

}  // namespace hepar::simd::detail
