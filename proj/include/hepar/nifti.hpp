#pragma once

#include <filesystem>

#include "hepar/image.hpp"

namespace hepar::nifti {

/// On-disk element types supported for reading and writing.
enum class DataType : short {
    UInt8 = 2,
    Int16 = 4,
    Int32 = 8,
    Float32 = 16,
    Float64 = 64,
    UInt16 = 512,
};

/// Reads a single-file NIfTI-1 volume (.nii or .nii.gz). Scaling
/// (scl_slope/scl_inter) is applied when the slope is non-zero; the sform
/// (else qform) orientation is honoured when orthogonal.
VoxelVolume read_volume(const std::filesystem::path& path);

/// Reads a volume and requires every value to be 0 or 1.
LabelMask read_mask(const std::filesystem::path& path);

/// Writes little-endian single-file NIfTI-1; gzip when the path ends in .gz.
/// Values are rounded half away from zero and range-checked for integer types.
void write(const VoxelVolume& v, const std::filesystem::path& path, DataType type = DataType::Float32);
void write(const LabelMask& m, const std::filesystem::path& path);

}  // namespace hepar::nifti
