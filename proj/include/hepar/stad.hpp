#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "hepar/image.hpp"
#include "hepar/manifest.hpp"

namespace hepar {

inline constexpr std::size_t kStadFeatureCount = 32;

inline constexpr std::array<std::string_view, kStadFeatureCount> kStadFeatureNames{
    "volume_mm3",          "surface_area_mm2",        "sphericity",
    "solidity",            "elongation",              "flatness",
    "mean",                "std",                     "skewness",
    "kurtosis",            "intensity_entropy",       "iqr",
    "grad_mag_mean",       "grad_mag_std",            "glcm_xy_contrast",
    "glcm_xy_energy",      "glcm_xy_homogeneity",     "glcm_xy_anisotropy",
    "glcm_xz_contrast",    "glcm_xz_energy",          "glcm_xz_homogeneity",
    "glcm_xz_anisotropy",  "glcm_yz_contrast",        "glcm_yz_energy",
    "glcm_yz_homogeneity", "glcm_yz_anisotropy",      "coherence_mean",
    "coherence_std",       "st_planarity_mean",       "hessian_trace_mean",
    "hessian_anisotropy_mean", "hessian_sheetness_mean",
};

/// Index of a canonical feature name; Validation error when unknown.
std::size_t stad_feature_index(std::string_view name);

/// Classifier input columns: the 32 canonical names followed by vendor_flag.
std::vector<std::string> stad_model_feature_names();

struct StadFeatureVector {
    std::array<double, kStadFeatureCount> values{};
    Vendor vendor = Vendor::Other;

    [[nodiscard]] int vendor_flag() const noexcept { return vendor_code(vendor); }
    [[nodiscard]] double operator[](std::string_view name) const { return values[stad_feature_index(name)]; }
    /// The 32 values followed by the vendor flag.
    [[nodiscard]] std::vector<double> model_row() const;

    friend bool operator==(const StadFeatureVector&, const StadFeatureVector&) = default;
};

struct StadParams {
    int glcm_levels = 16;
    int glcm_distance = 1;
    double sigma_grad_mm = 1.0;
    double sigma_window_mm = 2.0;
    double hessian_sigma_mm = 1.5;

    /// Configuration error on out-of-range values.
    void validate() const;
};

struct ShapeFeatures {
    double volume_mm3 = 0.0;
    double surface_area_mm2 = 0.0;
    double sphericity = 0.0;
    double solidity = 0.0;
};

/// Volume, exposed-face surface area (6-connectivity), sphericity and
/// solidity of the mask, in the mask grid's spacing.
ShapeFeatures shape_features(const LabelMask& m);

/// Convex hull volume (mm^3) of the union of foreground voxel cubes. When
/// the foreground voxel centers are coplanar the mask volume is returned.
double convex_hull_volume(const LabelMask& m);

struct PcaShape {
    double elongation = 0.0;
    double flatness = 0.0;
};

/// sqrt(l2/l1) and sqrt(l3/l2) of the foreground world-coordinate covariance.
PcaShape pca_shape(const LabelMask& m);

struct GradientStats {
    double mean = 0.0;
    double std = 0.0;
};

/// Central-difference gradient magnitude over mask voxels whose stencil is
/// inside the grid.
GradientStats gradient_stats(const VoxelVolume& v, const LabelMask& m);

enum class GlcmPlane { XY, XZ, YZ };

std::string_view to_string(GlcmPlane p) noexcept;

struct GlcmFeatures {
    double contrast = 0.0;
    double energy = 0.0;
    double homogeneity = 0.0;
    double anisotropy = 0.0;
};

/// Co-occurrence features in one plane. `v_u8` holds values in [0, 255]
/// which are requantized uniformly to `levels` gray levels; pairs count only
/// when both voxels are in the mask.
GlcmFeatures glcm_plane(const VoxelVolume& v_u8, const LabelMask& m, GlcmPlane plane, int levels = 16,
                        int distance = 1);

struct AppearanceStats {
    double mean = 0.0;
    double std = 0.0;
    double skewness = 0.0;
    double kurtosis = 0.0;  // excess
    double entropy = 0.0;   // nats, 64-bin histogram
    double iqr = 0.0;
};

AppearanceStats appearance_stats(const VoxelVolume& v, const LabelMask& m);

/// Eigenvalues of a symmetric matrix, descending. Contract error when the
/// input is not symmetric within 1e-9 (relative to its largest entry).
Vec3 eig3_symmetric(const Mat3& s);

struct StructureTensorFeatures {
    double coherence_mean = 0.0;
    double coherence_std = 0.0;
    double planarity_mean = 0.0;
};

StructureTensorFeatures structure_tensor_features(const VoxelVolume& v, const LabelMask& m, double sigma_grad_mm = 1.0,
                                                  double sigma_window_mm = 2.0);

struct HessianFeatures {
    double trace_mean = 0.0;
    double anisotropy_mean = 0.0;
    double sheetness_mean = 0.0;
};

HessianFeatures hessian_features(const VoxelVolume& v, const LabelMask& m, double sigma_mm = 1.5);

StadFeatureVector extract_stad(const VoxelVolume& v, const LabelMask& m, Vendor vendor, const StadParams& params = {});

struct FeatureRow {
    std::string case_id;
    std::string modality;
    StadFeatureVector features;
};

/// CSV with header case_id,modality,vendor_flag,<32 names>; values with 9
/// significant digits, LF line endings.
void write_feature_csv(std::ostream& out, const std::vector<FeatureRow>& rows);
std::string format_feature_csv(const std::vector<FeatureRow>& rows);

/// Strict reader: the header must match the canonical order.
std::vector<FeatureRow> read_feature_csv(std::istream& in);
std::vector<FeatureRow> parse_feature_csv(std::string_view text);

}  // namespace hepar
