#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "hepar/image.hpp"
#include "hepar/manifest.hpp"

namespace hepar {

struct MixSpec {
    std::string source;
    std::string target;
    Vendor vendor = Vendor::Other;
    /// Isotropic factor applied to the source foreground; 0 until mixed.
    double scale = 0.0;
    std::uint64_t seed = 0;

    /// Identifier of the synthetic case.
    [[nodiscard]] std::string case_id() const { return source + "__mix__" + target; }
};

nlohmann::json to_json(const MixSpec& m);
MixSpec mix_spec_from_json(const nlohmann::json& j);

struct MixResult {
    VoxelVolume volume;
    LabelMask mask;
    double scale = 0.0;
};

/// Pastes the source foreground, scaled to fit inside the target foreground
/// box and centered on it, into a copy of the target. Target foreground left
/// uncovered is filled with the median of the 3-voxel ring around the target
/// mask. Voxels outside the target box are untouched.
MixResult instance_mix(const VoxelVolume& source_volume, const LabelMask& source_mask,
                       const VoxelVolume& target_volume, const LabelMask& target_mask);

struct CohortMember {
    std::string case_id;
    Vendor vendor = Vendor::Other;
};

/// For every source, `per_source` distinct same-vendor targets drawn without
/// replacement. Sources are visited per vendor in id order so the plan only
/// depends on the cohort, per_source and seed.
std::vector<MixSpec> plan_mixes(const std::vector<CohortMember>& cohort, int per_source, std::uint64_t seed);

struct AnnotatedCase {
    std::string case_id;
    Vendor vendor = Vendor::Other;
    VoxelVolume volume;
    LabelMask mask;
};

struct SyntheticCase {
    MixSpec spec;
    VoxelVolume volume;
    LabelMask mask;
};

std::vector<SyntheticCase> generate_mixes(const std::vector<AnnotatedCase>& annotated, int per_source,
                                          std::uint64_t seed);

}  // namespace hepar
