#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hepar {

enum class Vendor { A, B1, B2, Other };
enum class Modality { T1WI, T2WI, DWI, GED1, GED2, GED3, GED4 };
enum class Stage { S1, S2, S3, S4 };

inline constexpr std::array kAllModalities{Modality::T1WI, Modality::T2WI, Modality::DWI, Modality::GED1,
                                           Modality::GED2, Modality::GED3, Modality::GED4};

std::string_view to_string(Vendor v) noexcept;
std::string_view to_string(Modality m) noexcept;
std::string_view to_string(Stage s) noexcept;

// Strict parsers; throw Validation on unknown tokens.
Vendor parse_vendor(std::string_view s);
Modality parse_modality(std::string_view s);
Stage parse_stage(std::string_view s);

/// Integer code used for the vendor flag feature.
constexpr int vendor_code(Vendor v) noexcept { return static_cast<int>(v); }

struct ManifestEntry {
    std::string case_id;
    Vendor vendor = Vendor::Other;
    Modality modality = Modality::GED4;
    std::filesystem::path volume;
    std::optional<std::filesystem::path> mask;
    std::optional<Stage> stage;
};

class DatasetManifest {
public:
    DatasetManifest() = default;
    /// Validates (case_id, modality) uniqueness.
    explicit DatasetManifest(std::vector<ManifestEntry> entries);

    [[nodiscard]] const std::vector<ManifestEntry>& entries() const noexcept { return entries_; }
    [[nodiscard]] bool empty() const noexcept { return entries_.empty(); }

    /// Distinct case ids in first-appearance order.
    [[nodiscard]] std::vector<std::string> case_ids() const;
    [[nodiscard]] const ManifestEntry* find(std::string_view case_id, Modality m) const noexcept;
    [[nodiscard]] std::vector<const ManifestEntry*> entries_for(std::string_view case_id) const;

    /// Stage shared by the case's entries; Validation error when they disagree.
    [[nodiscard]] std::optional<Stage> case_stage(std::string_view case_id) const;
    [[nodiscard]] std::optional<Vendor> case_vendor(std::string_view case_id) const;

private:
    std::vector<ManifestEntry> entries_;
};

/// Parses a JSON array of {case_id, vendor, modality, volume, mask?, stage?}.
/// Relative paths resolve against the manifest's directory. When
/// `check_masks` is set every mask must exist and share its volume's grid.
DatasetManifest load_manifest(const std::filesystem::path& path, bool check_masks = false);
DatasetManifest parse_manifest(std::string_view json_text, const std::filesystem::path& base_dir);

/// Writes the manifest with paths relative to the manifest's directory.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

}  // namespace hepar
