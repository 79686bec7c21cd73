#include "hepar/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "hepar/error.hpp"
#include "hepar/nifti.hpp"

namespace hepar {

using nlohmann::json;

std::string_view to_string(Vendor v) noexcept {
    switch (v) {
        case Vendor::A: return "A";
        case Vendor::B1: return "B1";
        case Vendor::B2: return "B2";
        case Vendor::Other: return "other";
    }
    return "other";
}

std::string_view to_string(Modality m) noexcept {
    switch (m) {
        case Modality::T1WI: return "T1WI";
        case Modality::T2WI: return "T2WI";
        case Modality::DWI: return "DWI";
        case Modality::GED1: return "GED1";
        case Modality::GED2: return "GED2";
        case Modality::GED3: return "GED3";
        case Modality::GED4: return "GED4";
    }
    return "GED4";
}

std::string_view to_string(Stage s) noexcept {
    switch (s) {
        case Stage::S1: return "S1";
        case Stage::S2: return "S2";
        case Stage::S3: return "S3";
        case Stage::S4: return "S4";
    }
    return "S1";
}

Vendor parse_vendor(std::string_view s) {
    for (auto v : {Vendor::A, Vendor::B1, Vendor::B2, Vendor::Other})
        if (s == to_string(v)) return v;
    fail(ErrorKind::Validation, "unknown vendor '" + std::string(s) + "'");
}

Modality parse_modality(std::string_view s) {
    for (auto m : kAllModalities)
        if (s == to_string(m)) return m;
    fail(ErrorKind::Validation, "unknown modality '" + std::string(s) + "'");
}

Stage parse_stage(std::string_view s) {
    for (auto st : {Stage::S1, Stage::S2, Stage::S3, Stage::S4})
        if (s == to_string(st)) return st;
    fail(ErrorKind::Validation, "unknown fibrosis stage '" + std::string(s) + "'");
}

DatasetManifest::DatasetManifest(std::vector<ManifestEntry> entries) : entries_(std::move(entries)) {
    std::set<std::pair<std::string, Modality>> seen;
    for (const auto& e : entries_) {
        require(!e.case_id.empty(), ErrorKind::Validation, "manifest entry with empty case_id");
        require(seen.emplace(e.case_id, e.modality).second, ErrorKind::Validation,
                "duplicate manifest entry for case '" + e.case_id + "' modality " + std::string(to_string(e.modality)));
    }
}

std::vector<std::string> DatasetManifest::case_ids() const {
    std::vector<std::string> ids;
    std::set<std::string> seen;
    for (const auto& e : entries_)
        if (seen.insert(e.case_id).second) ids.push_back(e.case_id);
    return ids;
}

const ManifestEntry* DatasetManifest::find(std::string_view case_id, Modality m) const noexcept {
    for (const auto& e : entries_)
        if (e.case_id == case_id && e.modality == m) return &e;
    return nullptr;
}

std::vector<const ManifestEntry*> DatasetManifest::entries_for(std::string_view case_id) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries_)
        if (e.case_id == case_id) out.push_back(&e);
    return out;
}

std::optional<Stage> DatasetManifest::case_stage(std::string_view case_id) const {
    std::optional<Stage> stage;
    for (const auto* e : entries_for(case_id)) {
        if (!e->stage) continue;
        require(!stage || *stage == *e->stage, ErrorKind::Validation,
                "case '" + std::string(case_id) + "' has conflicting stages");
        stage = e->stage;
    }
    return stage;
}

std::optional<Vendor> DatasetManifest::case_vendor(std::string_view case_id) const {
    std::optional<Vendor> vendor;
    for (const auto* e : entries_for(case_id)) {
        require(!vendor || *vendor == e->vendor, ErrorKind::Validation,
                "case '" + std::string(case_id) + "' has conflicting vendors");
        vendor = e->vendor;
    }
    return vendor;
}

DatasetManifest parse_manifest(std::string_view json_text, const std::filesystem::path& base_dir) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        fail(ErrorKind::Validation, std::string("manifest is not valid JSON: ") + e.what());
    }
    require(doc.is_array(), ErrorKind::Validation, "manifest must be a JSON array of entries");

    auto string_field = [](const json& rec, const char* key, std::size_t idx) -> std::string {
        const auto it = rec.find(key);
        require(it != rec.end() && it->is_string(), ErrorKind::Validation,
                "manifest entry " + std::to_string(idx) + " needs string field '" + key + "'");
        return it->get<std::string>();
    };
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_absolute() ? path : (base_dir / path).lexically_normal();
    };

    static const std::set<std::string> known{"case_id", "vendor", "modality", "volume", "mask", "stage"};
    std::vector<ManifestEntry> entries;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const json& rec = doc[i];
        require(rec.is_object(), ErrorKind::Validation, "manifest entry " + std::to_string(i) + " is not an object");
        for (const auto& [key, _] : rec.items())
            require(known.contains(key), ErrorKind::Validation,
                    "manifest entry " + std::to_string(i) + " has unknown key '" + key + "'");
        ManifestEntry e;
        e.case_id = string_field(rec, "case_id", i);
        e.vendor = parse_vendor(string_field(rec, "vendor", i));
        e.modality = parse_modality(string_field(rec, "modality", i));
        e.volume = resolve(string_field(rec, "volume", i));
        if (rec.contains("mask") && !rec["mask"].is_null()) e.mask = resolve(string_field(rec, "mask", i));
        if (rec.contains("stage") && !rec["stage"].is_null()) e.stage = parse_stage(string_field(rec, "stage", i));
        entries.push_back(std::move(e));
    }
    return DatasetManifest(std::move(entries));
}

DatasetManifest load_manifest(const std::filesystem::path& path, bool check_masks) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorKind::Io, "cannot open manifest " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    DatasetManifest m = parse_manifest(ss.str(), path.parent_path());
    if (check_masks) {
        for (const auto& e : m.entries()) {
            if (!e.mask) continue;
            const LabelMask mask = nifti::read_mask(*e.mask);
            const VoxelVolume vol = nifti::read_volume(e.volume);
            require(mask.grid().same_as(vol.grid(), 1e-4), ErrorKind::Validation,
                    "mask grid does not match volume grid for case '" + e.case_id + "' " +
                        std::string(to_string(e.modality)));
        }
    }
    return m;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    const auto base = std::filesystem::absolute(path).parent_path().lexically_normal();
    auto rel = [&](const std::filesystem::path& p) {
        return std::filesystem::absolute(p).lexically_normal().lexically_relative(base).generic_string();
    };
    json doc = json::array();
    for (const auto& e : manifest.entries()) {
        json rec;
        rec["case_id"] = e.case_id;
        rec["vendor"] = to_string(e.vendor);
        rec["modality"] = to_string(e.modality);
        rec["volume"] = rel(e.volume);
        if (e.mask) rec["mask"] = rel(*e.mask);
        if (e.stage) rec["stage"] = to_string(*e.stage);
        doc.push_back(std::move(rec));
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), ErrorKind::Io, "cannot write manifest " + path.string());
    out << doc.dump(2) << '\n';
}

}  // namespace hepar
