#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "hepar/error.hpp"
#include "hepar/pipeline.hpp"

namespace hepar {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& known, const std::string& where) {
    require(j.is_object(), ErrorKind::Validation, where + " must be a JSON object");
    for (const auto& [key, value] : j.items())
        require(known.count(key) > 0, ErrorKind::Validation, where + ": unknown key '" + key + "'");
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
    const auto it = j.find(key);
    if (it == j.end()) return;
    try {
        out = it->get<T>();
    } catch (const json::exception& e) {
        fail(ErrorKind::Validation, where + "." + key + ": " + e.what());
    }
}

RegistrationConfig registration_from_json(const json& j) {
    const std::string w = "config.registration";
    check_keys(j,
               {"bins", "pyramid_levels", "max_iterations", "initial_step", "step_shrink", "tolerance", "min_step",
                "gradient_step", "parameter_scales", "sample_fraction", "min_overlap_ratio", "smoothing_voxels"},
               w);
    RegistrationConfig c;
    read(j, "bins", c.bins, w);
    read(j, "pyramid_levels", c.pyramid_levels, w);
    read(j, "max_iterations", c.max_iterations, w);
    read(j, "initial_step", c.initial_step, w);
    read(j, "step_shrink", c.step_shrink, w);
    read(j, "tolerance", c.tolerance, w);
    read(j, "min_step", c.min_step, w);
    read(j, "gradient_step", c.gradient_step, w);
    if (j.contains("parameter_scales") && !j["parameter_scales"].is_null()) {
        std::array<double, 7> s{};
        read(j, "parameter_scales", s, w);
        c.parameter_scales = s;
    }
    read(j, "sample_fraction", c.sample_fraction, w);
    read(j, "min_overlap_ratio", c.min_overlap_ratio, w);
    read(j, "smoothing_voxels", c.smoothing_voxels, w);
    return c;
}

json registration_to_json(const RegistrationConfig& c) {
    return {{"bins", c.bins},
            {"pyramid_levels", c.pyramid_levels},
            {"max_iterations", c.max_iterations},
            {"initial_step", c.initial_step},
            {"step_shrink", c.step_shrink},
            {"tolerance", c.tolerance},
            {"min_step", c.min_step},
            {"gradient_step", c.gradient_step},
            {"parameter_scales", c.parameter_scales ? json(*c.parameter_scales) : json(nullptr)},
            {"sample_fraction", c.sample_fraction},
            {"min_overlap_ratio", c.min_overlap_ratio},
            {"smoothing_voxels", c.smoothing_voxels}};
}

StadParams stad_from_json(const json& j) {
    const std::string w = "config.stad";
    check_keys(j, {"glcm_levels", "glcm_distance", "sigma_grad_mm", "sigma_window_mm", "hessian_sigma_mm"}, w);
    StadParams p;
    read(j, "glcm_levels", p.glcm_levels, w);
    read(j, "glcm_distance", p.glcm_distance, w);
    read(j, "sigma_grad_mm", p.sigma_grad_mm, w);
    read(j, "sigma_window_mm", p.sigma_window_mm, w);
    read(j, "hessian_sigma_mm", p.hessian_sigma_mm, w);
    return p;
}

json stad_to_json(const StadParams& p) {
    return {{"glcm_levels", p.glcm_levels},
            {"glcm_distance", p.glcm_distance},
            {"sigma_grad_mm", p.sigma_grad_mm},
            {"sigma_window_mm", p.sigma_window_mm},
            {"hessian_sigma_mm", p.hessian_sigma_mm}};
}

json read_json_file(const fs::path& path, const std::string& what) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + what + " " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        fail(ErrorKind::Validation, what + " " + path.string() + " is not valid JSON: " + e.what());
    }
}

}  // namespace

void PipelineConfig::validate() const {
    require(jobs >= 1, ErrorKind::Configuration, "jobs must be at least 1");
    try {
        registration.validate();
        stad.validate();
        forest.validate();
    } catch (const Error& e) {
        fail(ErrorKind::Configuration, e.what());
    }
    require(augmentation.per_source >= 1, ErrorKind::Configuration, "augmentation.per_source must be at least 1");
    require(!tasks.empty() && !groups.empty(), ErrorKind::Configuration, "tasks and groups must not be empty");
    require(validation_fraction > 0.0 && validation_fraction < 1.0, ErrorKind::Configuration,
            "validation_fraction must be in (0, 1)");
    require(std::isfinite(threshold), ErrorKind::Configuration, "threshold must be finite");
}

PipelineConfig config_from_json(const json& j) {
    const std::string w = "config";
    check_keys(j,
               {"seed", "jobs", "registration", "augmentation", "stad", "forest", "tasks", "groups",
                "validation_fraction", "threshold"},
               w);
    PipelineConfig c;
    read(j, "seed", c.seed, w);
    read(j, "jobs", c.jobs, w);
    if (j.contains("registration")) c.registration = registration_from_json(j["registration"]);
    if (j.contains("augmentation")) {
        const json& a = j["augmentation"];
        check_keys(a, {"per_source", "seed"}, "config.augmentation");
        read(a, "per_source", c.augmentation.per_source, "config.augmentation");
        if (a.contains("seed") && !a["seed"].is_null()) {
            std::uint64_t s = 0;
            read(a, "seed", s, "config.augmentation");
            c.augmentation.seed = s;
        }
    }
    if (j.contains("stad")) c.stad = stad_from_json(j["stad"]);
    if (j.contains("forest")) {
        check_keys(j["forest"], {"n_trees", "max_depth", "min_samples_leaf", "features_per_split", "bootstrap"},
                   "config.forest");
        read(j, "forest", c.forest, w);
    }
    if (j.contains("tasks")) {
        std::vector<std::string> names;
        read(j, "tasks", names, w);
        c.tasks.clear();
        for (const auto& n : names) c.tasks.push_back(parse_staging_task(n));
    }
    if (j.contains("groups")) {
        std::vector<std::string> names;
        read(j, "groups", names, w);
        c.groups.clear();
        for (const auto& n : names) c.groups.push_back(parse_modality_group(n));
    }
    read(j, "validation_fraction", c.validation_fraction, w);
    read(j, "threshold", c.threshold, w);
    c.validate();
    return c;
}

json to_json(const PipelineConfig& c) {
    json tasks = json::array(), groups = json::array();
    for (auto t : c.tasks) tasks.push_back(std::string(to_string(t)));
    for (auto g : c.groups) groups.push_back(std::string(to_string(g)));
    return {{"seed", c.seed},
            {"jobs", c.jobs},
            {"registration", registration_to_json(c.registration)},
            {"augmentation",
             {{"per_source", c.augmentation.per_source},
              {"seed", c.augmentation.seed ? json(*c.augmentation.seed) : json(nullptr)}}},
            {"stad", stad_to_json(c.stad)},
            {"forest", c.forest},
            {"tasks", tasks},
            {"groups", groups},
            {"validation_fraction", c.validation_fraction},
            {"threshold", c.threshold}};
}

PipelineConfig load_config(const fs::path& path) { return config_from_json(read_json_file(path, "config")); }

void CohortSpec::validate() const {
    require(cases >= 1, ErrorKind::Validation, "cohort needs at least one case");
    require(!modalities.empty(), ErrorKind::Validation, "cohort needs at least one modality");
    require(std::find(modalities.begin(), modalities.end(), Modality::GED4) != modalities.end(),
            ErrorKind::Validation, "cohort modalities must include GED4");
    require(std::set<Modality>(modalities.begin(), modalities.end()).size() == modalities.size(),
            ErrorKind::Validation, "cohort modalities must be distinct");
    require(!vendors.empty(), ErrorKind::Validation, "cohort needs at least one vendor");
    for (int a = 0; a < 3; ++a) {
        require(dims[a] >= 16, ErrorKind::Validation, "cohort dims must be at least 16");
        require(spacing[a] > 0.0 && std::isfinite(spacing[a]), ErrorKind::Validation,
                "cohort spacing must be positive");
    }
    for (double k : stage_coherence)
        require(k >= 0.0 && k <= 1.0, ErrorKind::Validation, "stage_coherence values must be in [0, 1]");
    require(coherence_jitter >= 0.0 && coherence_jitter <= 0.5, ErrorKind::Validation,
            "coherence_jitter must be in [0, 0.5]");
    require(noise_sigma >= 0.0 && std::isfinite(noise_sigma), ErrorKind::Validation, "noise_sigma must be >= 0");
    require(max_translation_mm >= 0.0 && max_rotation_deg >= 0.0 && max_rotation_deg < 90.0, ErrorKind::Validation,
            "transform bounds must be nonnegative (rotation below 90 degrees)");
    require(min_scale > 0.0 && min_scale <= max_scale, ErrorKind::Validation, "scale range must satisfy 0 < min <= max");
}

CohortSpec cohort_spec_from_json(const json& j) {
    const std::string w = "phantom spec";
    check_keys(j,
               {"cases", "modalities", "vendors", "dims", "spacing", "stage_coherence", "coherence_jitter",
                "noise_sigma", "max_translation_mm", "max_rotation_deg", "min_scale", "max_scale", "seed"},
               w);
    CohortSpec s;
    read(j, "cases", s.cases, w);
    if (j.contains("modalities")) {
        std::vector<std::string> names;
        read(j, "modalities", names, w);
        s.modalities.clear();
        for (const auto& n : names) s.modalities.push_back(parse_modality(n));
    }
    if (j.contains("vendors")) {
        std::vector<std::string> names;
        read(j, "vendors", names, w);
        s.vendors.clear();
        for (const auto& n : names) s.vendors.push_back(parse_vendor(n));
    }
    read(j, "dims", s.dims, w);
    read(j, "spacing", s.spacing, w);
    read(j, "stage_coherence", s.stage_coherence, w);
    read(j, "coherence_jitter", s.coherence_jitter, w);
    read(j, "noise_sigma", s.noise_sigma, w);
    read(j, "max_translation_mm", s.max_translation_mm, w);
    read(j, "max_rotation_deg", s.max_rotation_deg, w);
    read(j, "min_scale", s.min_scale, w);
    read(j, "max_scale", s.max_scale, w);
    read(j, "seed", s.seed, w);
    s.validate();
    return s;
}

json to_json(const CohortSpec& s) {
    json mods = json::array(), vendors = json::array();
    for (auto m : s.modalities) mods.push_back(std::string(to_string(m)));
    for (auto v : s.vendors) vendors.push_back(std::string(to_string(v)));
    return {{"cases", s.cases},
            {"modalities", mods},
            {"vendors", vendors},
            {"dims", s.dims},
            {"spacing", s.spacing},
            {"stage_coherence", s.stage_coherence},
            {"coherence_jitter", s.coherence_jitter},
            {"noise_sigma", s.noise_sigma},
            {"max_translation_mm", s.max_translation_mm},
            {"max_rotation_deg", s.max_rotation_deg},
            {"min_scale", s.min_scale},
            {"max_scale", s.max_scale},
            {"seed", s.seed}};
}

}  // namespace hepar
