#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hepar/manifest.hpp"
#include "hepar/metrics.hpp"
#include "hepar/registration.hpp"
#include "hepar/stad.hpp"
#include "hepar/staging.hpp"

namespace hepar {

namespace fs = std::filesystem;

struct AugmentParams {
    int per_source = 5;
    /// Defaults to the master seed.
    std::optional<std::uint64_t> seed;
};

struct PipelineConfig {
    std::uint64_t seed = 0;
    int jobs = 1;
    bool overwrite = false;
    RegistrationConfig registration;
    AugmentParams augmentation;
    StadParams stad;
    ForestParams forest;
    std::vector<StagingTask> tasks{StagingTask::Cirrhosis, StagingTask::SubstantialFibrosis};
    std::vector<ModalityGroup> groups{ModalityGroup::NonContrast, ModalityGroup::Contrast};
    double validation_fraction = 0.2;
    double threshold = 0.5;

    void validate() const;
};

/// Unknown keys are rejected; missing keys keep their defaults.
PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PipelineConfig& c);
PipelineConfig load_config(const fs::path& path);

/// Reason codes of skipped items.
namespace reason {
inline constexpr const char* kMissingAnnotation = "missing_annotation";
inline constexpr const char* kMissingMask = "missing_mask";
inline constexpr const char* kMissingStage = "missing_stage";
inline constexpr const char* kReadFailed = "read_failed";
inline constexpr const char* kRegistrationFailed = "registration_failed";
inline constexpr const char* kExtractionFailed = "extraction_failed";
inline constexpr const char* kGridMismatch = "grid_mismatch";
}  // namespace reason

struct SkipRecord {
    std::string case_id;
    std::string modality;  // empty for case-level skips
    std::string reason;
    std::string message;
};

/// Summary of one command. Never holds timestamps or absolute paths, so
/// reruns produce identical bytes.
struct CommandReport {
    std::string command;
    nlohmann::json outputs = nlohmann::json::object();
    std::vector<SkipRecord> skipped;

    [[nodiscard]] bool partial() const noexcept { return !skipped.empty(); }
};

nlohmann::json to_json(const CommandReport& r);

/// Mask file of (case, modality) under a label root: <root>/<case>/<MOD>.nii.gz.
fs::path label_path(const fs::path& root, const std::string& case_id, Modality m);

// ---- phantom cohort ----

struct CohortSpec {
    int cases = 60;
    std::vector<Modality> modalities{Modality::GED4, Modality::T1WI, Modality::T2WI};
    std::vector<Vendor> vendors{Vendor::A, Vendor::B1, Vendor::B2};
    Index3 dims{64, 64, 64};
    Vec3 spacing{1.0, 1.0, 1.0};
    /// Coherence knob per stage S1..S4.
    std::array<double, 4> stage_coherence{0.0, 0.5, 0.75, 1.0};
    /// Uniform per-case perturbation of the knob, clamped to [0, 1].
    double coherence_jitter = 0.03;
    double noise_sigma = 0.02;
    double max_translation_mm = 10.0;
    double max_rotation_deg = 10.0;
    double min_scale = 0.95;
    double max_scale = 1.05;
    std::uint64_t seed = 0;

    void validate() const;
};

CohortSpec cohort_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CohortSpec& s);

/// Writes manifest.json, images/, masks/ (GED4 annotations), truth/
/// (analytic masks of every modality) and transforms/ (the transform that
/// registering GED4 onto each other modality should recover).
CommandReport cmd_phantom(const CohortSpec& spec, const fs::path& out_dir, const PipelineConfig& cfg);

// ---- commands ----

/// Registers each case's GED4 volume (moving) onto every other modality
/// (fixed); writes transforms/<case>/<MOD>.json and pseudo_labels/.
CommandReport cmd_register(const fs::path& manifest, const fs::path& out_dir, const PipelineConfig& cfg);

/// Instance-mix augmentation of annotated GED4 cases within each vendor.
CommandReport cmd_augment(const fs::path& manifest, const fs::path& out_dir, const PipelineConfig& cfg);

struct MaskSources {
    std::optional<fs::path> pseudo_labels;
    std::optional<fs::path> predictions;
};

/// One STAD row per (case, modality) with a mask; writes features.csv and
/// provenance.csv (annotation > pseudo_label > prediction).
CommandReport cmd_extract(const fs::path& manifest, const MaskSources& masks, const fs::path& out_dir,
                          const PipelineConfig& cfg);

/// Case-level stratified split, then one forest per (task, group). Writes
/// <task>__<group>.model.json, .validation.json and .validation_scores.csv.
CommandReport cmd_train(const fs::path& features_csv, const fs::path& manifest, const fs::path& out_dir,
                        const PipelineConfig& cfg);

/// Case score = mean probability over the case's rows in the model's group.
CommandReport cmd_predict(const fs::path& features_csv, const fs::path& model, const fs::path& out_dir,
                          const PipelineConfig& cfg);

struct EvalInputs {
    std::optional<fs::path> truth_labels;  // label root
    std::optional<fs::path> pred_labels;   // label root
    std::vector<fs::path> score_files;     // scores CSVs
    std::optional<fs::path> manifest;      // stage labels for scores
};

/// Writes report.json and returns the metrics report as well.
CommandReport cmd_eval(const EvalInputs& in, const fs::path& out_dir, const PipelineConfig& cfg,
                       EvalReport* report = nullptr);

// ---- model and score files ----

struct StagingModel {
    StagingTask task = StagingTask::Cirrhosis;
    ModalityGroup group = ModalityGroup::Contrast;
    RandomForestModel forest;
};

nlohmann::json to_json(const StagingModel& m);
StagingModel staging_model_from_json(const nlohmann::json& j);

struct CaseScore {
    std::string case_id;
    double probability = 0.0;
    int rows = 0;
};

/// Mean probability per case over rows whose modality is in the model's
/// group, sorted by case id. Validation error when the model's feature
/// names differ from the CSV's.
std::vector<CaseScore> score_cases(const StagingModel& model, const std::vector<FeatureRow>& rows);

void write_scores_csv(const fs::path& path, const StagingModel& model, const std::vector<CaseScore>& scores);

struct ScoreFile {
    StagingTask task = StagingTask::Cirrhosis;
    ModalityGroup group = ModalityGroup::Contrast;
    std::vector<CaseScore> scores;
};
ScoreFile read_scores_csv(const fs::path& path);

/// Writes through a sibling temporary file and a rename.
void write_text_atomic(const fs::path& path, const std::string& text);

}  // namespace hepar
