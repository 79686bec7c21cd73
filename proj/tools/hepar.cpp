#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "hepar/error.hpp"
#include "hepar/pipeline.hpp"

using namespace hepar;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitValidation = 2;
constexpr int kExitPartial = 3;

int exit_code(const CommandReport& r) {
    for (const auto& s : r.skipped)
        std::cerr << "skipped " << s.case_id << (s.modality.empty() ? "" : "/" + s.modality) << " [" << s.reason
                  << "] " << s.message << "\n";
    nlohmann::json brief = nlohmann::json::object();
    for (const auto& [k, v] : r.outputs.items())
        if (!v.is_array()) brief[k] = v;
    std::cout << r.command << ": " << brief.dump() << "\n";
    return r.partial() ? kExitPartial : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Liver MRI registration, augmentation, STAD features and fibrosis staging"};
    app.require_subcommand(1);

    std::optional<std::string> config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> jobs;
    bool overwrite = false;
    app.add_option("--config", config_path, "pipeline configuration (JSON)")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "master seed (overrides the configuration and the phantom spec)");
    app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    app.add_flag("--overwrite", overwrite, "allow writing into a non-empty output directory");

    std::string manifest, out, features, model, spec_path;
    std::optional<std::string> pseudo, predictions, truth, pred, labels_manifest;
    std::vector<std::string> scores;

    auto* phantom = app.add_subcommand("phantom", "generate a synthetic multi-modal cohort");
    phantom->add_option("--spec", spec_path, "cohort spec (JSON); defaults when omitted")->check(CLI::ExistingFile);
    phantom->add_option("--out", out, "output directory")->required();

    auto* reg = app.add_subcommand("register", "register GED4 onto every other modality and transfer its mask");
    reg->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
    reg->add_option("--out", out)->required();

    auto* aug = app.add_subcommand("augment", "instance-mix augmentation of annotated GED4 cases");
    aug->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
    aug->add_option("--out", out)->required();

    auto* ext = app.add_subcommand("extract", "STAD features per (case, modality)");
    ext->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
    ext->add_option("--pseudo-labels", pseudo, "label root written by register")->check(CLI::ExistingDirectory);
    ext->add_option("--predictions", predictions, "label root of predicted masks")->check(CLI::ExistingDirectory);
    ext->add_option("--out", out)->required();

    auto* train = app.add_subcommand("train", "fit one forest per (task, modality group)");
    train->add_option("--features", features)->required()->check(CLI::ExistingFile);
    train->add_option("--manifest", manifest, "manifest holding stage labels")->required()->check(CLI::ExistingFile);
    train->add_option("--out", out)->required();

    auto* predict = app.add_subcommand("predict", "per-case probabilities from a trained model");
    predict->add_option("--features", features)->required()->check(CLI::ExistingFile);
    predict->add_option("--model", model)->required()->check(CLI::ExistingFile);
    predict->add_option("--out", out)->required();

    auto* eval = app.add_subcommand("eval", "segmentation and staging metrics");
    eval->add_option("--truth", truth, "ground-truth label root")->check(CLI::ExistingDirectory);
    eval->add_option("--pred", pred, "predicted label root")->check(CLI::ExistingDirectory);
    eval->add_option("--scores", scores, "scores CSV from predict or train")->check(CLI::ExistingFile);
    eval->add_option("--manifest", labels_manifest, "manifest holding stage labels")->check(CLI::ExistingFile);
    eval->add_option("--out", out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitValidation;
    }

    try {
        PipelineConfig cfg = config_path ? load_config(*config_path) : PipelineConfig{};
        if (seed) cfg.seed = *seed;
        if (jobs) cfg.jobs = *jobs;
        cfg.overwrite = overwrite;
        cfg.validate();

        if (*phantom) {
            CohortSpec spec;
            if (!spec_path.empty()) {
                std::ifstream in(spec_path);
                nlohmann::json j;
                try {
                    j = nlohmann::json::parse(in);
                } catch (const nlohmann::json::parse_error& e) {
                    fail(ErrorKind::Validation, std::string("phantom spec is not valid JSON: ") + e.what());
                }
                spec = cohort_spec_from_json(j);
            }
            if (seed) spec.seed = *seed;
            return exit_code(cmd_phantom(spec, out, cfg));
        }
        if (*reg) return exit_code(cmd_register(manifest, out, cfg));
        if (*aug) return exit_code(cmd_augment(manifest, out, cfg));
        if (*ext) {
            MaskSources src;
            if (pseudo) src.pseudo_labels = *pseudo;
            if (predictions) src.predictions = *predictions;
            return exit_code(cmd_extract(manifest, src, out, cfg));
        }
        if (*train) return exit_code(cmd_train(features, manifest, out, cfg));
        if (*predict) return exit_code(cmd_predict(features, model, out, cfg));
        if (*eval) {
            EvalInputs in;
            if (truth) in.truth_labels = *truth;
            if (pred) in.pred_labels = *pred;
            for (const auto& s : scores) in.score_files.emplace_back(s);
            if (labels_manifest) in.manifest = *labels_manifest;
            EvalReport report;
            const CommandReport r = cmd_eval(in, out, cfg, &report);
            write_table(std::cout, report);
            return exit_code(r);
        }
    } catch (const Error& e) {
        std::cerr << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n";
        switch (e.kind()) {
            case ErrorKind::Validation:
            case ErrorKind::Configuration:
            case ErrorKind::Format:
                return kExitValidation;
            default:
                return kExitFailure;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitFailure;
}
