#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hepar/manifest.hpp"

namespace hepar {

enum class StagingTask { Cirrhosis, SubstantialFibrosis };

std::string_view to_string(StagingTask t) noexcept;
StagingTask parse_staging_task(std::string_view s);

/// Cirrhosis: S4 -> 1. SubstantialFibrosis: S2..S4 -> 1.
int binarize_stage(Stage stage, StagingTask task) noexcept;

enum class ModalityGroup { NonContrast, Contrast };

std::string_view to_string(ModalityGroup g) noexcept;
ModalityGroup parse_modality_group(std::string_view s);
ModalityGroup group_of(Modality m) noexcept;

/// 1 - p0^2 - p1^2. Contract error on an empty set.
double gini_impurity(std::span<const int> labels);

struct ForestParams {
    int n_trees = 200;
    int max_depth = 12;
    int min_samples_leaf = 2;
    /// 0 selects ceil(sqrt(d)).
    int features_per_split = 0;
    /// Off: every tree sees the full training set (OOB is then undefined).
    bool bootstrap = true;

    void validate() const;
};

void to_json(nlohmann::json& j, const ForestParams& p);
void from_json(const nlohmann::json& j, ForestParams& p);

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;  // x[feature] <= threshold goes left
    int left = -1;
    int right = -1;
    double p_positive = 0.0;  // leaf class-1 probability

    [[nodiscard]] bool leaf() const noexcept { return feature < 0; }
    friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct DecisionTree {
    std::vector<TreeNode> nodes;  // root at 0

    [[nodiscard]] double predict(std::span<const double> x) const;
};

struct RandomForestModel {
    ForestParams params;
    std::uint64_t seed = 0;
    std::vector<std::string> feature_names;
    std::vector<DecisionTree> trees;
    std::vector<double> importance_mean;
    std::vector<double> importance_std;
    std::optional<double> oob_accuracy;

    [[nodiscard]] std::size_t n_features() const noexcept { return feature_names.size(); }
};

/// CART trees with Gini splits on bootstrap samples; tree t draws from
/// Rng(seed + t). `jobs` only affects wall time.
RandomForestModel fit_forest(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                             const ForestParams& params, std::uint64_t seed,
                             std::vector<std::string> feature_names = {}, int jobs = 1);

/// Mean of per-tree leaf probabilities.
double predict_proba(const RandomForestModel& model, std::span<const double> x);

struct FeatureImportance {
    std::string name;
    double mean = 0.0;
    double std = 0.0;
};

/// Sorted by mean descending; ties keep feature order.
std::vector<FeatureImportance> feature_importance(const RandomForestModel& model);

nlohmann::json model_to_json(const RandomForestModel& model);
/// Validates structure; Validation error on any inconsistency.
RandomForestModel model_from_json(const nlohmann::json& j);

struct LabeledCase {
    std::string case_id;
    int label = 0;
};

struct Split {
    std::vector<std::string> train;
    std::vector<std::string> validation;
    std::vector<std::string> warnings;
};

/// Per-class proportional split with round(validation_fraction * n_class)
/// validation cases per class; a class with fewer than 2 cases stays in
/// train with a warning.
Split stratified_split(const std::vector<LabeledCase>& cases, std::uint64_t seed, double validation_fraction = 0.2);

}  // namespace hepar
