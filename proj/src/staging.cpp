#include "hepar/staging.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <numeric>
#include <thread>

#include "hepar/error.hpp"
#include "hepar/rng.hpp"

namespace hepar {

namespace {

constexpr int kModelVersion = 1;

double gini(double pos, double n) {
    if (n <= 0.0) return 0.0;
    const double p1 = pos / n, p0 = 1.0 - p1;
    return 1.0 - p0 * p0 - p1 * p1;
}

struct TreeBuilder {
    const std::vector<std::vector<double>>& x;
    const std::vector<int>& y;
    const ForestParams& params;
    int mtry;
    Rng& rng;
    double root_n;
    DecisionTree tree;
    std::vector<double> importance;

    int build(std::vector<int>& idx, int depth) {
        const int node = int(tree.nodes.size());
        tree.nodes.emplace_back();
        const double n = double(idx.size());
        double pos = 0.0;
        for (int i : idx) pos += y[i];
        tree.nodes[node].p_positive = pos / n;
        if (depth >= params.max_depth || idx.size() < 2 * std::size_t(params.min_samples_leaf) || pos == 0.0 ||
            pos == n)
            return node;

        const int d = int(x.front().size());
        std::vector<int> feats(d);
        std::iota(feats.begin(), feats.end(), 0);
        for (int t = 0; t < mtry; ++t) std::swap(feats[t], feats[t + int(rng.index(std::uint64_t(d - t)))]);

        const double parent = gini(pos, n);
        int best_feature = -1;
        double best_gain = -1.0, best_threshold = 0.0;
        std::vector<int> order(idx);
        for (int t = 0; t < mtry; ++t) {
            const int f = feats[t];
            std::sort(order.begin(), order.end(), [&](int a, int b) { return x[a][f] < x[b][f]; });
            double left_pos = 0.0;
            for (std::size_t s = 0; s + 1 < order.size(); ++s) {
                left_pos += y[order[s]];
                const double xl = x[order[s]][f], xr = x[order[s + 1]][f];
                if (xl == xr) continue;
                const double nl = double(s + 1), nr = n - nl;
                if (nl < params.min_samples_leaf || nr < params.min_samples_leaf) continue;
                const double child = (nl * gini(left_pos, nl) + nr * gini(pos - left_pos, nr)) / n;
                const double gain = parent - child;
                if (gain > best_gain) best_gain = gain, best_feature = f, best_threshold = xl;
            }
        }
        if (best_feature < 0) return node;

        std::vector<int> left, right;
        for (int i : idx) (x[i][best_feature] <= best_threshold ? left : right).push_back(i);
        importance[best_feature] += n / root_n * std::max(0.0, best_gain);
        idx.clear();
        idx.shrink_to_fit();
        const int l = build(left, depth + 1);
        const int r = build(right, depth + 1);
        TreeNode& nd = tree.nodes[node];
        nd.feature = best_feature;
        nd.threshold = best_threshold;
        nd.left = l;
        nd.right = r;
        return node;
    }
};

void check_tree(const DecisionTree& t, std::size_t n_features, std::size_t tree_index) {
    const auto where = "tree " + std::to_string(tree_index) + ": ";
    require(!t.nodes.empty(), ErrorKind::Validation, where + "no nodes");
    const int n = int(t.nodes.size());
    for (int i = 0; i < n; ++i) {
        const TreeNode& nd = t.nodes[i];
        if (nd.leaf()) {
            require(nd.p_positive >= 0.0 && nd.p_positive <= 1.0, ErrorKind::Validation,
                    where + "leaf probability outside [0, 1]");
            continue;
        }
        require(std::size_t(nd.feature) < n_features, ErrorKind::Validation, where + "feature index out of range");
        require(std::isfinite(nd.threshold), ErrorKind::Validation, where + "non-finite threshold");
        // Children come after their parent, so traversal always terminates.
        require(nd.left > i && nd.left < n && nd.right > i && nd.right < n, ErrorKind::Validation,
                where + "invalid child index");
    }
}

}  // namespace

std::string_view to_string(StagingTask t) noexcept {
    return t == StagingTask::Cirrhosis ? "cirrhosis" : "substantial_fibrosis";
}

StagingTask parse_staging_task(std::string_view s) {
    if (s == "cirrhosis") return StagingTask::Cirrhosis;
    if (s == "substantial_fibrosis") return StagingTask::SubstantialFibrosis;
    fail(ErrorKind::Validation, "unknown staging task '" + std::string(s) + "' (cirrhosis | substantial_fibrosis)");
}

int binarize_stage(Stage stage, StagingTask task) noexcept {
    if (task == StagingTask::Cirrhosis) return stage == Stage::S4 ? 1 : 0;
    return stage == Stage::S1 ? 0 : 1;
}

std::string_view to_string(ModalityGroup g) noexcept {
    return g == ModalityGroup::NonContrast ? "non_contrast" : "contrast";
}

ModalityGroup parse_modality_group(std::string_view s) {
    if (s == "non_contrast") return ModalityGroup::NonContrast;
    if (s == "contrast") return ModalityGroup::Contrast;
    fail(ErrorKind::Validation, "unknown modality group '" + std::string(s) + "' (non_contrast | contrast)");
}

ModalityGroup group_of(Modality m) noexcept {
    switch (m) {
        case Modality::T1WI:
        case Modality::T2WI:
        case Modality::DWI: return ModalityGroup::NonContrast;
        default: return ModalityGroup::Contrast;
    }
}

double gini_impurity(std::span<const int> labels) {
    require(!labels.empty(), ErrorKind::Contract, "gini_impurity of an empty set");
    double pos = 0.0;
    for (int l : labels) {
        require(l == 0 || l == 1, ErrorKind::Contract, "labels must be 0 or 1");
        pos += l;
    }
    return gini(pos, double(labels.size()));
}

void ForestParams::validate() const {
    require(n_trees >= 1, ErrorKind::Configuration, "n_trees must be >= 1");
    require(max_depth >= 1, ErrorKind::Configuration, "max_depth must be >= 1");
    require(min_samples_leaf >= 1, ErrorKind::Configuration, "min_samples_leaf must be >= 1");
    require(features_per_split >= 0, ErrorKind::Configuration, "features_per_split must be >= 0");
}

void to_json(nlohmann::json& j, const ForestParams& p) {
    j = {{"n_trees", p.n_trees},
         {"max_depth", p.max_depth},
         {"min_samples_leaf", p.min_samples_leaf},
         {"features_per_split", p.features_per_split},
         {"bootstrap", p.bootstrap}};
}

void from_json(const nlohmann::json& j, ForestParams& p) {
    ForestParams d;
    p.n_trees = j.value("n_trees", d.n_trees);
    p.max_depth = j.value("max_depth", d.max_depth);
    p.min_samples_leaf = j.value("min_samples_leaf", d.min_samples_leaf);
    p.features_per_split = j.value("features_per_split", d.features_per_split);
    p.bootstrap = j.value("bootstrap", d.bootstrap);
}

double DecisionTree::predict(std::span<const double> x) const {
    int n = 0;
    while (!nodes[n].leaf()) n = x[nodes[n].feature] <= nodes[n].threshold ? nodes[n].left : nodes[n].right;
    return nodes[n].p_positive;
}

RandomForestModel fit_forest(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                             const ForestParams& params, std::uint64_t seed, std::vector<std::string> feature_names,
                             int jobs) {
    params.validate();
    require(x.size() == y.size(), ErrorKind::Contract, "fit_forest: row and label counts differ");
    require(x.size() >= 2, ErrorKind::Contract, "fit_forest needs at least 2 rows");
    const std::size_t d = x.front().size();
    require(d >= 1, ErrorKind::Contract, "fit_forest needs at least one feature");
    if (feature_names.empty())
        for (std::size_t f = 0; f < d; ++f) feature_names.push_back("f" + std::to_string(f));
    require(feature_names.size() == d, ErrorKind::Contract, "feature name count does not match row width");
    for (std::size_t r = 0; r < x.size(); ++r) {
        require(x[r].size() == d, ErrorKind::Contract, "fit_forest: ragged feature rows");
        for (std::size_t f = 0; f < d; ++f)
            require(std::isfinite(x[r][f]), ErrorKind::Validation,
                    "non-finite value of feature " + feature_names[f] + " in row " + std::to_string(r));
    }
    std::size_t positives = 0;
    for (int l : y) {
        require(l == 0 || l == 1, ErrorKind::Contract, "labels must be 0 or 1");
        positives += std::size_t(l);
    }
    require(positives > 0 && positives < y.size(), ErrorKind::Training, "training labels contain a single class");

    const int mtry = params.features_per_split > 0 ? std::min<int>(params.features_per_split, int(d))
                                                   : int(std::ceil(std::sqrt(double(d))));
    RandomForestModel model;
    model.params = params;
    model.seed = seed;
    model.feature_names = std::move(feature_names);
    model.trees.resize(params.n_trees);
    std::vector<std::vector<double>> tree_importance(params.n_trees);
    std::vector<std::vector<char>> in_bag(params.n_trees);

    const std::size_t n = x.size();
    std::atomic<int> next{0};
    const auto worker = [&] {
        for (int t = next++; t < params.n_trees; t = next++) {
            Rng rng(seed + std::uint64_t(t));
            std::vector<int> idx(n);
            in_bag[t].assign(n, params.bootstrap ? 0 : 1);
            for (std::size_t i = 0; i < n; ++i) {
                idx[i] = params.bootstrap ? int(rng.index(n)) : int(i);
                in_bag[t][idx[i]] = 1;
            }
            TreeBuilder b{x, y, params, mtry, rng, double(n), {}, std::vector<double>(d, 0.0)};
            b.build(idx, 0);
            model.trees[t] = std::move(b.tree);
            tree_importance[t] = std::move(b.importance);
        }
    };
    const int threads = std::max(1, std::min(jobs, params.n_trees));
    std::vector<std::thread> pool;
    for (int w = 1; w < threads; ++w) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    // Per-tree normalized importances, then mean and std across trees.
    for (auto& imp : tree_importance) {
        const double total = std::accumulate(imp.begin(), imp.end(), 0.0);
        if (total > 0.0)
            for (double& v : imp) v /= total;
    }
    model.importance_mean.assign(d, 0.0);
    model.importance_std.assign(d, 0.0);
    for (std::size_t f = 0; f < d; ++f) {
        double s = 0.0;
        for (const auto& imp : tree_importance) s += imp[f];
        const double mean = s / params.n_trees;
        double ss = 0.0;
        for (const auto& imp : tree_importance) ss += (imp[f] - mean) * (imp[f] - mean);
        model.importance_mean[f] = mean;
        model.importance_std[f] = std::sqrt(ss / params.n_trees);
    }
    // Single-leaf trees contribute zeros; rescale so the means sum to 1.
    const double mean_total = std::accumulate(model.importance_mean.begin(), model.importance_mean.end(), 0.0);
    if (mean_total > 0.0)
        for (std::size_t f = 0; f < d; ++f) {
            model.importance_mean[f] /= mean_total;
            model.importance_std[f] /= mean_total;
        }

    if (params.bootstrap) {
        std::size_t scored = 0, correct = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double sum = 0.0;
            int votes = 0;
            for (int t = 0; t < params.n_trees; ++t)
                if (!in_bag[t][i]) sum += model.trees[t].predict(x[i]), ++votes;
            if (votes == 0) continue;
            ++scored;
            correct += ((sum / votes >= 0.5) ? 1 : 0) == y[i];
        }
        if (scored > 0) model.oob_accuracy = double(correct) / double(scored);
    }
    return model;
}

double predict_proba(const RandomForestModel& model, std::span<const double> x) {
    require(x.size() == model.n_features(), ErrorKind::Contract,
            "predict_proba: expected " + std::to_string(model.n_features()) + " features, got " +
                std::to_string(x.size()));
    require(!model.trees.empty(), ErrorKind::Contract, "predict_proba: model has no trees");
    double s = 0.0;
    for (const auto& t : model.trees) s += t.predict(x);
    return s / double(model.trees.size());
}

std::vector<FeatureImportance> feature_importance(const RandomForestModel& model) {
    std::vector<FeatureImportance> out;
    for (std::size_t f = 0; f < model.n_features(); ++f)
        out.push_back({model.feature_names[f], model.importance_mean[f], model.importance_std[f]});
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.mean > b.mean; });
    return out;
}

nlohmann::json model_to_json(const RandomForestModel& model) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : model.trees) {
        nlohmann::json feature = nlohmann::json::array(), threshold = nlohmann::json::array(),
                       left = nlohmann::json::array(), right = nlohmann::json::array(),
                       p = nlohmann::json::array();
        for (const auto& nd : t.nodes) {
            feature.push_back(nd.feature);
            threshold.push_back(nd.threshold);
            left.push_back(nd.left);
            right.push_back(nd.right);
            p.push_back(nd.p_positive);
        }
        trees.push_back({{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right},
                         {"p_positive", p}});
    }
    nlohmann::json j;
    j["format"] = "hepar-random-forest";
    j["version"] = kModelVersion;
    j["params"] = model.params;
    j["seed"] = model.seed;
    j["feature_names"] = model.feature_names;
    j["importance_mean"] = model.importance_mean;
    j["importance_std"] = model.importance_std;
    j["oob_accuracy"] = model.oob_accuracy ? nlohmann::json(*model.oob_accuracy) : nlohmann::json(nullptr);
    j["trees"] = std::move(trees);
    return j;
}

RandomForestModel model_from_json(const nlohmann::json& j) {
    RandomForestModel m;
    try {
        require(j.at("format") == "hepar-random-forest", ErrorKind::Validation, "not a random forest model");
        require(j.at("version") == kModelVersion, ErrorKind::Validation,
                "unsupported model version " + j.at("version").dump());
        m.params = j.at("params").get<ForestParams>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        m.importance_mean = j.at("importance_mean").get<std::vector<double>>();
        m.importance_std = j.at("importance_std").get<std::vector<double>>();
        if (!j.at("oob_accuracy").is_null()) m.oob_accuracy = j.at("oob_accuracy").get<double>();
        for (const auto& jt : j.at("trees")) {
            const auto feature = jt.at("feature").get<std::vector<int>>();
            const auto threshold = jt.at("threshold").get<std::vector<double>>();
            const auto left = jt.at("left").get<std::vector<int>>();
            const auto right = jt.at("right").get<std::vector<int>>();
            const auto p = jt.at("p_positive").get<std::vector<double>>();
            const std::size_t n = feature.size();
            require(threshold.size() == n && left.size() == n && right.size() == n && p.size() == n,
                    ErrorKind::Validation, "tree node arrays differ in length");
            DecisionTree t;
            for (std::size_t i = 0; i < n; ++i) t.nodes.push_back({feature[i], threshold[i], left[i], right[i], p[i]});
            m.trees.push_back(std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Validation, std::string("malformed model JSON: ") + e.what());
    }
    m.params.validate();
    const std::size_t d = m.feature_names.size();
    require(d > 0 && m.importance_mean.size() == d && m.importance_std.size() == d, ErrorKind::Validation,
            "model importance vectors do not match the feature list");
    require(!m.trees.empty(), ErrorKind::Validation, "model has no trees");
    for (std::size_t t = 0; t < m.trees.size(); ++t) check_tree(m.trees[t], d, t);
    return m;
}

Split stratified_split(const std::vector<LabeledCase>& cases, std::uint64_t seed, double validation_fraction) {
    require(validation_fraction > 0.0 && validation_fraction < 1.0, ErrorKind::Configuration,
            "validation fraction must be in (0, 1)");
    require(cases.size() >= 5, ErrorKind::Validation, "stratified split needs at least 5 cases");
    std::map<int, std::vector<std::string>> by_class;
    for (const auto& c : cases) {
        require(c.label == 0 || c.label == 1, ErrorKind::Contract, "labels must be 0 or 1");
        by_class[c.label].push_back(c.case_id);
    }
    require(by_class.size() == 2, ErrorKind::Validation, "stratified split needs both classes");
    Split s;
    Rng rng(seed);
    for (auto& [label, ids] : by_class) {
        std::sort(ids.begin(), ids.end());
        require(std::adjacent_find(ids.begin(), ids.end()) == ids.end(), ErrorKind::Validation,
                "duplicate case id in split input");
        if (ids.size() < 2) {
            s.warnings.push_back("class " + std::to_string(label) + " has " + std::to_string(ids.size()) +
                                 " case(s); kept entirely in train");
            s.train.insert(s.train.end(), ids.begin(), ids.end());
            continue;
        }
        rng.shuffle(ids.begin(), ids.end());
        const auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * double(ids.size())));
        s.validation.insert(s.validation.end(), ids.begin(), ids.begin() + std::ptrdiff_t(n_val));
        s.train.insert(s.train.end(), ids.begin() + std::ptrdiff_t(n_val), ids.end());
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.validation.begin(), s.validation.end());
    return s;
}

}  // namespace hepar
