#include "hepar/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "hepar/error.hpp"

namespace hepar {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_same_grid(const Grid& a, const Grid& b, const char* what) {
    require(a.same_as(b), ErrorKind::Contract, std::string(what) + ": inputs are on different grids");
}

// Lower envelope of parabolas; f holds squared distances, positions are n*h.
void edt_1d(const double* f, double* out, int n, double h, std::vector<int>& v, std::vector<double>& z) {
    const auto cross = [&](int p, int q) {
        return ((f[q] + (q * h) * (q * h)) - (f[p] + (p * h) * (p * h))) / (2.0 * h * (q - p));
    };
    int k = -1;
    for (int q = 0; q < n; ++q) {
        if (f[q] == kInf) continue;
        double s = -kInf;
        while (k >= 0 && (s = cross(v[k], q)) <= z[k]) --k;
        if (k < 0) s = -kInf;
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    if (k < 0) {
        std::fill(out, out + n, kInf);
        return;
    }
    int j = 0;
    for (int q = 0; q < n; ++q) {
        while (z[j + 1] < q * h) ++j;
        const double d = q * h - v[j] * h;
        out[q] = d * d + f[v[j]];
    }
}

double percentile(std::vector<double> x, double p) {
    std::sort(x.begin(), x.end());
    const double pos = p * double(x.size() - 1);
    const auto lo = std::size_t(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, x.size() - 1);
    return x[lo] + (pos - double(lo)) * (x[hi] - x[lo]);
}

// Distances from each surface voxel of `from` to the nearest surface voxel of `to`.
std::vector<double> directed(const LabelMask& from, const std::vector<double>& dt_to) {
    std::vector<double> d;
    for (std::size_t n = 0; n < from.size(); ++n)
        if (from[n]) d.push_back(dt_to[n]);
    return d;
}

std::string fmt(double x, const char* spec = "%.4f") {
    char buf[48];
    std::snprintf(buf, sizeof buf, spec, x);
    return buf;
}

}  // namespace

double dice(const LabelMask& a, const LabelMask& b) {
    require_same_grid(a.grid(), b.grid(), "dice");
    std::size_t na = 0, nb = 0, both = 0;
    for (std::size_t n = 0; n < a.size(); ++n) {
        na += a[n];
        nb += b[n];
        both += a[n] & b[n];
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * double(both) / double(na + nb);
}

LabelMask surface_voxels(const LabelMask& m) {
    LabelMask s(m.grid());
    const auto [nx, ny, nz] = m.dims();
    const auto on = [&](int i, int j, int k) { return m.grid().contains(i, j, k) && m(i, j, k); };
    for (int k = 0; k < nz; ++k)
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i)
                if (m(i, j, k))
                    s(i, j, k) = !(on(i - 1, j, k) && on(i + 1, j, k) && on(i, j - 1, k) && on(i, j + 1, k) &&
                                   on(i, j, k - 1) && on(i, j, k + 1));
    return s;
}

std::vector<double> distance_transform(const LabelMask& seeds) {
    const Grid& g = seeds.grid();
    const auto [nx, ny, nz] = g.dims;
    std::vector<double> d(seeds.size());
    for (std::size_t n = 0; n < d.size(); ++n) d[n] = seeds[n] ? 0.0 : kInf;

    const int longest = std::max({nx, ny, nz});
    std::vector<double> line(longest), out(longest), z(longest + 1);
    std::vector<int> v(longest);
    const std::array<int, 3> n{nx, ny, nz};
    const std::array<std::size_t, 3> stride{1, std::size_t(nx), std::size_t(nx) * ny};
    for (int axis = 0; axis < 3; ++axis) {
        const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
        for (int u = 0; u < n[a1]; ++u)
            for (int w = 0; w < n[a2]; ++w) {
                const std::size_t base = u * stride[a1] + w * stride[a2];
                for (int q = 0; q < n[axis]; ++q) line[q] = d[base + q * stride[axis]];
                edt_1d(line.data(), out.data(), n[axis], g.spacing[axis], v, z);
                for (int q = 0; q < n[axis]; ++q) d[base + q * stride[axis]] = out[q];
            }
    }
    for (double& x : d) x = std::sqrt(x);
    return d;
}

HausdorffResult hausdorff(const LabelMask& a, const LabelMask& b) {
    require_same_grid(a.grid(), b.grid(), "hausdorff");
    require(foreground_count(a) > 0 && foreground_count(b) > 0, ErrorKind::UndefinedMetric,
            "hausdorff: distance is undefined for an empty mask");
    const LabelMask sa = surface_voxels(a), sb = surface_voxels(b);
    const auto ab = directed(sa, distance_transform(sb));
    const auto ba = directed(sb, distance_transform(sa));
    HausdorffResult r;
    r.hd_mm = std::max(*std::max_element(ab.begin(), ab.end()), *std::max_element(ba.begin(), ba.end()));
    r.hd95_mm = std::max(percentile(ab, 0.95), percentile(ba, 0.95));
    return r;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
    require(scores.size() == labels.size(), ErrorKind::Contract, "roc_auc: scores and labels differ in length");
    std::vector<std::size_t> order(scores.size());
    for (std::size_t n = 0; n < order.size(); ++n) {
        require(labels[n] == 0 || labels[n] == 1, ErrorKind::Contract, "roc_auc: labels must be 0 or 1");
        require(!std::isnan(scores[n]), ErrorKind::Contract, "roc_auc: NaN score");
        order[n] = n;
    }
    std::sort(order.begin(), order.end(), [&](std::size_t p, std::size_t q) { return scores[p] < scores[q]; });

    double pos = 0.0, rank_sum = 0.0;
    for (std::size_t s = 0; s < order.size();) {
        std::size_t e = s;
        while (e < order.size() && scores[order[e]] == scores[order[s]]) ++e;
        const double mid_rank = 0.5 * double(s + 1 + e);  // mean of ranks s+1..e
        for (std::size_t t = s; t < e; ++t)
            if (labels[order[t]]) {
                pos += 1.0;
                rank_sum += mid_rank;
            }
        s = e;
    }
    const double neg = double(scores.size()) - pos;
    require(pos > 0 && neg > 0, ErrorKind::UndefinedMetric, "roc_auc: both classes must be present");
    return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

double accuracy(std::span<const double> scores, std::span<const int> labels, double threshold) {
    require(scores.size() == labels.size(), ErrorKind::Contract, "accuracy: scores and labels differ in length");
    require(!scores.empty(), ErrorKind::Contract, "accuracy: no samples");
    std::size_t right = 0;
    for (std::size_t n = 0; n < scores.size(); ++n) right += int(scores[n] >= threshold) == labels[n];
    return double(right) / double(scores.size());
}

double dice_ce_loss(const VoxelVolume& pred, const LabelMask& truth, const DiceCeWeights& w) {
    require_same_grid(pred.grid(), truth.grid(), "dice_ce_loss");
    double sp = 0.0, sy = 0.0, spy = 0.0, ce = 0.0;
    for (std::size_t n = 0; n < pred.size(); ++n) {
        const double p = pred[n];
        require(p >= 0.0 && p <= 1.0, ErrorKind::Contract,
                "dice_ce_loss: prediction " + std::to_string(p) + " outside [0, 1]");
        sp += p;
        if (truth[n]) {
            sy += 1.0;
            spy += p;
            ce += std::log(std::max(p, 1e-12));
        }
    }
    const double dc = (2.0 * spy + w.f_smooth) / (sp + sy + w.f_smooth + w.eps);
    return -w.w_dc * dc - w.w_ce * ce;
}

SegmentationCase evaluate_segmentation(std::string case_id, std::string group, const LabelMask& pred,
                                       const LabelMask& truth) {
    SegmentationCase c{std::move(case_id), std::move(group), dice(pred, truth), std::nullopt, std::nullopt};
    if (foreground_count(pred) > 0 && foreground_count(truth) > 0) {
        const auto h = hausdorff(pred, truth);
        c.hausdorff_mm = h.hd_mm;
        c.hd95_mm = h.hd95_mm;
    }
    return c;
}

ClassificationResult evaluate_classification(std::string name, std::span<const double> scores,
                                             std::span<const int> labels, double threshold) {
    ClassificationResult r;
    r.name = std::move(name);
    r.n = int(labels.size());
    for (int y : labels) r.n_positive += y;
    r.auc = roc_auc(scores, labels);
    r.acc = accuracy(scores, labels, threshold);
    return r;
}

std::vector<SegmentationSummary> EvalReport::segmentation_summary() const {
    std::map<std::string, std::vector<const SegmentationCase*>> groups;
    for (const auto& c : segmentation) {
        groups[c.group].push_back(&c);
        groups["\x7f"].push_back(&c);  // sorts last
    }
    std::vector<SegmentationSummary> out;
    for (const auto& [name, cases] : groups) {
        SegmentationSummary s;
        s.group = name == "\x7f" ? "all" : name;
        s.n = int(cases.size());
        for (const auto* c : cases) s.dice_mean += c->dice / s.n;
        for (const auto* c : cases) s.dice_std += (c->dice - s.dice_mean) * (c->dice - s.dice_mean) / s.n;
        s.dice_std = std::sqrt(s.dice_std);
        for (const auto* c : cases)
            if (c->hausdorff_mm) {
                ++s.n_distance;
                s.hausdorff_mean_mm += *c->hausdorff_mm;
                s.hd95_mean_mm += *c->hd95_mm;
            }
        if (s.n_distance) {
            s.hausdorff_mean_mm /= s.n_distance;
            s.hd95_mean_mm /= s.n_distance;
        }
        out.push_back(s);
    }
    return out;
}

nlohmann::json to_json(const EvalReport& r) {
    using nlohmann::json;
    json seg = json::array(), summary = json::array(), cls = json::array();
    const auto opt = [](const std::optional<double>& x) { return x ? json(*x) : json(nullptr); };
    for (const auto& c : r.segmentation)
        seg.push_back({{"case_id", c.case_id},
                       {"group", c.group},
                       {"dice", c.dice},
                       {"hausdorff_max_mm", opt(c.hausdorff_mm)},
                       {"hausdorff_95_mm", opt(c.hd95_mm)}});
    for (const auto& s : r.segmentation_summary())
        summary.push_back({{"group", s.group},
                           {"n", s.n},
                           {"dice_mean", s.dice_mean},
                           {"dice_std", s.dice_std},
                           {"n_distance", s.n_distance},
                           {"hausdorff_max_mean_mm", s.hausdorff_mean_mm},
                           {"hausdorff_95_mean_mm", s.hd95_mean_mm}});
    for (const auto& c : r.classification)
        cls.push_back({{"name", c.name}, {"n", c.n}, {"n_positive", c.n_positive}, {"auc", c.auc}, {"acc", c.acc}});
    return {{"segmentation", {{"cases", seg}, {"summary", summary}}}, {"classification", cls}};
}

void write_table(std::ostream& out, const EvalReport& r) {
    if (!r.segmentation.empty()) {
        out << "segmentation\n";
        out << "  group            n   dice_mean  dice_std  hd_max_mm  hd95_mm\n";
        for (const auto& s : r.segmentation_summary()) {
            std::string line = "  " + s.group;
            line.resize(std::max<std::size_t>(line.size() + 1, 17), ' ');
            char buf[128];
            std::snprintf(buf, sizeof buf, "%3d   %8.4f  %8.4f  %9s  %7s\n", s.n, s.dice_mean, s.dice_std,
                          s.n_distance ? fmt(s.hausdorff_mean_mm, "%.2f").c_str() : "-",
                          s.n_distance ? fmt(s.hd95_mean_mm, "%.2f").c_str() : "-");
            out << line << buf;
        }
    }
    if (!r.classification.empty()) {
        out << "classification\n";
        out << "  name                                n  n_pos     auc     acc\n";
        for (const auto& c : r.classification) {
            std::string line = "  " + c.name;
            line.resize(std::max<std::size_t>(line.size() + 1, 36), ' ');
            char buf[96];
            std::snprintf(buf, sizeof buf, "%3d  %5d  %6.4f  %6.4f\n", c.n, c.n_positive, c.auc, c.acc);
            out << line << buf;
        }
    }
}

}  // namespace hepar
