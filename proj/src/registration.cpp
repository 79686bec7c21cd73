#include "hepar/registration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "hepar/error.hpp"
#include "hepar/rng.hpp"
#include "hepar/simd/kernels.hpp"

namespace hepar {

namespace {

constexpr double kNoOverlap = -std::numeric_limits<double>::infinity();

// Visits (i,j) and (j,i) together so that a histogram and its transpose
// produce the same sequence of additions.
double mi_from_counts(const double* counts, int b) {
    std::vector<double> rows(b, 0.0), cols(b, 0.0);
    for (int i = 0; i < b; ++i)
        for (int j = 0; j < b; ++j) {
            rows[i] += counts[i * b + j];
            cols[j] += counts[i * b + j];
        }
    double n = 0.0;
    for (int i = 0; i < b; ++i) n += rows[i];
    if (!(n > 0.0)) return kNoOverlap;
    auto term = [&](int i, int j) {
        const double c = counts[i * b + j];
        if (c <= 0.0) return 0.0;
        return (c / n) * std::log((c * n) / (rows[i] * cols[j]));
    };
    double mi = 0.0;
    for (int i = 0; i < b; ++i) {
        mi += term(i, i);
        for (int j = i + 1; j < b; ++j) mi += term(i, j) + term(j, i);
    }
    return std::max(mi, 0.0);
}

int bin_of(double v, const IntensityRange& r, int bins) {
    if (!(r.hi > r.lo)) return 0;
    const double f = std::floor(((v - r.lo) * bins) / (r.hi - r.lo));
    if (!(f >= 0.0)) return 0;
    return f >= bins - 1 ? bins - 1 : static_cast<int>(f);
}

IntensityRange observed_range(const VoxelVolume& v, const std::vector<std::uint8_t>* keep = nullptr) {
    IntensityRange r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    const auto d = v.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (keep && !(*keep)[i]) continue;
        r.lo = std::min(r.lo, static_cast<double>(d[i]));
        r.hi = std::max(r.hi, static_cast<double>(d[i]));
    }
    return r;
}

// Dense MI evaluator for one pyramid level. Fixed bins are computed once;
// moving samples go through the vector kernels.
class LevelMetric {
public:
    LevelMetric(VoxelVolume fixed, VoxelVolume moving, const LabelMask* region, int bins, double sample_fraction)
        : fixed_(std::move(fixed)), moving_(std::move(moving)), bins_(bins) {
        const std::size_t n = fixed_.size();
        std::vector<std::uint8_t> keep(n, 1);
        if (region) {
            require(region->grid().dims == fixed_.dims(), ErrorKind::Contract, "region mask must be on the fixed grid");
            for (std::size_t i = 0; i < n; ++i) keep[i] = (*region)[i];
        }
        if (sample_fraction < 1.0) {
            Rng rng(0x5eed);
            for (std::size_t i = 0; i < n; ++i)
                if (rng.uniform() >= sample_fraction) keep[i] = 0;
        }
        const IntensityRange fr = observed_range(fixed_, &keep);
        fixed_bins_.assign(n, -1);
        for (std::size_t i = 0; i < n; ++i)
            if (keep[i]) fixed_bins_[i] = bin_of(fixed_[i], fr, bins_);
        const IntensityRange mr = observed_range(moving_);
        moving_lo_ = static_cast<float>(mr.lo);
        moving_inv_ = mr.hi > mr.lo ? static_cast<float>(bins_ / (mr.hi - mr.lo)) : 0.0f;
        const int nx = fixed_.dims()[0];
        row_values_.resize(nx);
        row_valid_.resize(nx);
        row_bins_.resize(nx);
        counts_.resize(static_cast<std::size_t>(bins_) * bins_);
        dcounts_.resize(counts_.size());
    }

    [[nodiscard]] std::uint64_t last_samples() const noexcept { return last_samples_; }

    /// MI under `t`, or -inf when fewer than `min_samples` fixed samples
    /// land inside the moving volume.
    double operator()(const SimilarityTransform3D& t, std::uint64_t min_samples = 2) {
        const Grid& fg = fixed_.grid();
        const Grid& mg = moving_.grid();
        Mat3 src_inv = transpose(mg.direction);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) src_inv[r][c] /= mg.spacing[r];
        Mat3 tgt = fg.direction;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) tgt[r][c] *= fg.spacing[c];
        const Mat3 a = src_inv * (t.linear() * tgt);
        const Vec3 b = src_inv * (t.linear() * fg.origin + t.offset() - mg.origin);

        std::fill(counts_.begin(), counts_.end(), 0u);
        const auto& kernels = simd::active_kernels();
        const simd::RowSampler sampler{moving_.data().data(), moving_.dims()};
        const std::array<float, 3> step{static_cast<float>(a[0][0]), static_cast<float>(a[1][0]),
                                        static_cast<float>(a[2][0])};
        const auto& d = fg.dims;
        std::size_t base = 0;
        for (int k = 0; k < d[2]; ++k)
            for (int j = 0; j < d[1]; ++j, base += d[0]) {
                const std::array<float, 3> start{static_cast<float>(a[0][1] * j + a[0][2] * k + b[0]),
                                                 static_cast<float>(a[1][1] * j + a[1][2] * k + b[1]),
                                                 static_cast<float>(a[2][1] * j + a[2][2] * k + b[2])};
                kernels.sample_row(sampler, start, step, d[0], row_values_.data(), row_valid_.data());
                kernels.bin_index(row_values_.data(), d[0], moving_lo_, moving_inv_, bins_, row_bins_.data());
                for (int i = 0; i < d[0]; ++i) {
                    const int fb = fixed_bins_[base + i];
                    if (fb < 0 || !row_valid_[i]) continue;
                    ++counts_[static_cast<std::size_t>(fb) * bins_ + row_bins_[i]];
                }
            }
        std::uint64_t total = 0;
        for (std::size_t i = 0; i < counts_.size(); ++i) {
            total += counts_[i];
            dcounts_[i] = static_cast<double>(counts_[i]);
        }
        last_samples_ = total;
        if (total < std::max<std::uint64_t>(min_samples, 2)) return kNoOverlap;
        return mi_from_counts(dcounts_.data(), bins_);
    }

private:
    VoxelVolume fixed_;
    VoxelVolume moving_;
    int bins_;
    std::vector<std::int32_t> fixed_bins_;
    float moving_lo_ = 0.0f;
    float moving_inv_ = 0.0f;
    std::vector<float> row_values_;
    std::vector<std::uint8_t> row_valid_;
    std::vector<std::int32_t> row_bins_;
    std::vector<std::uint32_t> counts_;
    std::vector<double> dcounts_;
    std::uint64_t last_samples_ = 0;
};

bool is_constant(const VoxelVolume& v) {
    const auto d = v.data();
    return d.empty() || std::all_of(d.begin(), d.end(), [&](float x) { return x == d[0]; });
}

// Rotations and scaling move a point in proportion to its distance from the
// center, so both get the gradient-weighted RMS radius of the fixed image as
// their mm equivalent.
std::array<double, 7> default_scales(const VoxelVolume& fixed, const Vec3& center) {
    const Grid& g = fixed.grid();
    const double sigma = 2.0 * std::min({g.spacing[0], g.spacing[1], g.spacing[2]});
    const VoxelVolume s = gaussian_smooth(fixed, sigma);
    const auto& d = g.dims;
    double wsum = 0.0, r2sum = 0.0;
    for (int k = 0; k < d[2]; ++k)
        for (int j = 0; j < d[1]; ++j)
            for (int i = 0; i < d[0]; ++i) {
                Vec3 grad{};
                const Index3 p{i, j, k};
                for (int a = 0; a < 3; ++a) {
                    if (d[a] < 2) continue;
                    Index3 lo = p, hi = p;
                    lo[a] = std::max(p[a] - 1, 0);
                    hi[a] = std::min(p[a] + 1, d[a] - 1);
                    grad[a] = (s(hi[0], hi[1], hi[2]) - s(lo[0], lo[1], lo[2])) / ((hi[a] - lo[a]) * g.spacing[a]);
                }
                const double w = norm(grad);
                const Vec3 r = g.world(i, j, k) - center;
                wsum += w;
                r2sum += w * dot(r, r);
            }
    double radius = wsum > 0.0 ? std::sqrt(r2sum / wsum) : 0.0;
    if (!(radius > 0.0)) {
        double diag2 = 0.0;
        for (int a = 0; a < 3; ++a) diag2 += (d[a] * g.spacing[a]) * (d[a] * g.spacing[a]);
        radius = 0.5 * std::sqrt(diag2);
    }
    return {1.0, 1.0, 1.0, radius, radius, radius, 1.0};
}

}  // namespace

double JointHistogram::total() const {
    double n = 0.0;
    for (double c : counts) n += c;
    return n;
}

std::vector<double> JointHistogram::fixed_marginal() const {
    std::vector<double> m(bins, 0.0);
    for (int i = 0; i < bins; ++i)
        for (int j = 0; j < bins; ++j) m[i] += at(i, j);
    return m;
}

std::vector<double> JointHistogram::moving_marginal() const {
    std::vector<double> m(bins, 0.0);
    for (int i = 0; i < bins; ++i)
        for (int j = 0; j < bins; ++j) m[j] += at(i, j);
    return m;
}

JointHistogram JointHistogram::transposed() const {
    JointHistogram t = *this;
    std::swap(t.fixed_range, t.moving_range);
    for (int i = 0; i < bins; ++i)
        for (int j = 0; j < bins; ++j) t.counts[static_cast<std::size_t>(j) * bins + i] = at(i, j);
    return t;
}

JointHistogram joint_histogram(const VoxelVolume& fixed, const VoxelVolume& moving_resampled, const LabelMask* region,
                               int bins, const LabelMask* valid) {
    require(bins >= 2, ErrorKind::Contract, "joint histogram needs at least 2 bins");
    require(fixed.dims() == moving_resampled.dims(), ErrorKind::Contract,
            "joint histogram inputs must share a grid");
    const std::size_t n = fixed.size();
    std::vector<std::uint8_t> keep(n, 1);
    for (const LabelMask* m : {region, valid}) {
        if (!m) continue;
        require(m->dims() == fixed.dims(), ErrorKind::Contract, "mask grid does not match joint histogram inputs");
        for (std::size_t i = 0; i < n; ++i) keep[i] = keep[i] && (*m)[i];
    }
    const auto used = static_cast<std::size_t>(std::count(keep.begin(), keep.end(), 1));
    require(used >= 2, ErrorKind::InsufficientOverlap,
            "only " + std::to_string(used) + " overlapping samples for the joint histogram");

    JointHistogram h;
    h.bins = bins;
    h.counts.assign(static_cast<std::size_t>(bins) * bins, 0.0);
    h.fixed_range = observed_range(fixed, &keep);
    h.moving_range = observed_range(moving_resampled, &keep);
    for (std::size_t i = 0; i < n; ++i) {
        if (!keep[i]) continue;
        const int f = bin_of(fixed[i], h.fixed_range, bins);
        const int m = bin_of(moving_resampled[i], h.moving_range, bins);
        h.counts[static_cast<std::size_t>(f) * bins + m] += 1.0;
    }
    return h;
}

double mutual_information(const JointHistogram& h) {
    require(h.bins >= 1 && h.counts.size() == static_cast<std::size_t>(h.bins) * h.bins, ErrorKind::Contract,
            "malformed joint histogram");
    const double mi = mi_from_counts(h.counts.data(), h.bins);
    require(std::isfinite(mi), ErrorKind::Contract, "mutual information of an empty histogram");
    return mi;
}

VoxelVolume warp(const VoxelVolume& moving, const SimilarityTransform3D& t, const Grid& reference,
                 Interpolation interp) {
    return resample(moving, reference, t, interp);
}

LabelMask transfer_label(const LabelMask& annotated_on_moving, const SimilarityTransform3D& t, const Grid& reference) {
    return resample(annotated_on_moving, reference, t);
}

void RegistrationConfig::validate() const {
    auto positive = [](double x) { return std::isfinite(x) && x > 0.0; };
    require(bins >= 2, ErrorKind::Configuration, "registration bins must be >= 2");
    require(pyramid_levels >= 1, ErrorKind::Configuration, "pyramid_levels must be >= 1");
    require(max_iterations >= 1, ErrorKind::Configuration, "max_iterations must be >= 1");
    require(positive(initial_step) && positive(tolerance) && positive(min_step) && positive(gradient_step),
            ErrorKind::Configuration, "registration step sizes and tolerance must be positive");
    require(positive(step_shrink) && step_shrink < 1.0, ErrorKind::Configuration, "step_shrink must be in (0, 1)");
    require(positive(sample_fraction) && sample_fraction <= 1.0, ErrorKind::Configuration,
            "sample_fraction must be in (0, 1]");
    require(std::isfinite(smoothing_voxels) && smoothing_voxels >= 0.0, ErrorKind::Configuration,
            "smoothing_voxels must be nonnegative");
    require(min_overlap_ratio >= 0.0 && min_overlap_ratio < 1.0, ErrorKind::Configuration,
            "min_overlap_ratio must be in [0, 1)");
    if (parameter_scales)
        for (double s : *parameter_scales)
            require(positive(s), ErrorKind::Configuration, "parameter scales must be positive");
}

double evaluate_mi(const VoxelVolume& fixed, const VoxelVolume& moving, const SimilarityTransform3D& t, int bins,
                   const LabelMask* region) {
    t.validate();
    LevelMetric metric(fixed, moving, region, bins, 1.0);
    return metric(t);
}

RegistrationResult register_images(const VoxelVolume& fixed, const VoxelVolume& moving, const RegistrationConfig& cfg,
                                   const std::optional<SimilarityTransform3D>& init, const LabelMask* region) {
    cfg.validate();
    require(!is_constant(fixed) && !is_constant(moving), ErrorKind::Degenerate,
            "registration requires nonconstant fixed and moving volumes");
    if (init) init->validate();

    const Vec3 center = init ? init->center() : fixed.grid().center();
    const std::array<double, 7> scales = cfg.parameter_scales ? *cfg.parameter_scales : default_scales(fixed, center);
    const SimilarityTransform3D start = init.value_or(SimilarityTransform3D::identity(center));

    // Pyramid, finest first. A level is only added while every axis keeps at
    // least 8 voxels.
    std::vector<VoxelVolume> fixed_levels{fixed}, moving_levels{moving};
    std::vector<std::optional<LabelMask>> region_levels{region ? std::optional<LabelMask>(*region) : std::nullopt};
    while (static_cast<int>(fixed_levels.size()) < cfg.pyramid_levels) {
        const auto& f = fixed_levels.back();
        const auto& m = moving_levels.back();
        auto small = [](const Index3& d) { return std::min({d[0], d[1], d[2]}) < 16; };
        if (small(f.dims()) || small(m.dims())) break;
        fixed_levels.push_back(downsample2(f));
        moving_levels.push_back(downsample2(m));
        const auto& r = region_levels.back();
        region_levels.push_back(r ? std::optional<LabelMask>(downsample2_any(*r)) : std::nullopt);
    }
    const int levels = static_cast<int>(fixed_levels.size());

    auto to_transform = [&](const std::array<double, 7>& u) {
        std::array<double, 7> p{};
        for (int i = 0; i < 7; ++i) p[i] = u[i] * scales[i];
        return SimilarityTransform3D::from_parameters(p, center);
    };
    std::array<double, 7> u0{};
    {
        const auto p = start.parameters();
        for (int i = 0; i < 7; ++i) u0[i] = p[i] / scales[i];
    }
    auto u = u0;

    RegistrationResult result;
    result.parameter_scales = scales;
    auto abort_non_finite = [&](int level) {
        std::ostringstream msg;
        msg << "non-finite mutual information at pyramid level " << level << " after " << result.log.size()
            << " iterations";
        if (!result.log.empty()) msg << " (last MI " << result.log.back().mi << ")";
        fail(ErrorKind::Optimizer, msg.str());
    };

    double start_mi_finest = kNoOverlap;
    double final_mi = kNoOverlap;
    for (int level = levels - 1; level >= 0; --level) {
        auto smooth = [&](const VoxelVolume& v) {
            if (cfg.smoothing_voxels == 0.0) return v;
            const auto& sp = v.grid().spacing;
            return gaussian_smooth(v, cfg.smoothing_voxels * std::min({sp[0], sp[1], sp[2]}));
        };
        const LabelMask* level_region = region_levels[level] ? &*region_levels[level] : nullptr;
        LevelMetric metric(smooth(fixed_levels[level]), smooth(moving_levels[level]), level_region, cfg.bins,
                           cfg.sample_fraction);
        std::uint64_t min_samples = 2;
        auto eval = [&](const std::array<double, 7>& v) {
            if (!(v[6] * scales[6] > 0.0)) return kNoOverlap;
            const double mi = metric(to_transform(v), min_samples);
            if (std::isnan(mi)) abort_non_finite(level);
            return mi;
        };
        if (level == 0) start_mi_finest = eval(u0);
        double current = eval(u);
        if (current == kNoOverlap) continue;
        // Histogram MI rewards shrinking the overlap onto a small, simple
        // region; such moves count as insufficient overlap.
        min_samples = static_cast<std::uint64_t>(std::ceil(cfg.min_overlap_ratio * metric.last_samples()));

        auto gradient = [&](const std::array<double, 7>& at, double f0) {
            std::array<double, 7> g{};
            const double h = cfg.gradient_step;
            for (int i = 0; i < 7; ++i) {
                auto plus = at, minus = at;
                plus[i] += h;
                minus[i] -= h;
                const double fp = eval(plus), fm = eval(minus);
                if (fp != kNoOverlap && fm != kNoOverlap)
                    g[i] = (fp - fm) / (2.0 * h);
                else if (fp != kNoOverlap)
                    g[i] = (fp - f0) / h;
                else if (fm != kNoOverlap)
                    g[i] = (f0 - fm) / h;
            }
            return g;
        };

        double step = cfg.initial_step * std::pow(0.5, levels - 1 - level);
        auto g = gradient(u, current);
        for (int it = 0; it < cfg.max_iterations && step >= cfg.min_step; ++it) {
            double gnorm = 0.0;
            for (double x : g) gnorm += x * x;
            gnorm = std::sqrt(gnorm);
            if (!(gnorm > 0.0)) break;
            auto cand = u;
            for (int i = 0; i < 7; ++i) cand[i] += step * g[i] / gnorm;
            const double mi = eval(cand);
            IterationRecord rec;
            rec.level = level;
            rec.iteration = it;
            rec.step = step;
            if (mi > current) {
                const double gain = mi - current;
                u = cand;
                current = mi;
                rec.accepted = true;
                if (gain < cfg.tolerance) step *= cfg.step_shrink;
                g = gradient(u, current);
            } else {
                step *= cfg.step_shrink;
            }
            rec.mi = current;
            rec.parameters = to_transform(u).parameters();
            result.log.push_back(rec);
        }
        if (level == 0) final_mi = current;
    }

    if (start_mi_finest != kNoOverlap && !(final_mi >= start_mi_finest)) {
        // Coarse levels can drift to a point the full-resolution metric
        // rates below the start; never return worse than the start.
        u = u0;
        final_mi = start_mi_finest;
    }
    require(final_mi != kNoOverlap, ErrorKind::InsufficientOverlap,
            "fixed and moving volumes do not overlap under the initial transform");

    result.transform = to_transform(u);
    result.mi = final_mi;
    result.initial_mi = start_mi_finest;
    result.iterations = static_cast<int>(result.log.size());
    return result;
}

nlohmann::json transform_to_json(const SimilarityTransform3D& t, double mi, int iterations) {
    const double deg = 180.0 / std::numbers::pi;
    const auto& a = t.euler_angles();
    return {
        {"euler_deg", {a[0] * deg, a[1] * deg, a[2] * deg}},
        {"translation_mm", t.translation()},
        {"scale", t.scale()},
        {"center_mm", t.center()},
        {"mi", mi},
        {"iterations", iterations},
    };
}

SimilarityTransform3D transform_from_json(const nlohmann::json& j) {
    try {
        const double rad = std::numbers::pi / 180.0;
        const auto deg = j.at("euler_deg").get<std::array<double, 3>>();
        SimilarityTransform3D t({deg[0] * rad, deg[1] * rad, deg[2] * rad}, j.at("translation_mm").get<Vec3>(),
                                j.at("scale").get<double>(), j.at("center_mm").get<Vec3>());
        t.validate();
        return t;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Format, std::string("malformed transform JSON: ") + e.what());
    }
}

}  // namespace hepar
