#include "hepar/stad.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hepar/error.hpp"
#include "hepar/volume.hpp"

namespace hepar {

namespace {

void require_same_grid(const VoxelVolume& v, const LabelMask& m, const char* op) {
    require(v.grid().same_as(m.grid(), 1e-4), ErrorKind::Contract, std::string(op) + ": volume and mask grids differ");
}

// Mask voxels whose 6-neighbour central-difference stencil is inside the grid.
bool interior(const Index3& d, int i, int j, int k) {
    return i >= 1 && j >= 1 && k >= 1 && i + 1 < d[0] && j + 1 < d[1] && k + 1 < d[2];
}

bool has_interior_voxel(const LabelMask& m) {
    const auto& d = m.dims();
    for (int k = 1; k + 1 < d[2]; ++k)
        for (int j = 1; j + 1 < d[1]; ++j)
            for (int i = 1; i + 1 < d[0]; ++i)
                if (m(i, j, k)) return true;
    return false;
}

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

MeanStd mean_std(const std::vector<double>& x) {
    MeanStd r;
    if (x.empty()) return r;
    for (double v : x) r.mean += v;
    r.mean /= double(x.size());
    double ss = 0.0;
    for (double v : x) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / double(x.size()));
    return r;
}

int kernel_radius(double sigma_mm, double h) { return std::max(1, int(std::ceil(3.0 * sigma_mm / h))); }

// Derivative-of-Gaussian taps, normalized so that affine (order 1) and
// quadratic (order 2) profiles are differentiated exactly.
std::vector<float> derivative_kernel(double sigma_mm, double h, int order) {
    const int r = kernel_radius(sigma_mm, h);
    std::vector<double> w(2 * r + 1);
    for (int t = -r; t <= r; ++t) {
        const double x = t * h;
        const double g = std::exp(-0.5 * x * x / (sigma_mm * sigma_mm));
        w[t + r] = order == 1 ? x * g : (x * x / (sigma_mm * sigma_mm) - 1.0) * g;
    }
    if (order == 2) {
        double mean = 0.0;
        for (double v : w) mean += v;
        mean /= double(w.size());
        for (double& v : w) v -= mean;
    }
    double moment = 0.0;
    for (int t = -r; t <= r; ++t) moment += w[t + r] * (order == 1 ? t * h : t * h * t * h);
    const double target = order == 1 ? 1.0 : 2.0;
    std::vector<float> out(w.size());
    for (std::size_t n = 0; n < w.size(); ++n) out[n] = static_cast<float>(w[n] * target / moment);
    return out;
}

std::vector<float> smoothing_kernel(double sigma_mm, double h) {
    const int r = kernel_radius(sigma_mm, h);
    std::vector<double> w(2 * r + 1);
    double sum = 0.0;
    for (int t = -r; t <= r; ++t) sum += w[t + r] = std::exp(-0.5 * (t * h) * (t * h) / (sigma_mm * sigma_mm));
    std::vector<float> out(w.size());
    for (std::size_t n = 0; n < w.size(); ++n) out[n] = static_cast<float>(w[n] / sum);
    return out;
}

// Filter with per-axis derivative orders (0 = Gaussian smoothing).
VoxelVolume gaussian_derivative(const VoxelVolume& v, double sigma_mm, Index3 orders) {
    std::array<std::vector<float>, 3> w;
    for (int a = 0; a < 3; ++a) {
        const double h = v.grid().spacing[a];
        w[a] = orders[a] == 0 ? smoothing_kernel(sigma_mm, h) : derivative_kernel(sigma_mm, h, orders[a]);
    }
    return separable_filter(v, w);
}

// Crop to the mask box plus the filter footprint, so that the filtered
// values at mask voxels equal those of the full volume. Values are taken
// relative to the crop minimum: derivatives do not change and a constant
// region filters to exact zeros.
std::pair<VoxelVolume, LabelMask> crop_for_filters(const VoxelVolume& v, const LabelMask& m, double footprint_mm) {
    const auto box = bounding_box(m);
    require(box.has_value(), ErrorKind::Degenerate, "empty mask");
    int margin = 0;
    for (int a = 0; a < 3; ++a) margin = std::max(margin, int(std::ceil(footprint_mm / v.grid().spacing[a])) + 1);
    const VoxelBox b = expand_box(*box, margin, m.dims());
    VoxelVolume cv = crop(v, b);
    const float ref = *std::min_element(cv.data().begin(), cv.data().end());
    for (float& x : cv.data()) x -= ref;
    return {std::move(cv), crop(m, b)};
}

template <class F>
void for_mask(const LabelMask& m, F&& f) {
    const auto& d = m.dims();
    for (int k = 0; k < d[2]; ++k)
        for (int j = 0; j < d[1]; ++j)
            for (int i = 0; i < d[0]; ++i)
                if (m(i, j, k)) f(i, j, k);
}

double quantile_sorted(const std::vector<double>& s, double q) {
    const double pos = q * double(s.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, s.size() - 1);
    const double f = pos - double(lo);
    return (1.0 - f) * s[lo] + f * s[hi];
}

template <class F>
auto in_family(const char* family, F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        throw Error(e.kind(), std::string(family) + " features: " + e.what());
    }
}

}  // namespace

std::size_t stad_feature_index(std::string_view name) {
    const auto it = std::find(kStadFeatureNames.begin(), kStadFeatureNames.end(), name);
    require(it != kStadFeatureNames.end(), ErrorKind::Validation, "unknown STAD feature '" + std::string(name) + "'");
    return std::size_t(it - kStadFeatureNames.begin());
}

std::vector<std::string> stad_model_feature_names() {
    std::vector<std::string> names(kStadFeatureNames.begin(), kStadFeatureNames.end());
    names.emplace_back("vendor_flag");
    return names;
}

std::vector<double> StadFeatureVector::model_row() const {
    std::vector<double> row(values.begin(), values.end());
    row.push_back(vendor_flag());
    return row;
}

void StadParams::validate() const {
    require(glcm_levels >= 2 && glcm_levels <= 256, ErrorKind::Configuration, "glcm_levels must be in [2, 256]");
    require(glcm_distance >= 1, ErrorKind::Configuration, "glcm_distance must be >= 1");
    for (double s : {sigma_grad_mm, sigma_window_mm, hessian_sigma_mm})
        require(std::isfinite(s) && s > 0.0, ErrorKind::Configuration, "STAD sigmas must be positive");
}

ShapeFeatures shape_features(const LabelMask& m) {
    const auto box = bounding_box(m);
    require(box.has_value(), ErrorKind::Degenerate, "shape features of an empty mask");
    const Vec3& sp = m.grid().spacing;
    const std::array<double, 3> face_area{sp[1] * sp[2], sp[0] * sp[2], sp[0] * sp[1]};

    // Boundary faces are weighted by |n|_2/|n|_1 of the local surface normal,
    // taken from the mask smoothed with a 1-voxel Gaussian. A face of axis a
    // covers |n_a| of the true surface element, so the weighted sum estimates
    // the area of the smooth surface; axis-aligned faces keep weight 1.
    const std::vector<float> g1 = gaussian_kernel(1.0, 1.0);
    const int pad = int(g1.size() / 2) + 2;
    Grid pg;
    for (int a = 0; a < 3; ++a) pg.dims[a] = box->hi[a] - box->lo[a] + 1 + 2 * pad;
    VoxelVolume padded(pg, 0.0f);
    std::size_t count = 0;
    for_mask(m, [&](int i, int j, int k) {
        ++count;
        padded(i - box->lo[0] + pad, j - box->lo[1] + pad, k - box->lo[2] + pad) = 1.0f;
    });
    const VoxelVolume smooth = separable_filter(padded, {g1, g1, g1});
    const auto central = [&](Index3 p, int b) {
        Index3 u = p, d = p;
        ++u[b], --d[b];
        return 0.5 * (double(smooth(u[0], u[1], u[2])) - smooth(d[0], d[1], d[2]));
    };

    double area = 0.0;
    for_mask(m, [&](int i, int j, int k) {
        const Index3 p{i - box->lo[0] + pad, j - box->lo[1] + pad, k - box->lo[2] + pad};
        for (int a = 0; a < 3; ++a)
            for (int s : {-1, 1}) {
                Index3 q = p;
                q[a] += s;
                if (padded(q[0], q[1], q[2]) != 0.0f) continue;
                Vec3 n{};
                for (int b = 0; b < 3; ++b) {
                    const double g = b == a ? double(smooth(q[0], q[1], q[2])) - smooth(p[0], p[1], p[2])
                                            : 0.5 * (central(p, b) + central(q, b));
                    n[b] = g / sp[b];
                }
                const double l1 = std::abs(n[0]) + std::abs(n[1]) + std::abs(n[2]);
                area += face_area[a] * (l1 > 0.0 ? norm(n) / l1 : 1.0);
            }
    });
    ShapeFeatures f;
    f.volume_mm3 = double(count) * sp[0] * sp[1] * sp[2];
    f.surface_area_mm2 = area;
    f.sphericity = std::cbrt(std::numbers::pi) * std::pow(6.0 * f.volume_mm3, 2.0 / 3.0) / area;
    f.solidity = f.volume_mm3 / convex_hull_volume(m);
    return f;
}

PcaShape pca_shape(const LabelMask& m) {
    std::vector<Vec3> pts;
    for_mask(m, [&](int i, int j, int k) { pts.push_back(m.grid().world(i, j, k)); });
    require(pts.size() >= 2, ErrorKind::Degenerate, "PCA shape needs at least 2 foreground voxels");
    Vec3 c{};
    for (const auto& p : pts) c = c + p;
    c = (1.0 / double(pts.size())) * c;
    Mat3 cov{};
    for (const auto& p : pts) {
        const Vec3 q = p - c;
        for (int r = 0; r < 3; ++r)
            for (int s = 0; s < 3; ++s) cov[r][s] += q[r] * q[s];
    }
    for (auto& row : cov)
        for (double& x : row) x /= double(pts.size());
    const Vec3 l = eig3_symmetric(cov);
    const auto ratio = [](double num, double den) {
        return den > 0.0 && num > 0.0 ? std::min(1.0, std::sqrt(num / den)) : 0.0;
    };
    return {ratio(l[1], l[0]), ratio(l[2], l[1])};
}

GradientStats gradient_stats(const VoxelVolume& v, const LabelMask& m) {
    require_same_grid(v, m, "gradient_stats");
    const auto& d = v.dims();
    const Vec3& sp = v.grid().spacing;
    std::vector<double> mags;
    for_mask(m, [&](int i, int j, int k) {
        if (!interior(d, i, j, k)) return;
        const double gx = (double(v(i + 1, j, k)) - v(i - 1, j, k)) / (2.0 * sp[0]);
        const double gy = (double(v(i, j + 1, k)) - v(i, j - 1, k)) / (2.0 * sp[1]);
        const double gz = (double(v(i, j, k + 1)) - v(i, j, k - 1)) / (2.0 * sp[2]);
        mags.push_back(std::sqrt(gx * gx + gy * gy + gz * gz));
    });
    require(!mags.empty(), ErrorKind::Degenerate, "no mask voxel has an in-bounds gradient stencil");
    const MeanStd ms = mean_std(mags);
    return {ms.mean, ms.std};
}

std::string_view to_string(GlcmPlane p) noexcept {
    switch (p) {
        case GlcmPlane::XY: return "xy";
        case GlcmPlane::XZ: return "xz";
        case GlcmPlane::YZ: return "yz";
    }
    return "?";
}

GlcmFeatures glcm_plane(const VoxelVolume& v_u8, const LabelMask& m, GlcmPlane plane, int levels, int distance) {
    require_same_grid(v_u8, m, "glcm_plane");
    require(levels >= 2 && levels <= 256, ErrorKind::Contract, "GLCM levels must be in [2, 256]");
    require(distance >= 1, ErrorKind::Contract, "GLCM distance must be >= 1");
    const auto& d = m.dims();
    std::vector<std::int32_t> q(v_u8.size(), -1);
    for (std::size_t n = 0; n < q.size(); ++n) {
        if (!m[n]) continue;
        const float x = v_u8[n];
        require(x >= 0.0f && x <= 255.0f, ErrorKind::Contract, "GLCM input must be normalized to [0, 255]");
        q[n] = std::min(levels - 1, static_cast<int>(std::floor(double(x) * levels / 256.0)));
    }
    const std::array<int, 2> axes = plane == GlcmPlane::XY ? std::array{0, 1}
                                    : plane == GlcmPlane::XZ ? std::array{0, 2}
                                                             : std::array{1, 2};
    const auto L = static_cast<std::size_t>(levels);
    std::array<std::vector<double>, 2> prob;
    std::array<std::uint64_t, 2> totals{};
    for (int dir = 0; dir < 2; ++dir) {
        std::vector<std::uint64_t> counts(L * L, 0);
        Index3 step{0, 0, 0};
        step[axes[dir]] = distance;
        for (int k = 0; k + step[2] < d[2]; ++k)
            for (int j = 0; j + step[1] < d[1]; ++j)
                for (int i = 0; i + step[0] < d[0]; ++i) {
                    const std::int32_t a = q[m.grid().offset(i, j, k)];
                    const std::int32_t b = q[m.grid().offset(i + step[0], j + step[1], k + step[2])];
                    if (a < 0 || b < 0) continue;
                    ++counts[std::size_t(a) * L + std::size_t(b)];
                    ++counts[std::size_t(b) * L + std::size_t(a)];
                    totals[dir] += 2;
                }
        prob[dir].assign(L * L, 0.0);
        if (totals[dir] > 0)
            for (std::size_t n = 0; n < L * L; ++n) prob[dir][n] = double(counts[n]) / double(totals[dir]);
    }
    require(totals[0] + totals[1] > 0, ErrorKind::Degenerate,
            "no in-mask voxel pairs for GLCM plane " + std::string(to_string(plane)));

    std::array<double, 2> contrast{};
    for (int dir = 0; dir < 2; ++dir)
        for (std::size_t i = 0; i < L; ++i)
            for (std::size_t j = 0; j < L; ++j) {
                const double diff = double(i) - double(j);
                contrast[dir] += prob[dir][i * L + j] * diff * diff;
            }
    const bool both = totals[0] > 0 && totals[1] > 0;
    GlcmFeatures f;
    for (std::size_t i = 0; i < L; ++i)
        for (std::size_t j = 0; j < L; ++j) {
            const double p = both ? 0.5 * (prob[0][i * L + j] + prob[1][i * L + j])
                                  : prob[totals[0] > 0 ? 0 : 1][i * L + j];
            const double diff = std::abs(double(i) - double(j));
            f.contrast += p * diff * diff;
            f.energy += p * p;
            f.homogeneity += p / (1.0 + diff);
        }
    f.anisotropy = both ? (contrast[0] - contrast[1]) / (contrast[0] + contrast[1] + 1e-12) : 0.0;
    return f;
}

AppearanceStats appearance_stats(const VoxelVolume& v, const LabelMask& m) {
    require_same_grid(v, m, "appearance_stats");
    std::vector<double> x;
    for (std::size_t n = 0; n < m.size(); ++n)
        if (m[n]) x.push_back(v[n]);
    require(!x.empty(), ErrorKind::Degenerate, "appearance statistics of an empty mask");
    const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
    const double lo = *lo_it, hi = *hi_it;
    AppearanceStats s;
    if (lo == hi) {
        s.mean = lo;
        return s;
    }
    const double n = double(x.size());
    for (double a : x) s.mean += a;
    s.mean /= n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double a : x) {
        const double dv = a - s.mean, d2 = dv * dv;
        m2 += d2;
        m3 += d2 * dv;
        m4 += d2 * d2;
    }
    m2 /= n, m3 /= n, m4 /= n;
    s.std = std::sqrt(m2);
    if (m2 > 0.0) {
        s.skewness = m3 / (m2 * s.std);
        s.kurtosis = m4 / (m2 * m2) - 3.0;
    }
    constexpr int kBins = 64;
    std::array<std::size_t, kBins> hist{};
    for (double a : x) ++hist[std::min(kBins - 1, static_cast<int>(std::floor((a - lo) * kBins / (hi - lo))))];
    for (std::size_t c : hist)
        if (c > 0) {
            const double p = double(c) / n;
            s.entropy -= p * std::log(p);
        }
    std::sort(x.begin(), x.end());
    s.iqr = quantile_sorted(x, 0.75) - quantile_sorted(x, 0.25);
    return s;
}

Vec3 eig3_symmetric(const Mat3& s) {
    double scale = 0.0;
    for (const auto& row : s)
        for (double x : row) scale = std::max(scale, std::abs(x));
    const double tol = 1e-9 * std::max(1.0, scale);
    require(std::abs(s[0][1] - s[1][0]) <= tol && std::abs(s[0][2] - s[2][0]) <= tol &&
                std::abs(s[1][2] - s[2][1]) <= tol,
            ErrorKind::Contract, "eig3_symmetric: matrix is not symmetric");
    const double a01 = 0.5 * (s[0][1] + s[1][0]);
    const double a02 = 0.5 * (s[0][2] + s[2][0]);
    const double a12 = 0.5 * (s[1][2] + s[2][1]);
    const double p1 = a01 * a01 + a02 * a02 + a12 * a12;
    Vec3 l;
    if (p1 == 0.0) {
        l = {s[0][0], s[1][1], s[2][2]};
    } else {
        const double q = (s[0][0] + s[1][1] + s[2][2]) / 3.0;
        const double b00 = s[0][0] - q, b11 = s[1][1] - q, b22 = s[2][2] - q;
        const double p = std::sqrt((b00 * b00 + b11 * b11 + b22 * b22 + 2.0 * p1) / 6.0);
        const double detb = b00 * (b11 * b22 - a12 * a12) - a01 * (a01 * b22 - a12 * a02) + a02 * (a01 * a12 - b11 * a02);
        const double r = std::clamp(detb / (2.0 * p * p * p), -1.0, 1.0);
        const double phi = std::acos(r) / 3.0;
        const double e1 = q + 2.0 * p * std::cos(phi);
        const double e3 = q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
        l = {e1, 3.0 * q - e1 - e3, e3};
    }
    std::sort(l.begin(), l.end(), std::greater<>());
    return l;
}

StructureTensorFeatures structure_tensor_features(const VoxelVolume& v, const LabelMask& m, double sigma_grad_mm,
                                                  double sigma_window_mm) {
    require_same_grid(v, m, "structure_tensor_features");
    require(sigma_grad_mm > 0.0 && sigma_window_mm > 0.0, ErrorKind::Contract, "structure tensor sigmas must be positive");
    require(has_interior_voxel(m), ErrorKind::Degenerate, "no mask voxel has an in-bounds gradient stencil");
    const auto [cv, cm] = crop_for_filters(v, m, 3.0 * (sigma_grad_mm + sigma_window_mm));
    const VoxelVolume gx = gaussian_derivative(cv, sigma_grad_mm, {1, 0, 0});
    const VoxelVolume gy = gaussian_derivative(cv, sigma_grad_mm, {0, 1, 0});
    const VoxelVolume gz = gaussian_derivative(cv, sigma_grad_mm, {0, 0, 1});
    const std::array<const VoxelVolume*, 3> g{&gx, &gy, &gz};
    std::array<VoxelVolume, 6> j;
    constexpr std::array<std::array<int, 2>, 6> pairs{{{0, 0}, {1, 1}, {2, 2}, {0, 1}, {0, 2}, {1, 2}}};
    for (std::size_t t = 0; t < 6; ++t) {
        VoxelVolume prod(cv.grid(), 0.0f);
        for (std::size_t n = 0; n < prod.size(); ++n) prod[n] = (*g[pairs[t][0]])[n] * (*g[pairs[t][1]])[n];
        j[t] = gaussian_derivative(prod, sigma_window_mm, {0, 0, 0});
    }
    std::vector<double> coherence, planarity;
    for (std::size_t n = 0; n < cm.size(); ++n) {
        if (!cm[n]) continue;
        const Mat3 t{{{j[0][n], j[3][n], j[4][n]}, {j[3][n], j[1][n], j[5][n]}, {j[4][n], j[5][n], j[2][n]}}};
        const Vec3 l = eig3_symmetric(t);
        // Round-off can push the smallest eigenvalue of a PSD tensor below 0.
        const double l1 = std::max(0.0, l[0]), l2 = std::max(0.0, l[1]), l3 = std::max(0.0, l[2]);
        coherence.push_back((l1 - l3) / (l1 + l3 + 1e-12));
        planarity.push_back((l2 - l3) / (l1 + 1e-12));
    }
    const MeanStd c = mean_std(coherence);
    return {c.mean, c.std, mean_std(planarity).mean};
}

HessianFeatures hessian_features(const VoxelVolume& v, const LabelMask& m, double sigma_mm) {
    require_same_grid(v, m, "hessian_features");
    require(sigma_mm > 0.0, ErrorKind::Contract, "Hessian sigma must be positive");
    require(has_interior_voxel(m), ErrorKind::Degenerate, "no mask voxel has an in-bounds gradient stencil");
    const auto [cv, cm] = crop_for_filters(v, m, 3.0 * sigma_mm);
    constexpr std::array<Index3, 6> orders{{{2, 0, 0}, {0, 2, 0}, {0, 0, 2}, {1, 1, 0}, {1, 0, 1}, {0, 1, 1}}};
    std::array<VoxelVolume, 6> h;
    for (std::size_t t = 0; t < 6; ++t) h[t] = gaussian_derivative(cv, sigma_mm, orders[t]);
    std::vector<double> trace, aniso, sheet;
    for (std::size_t n = 0; n < cm.size(); ++n) {
        if (!cm[n]) continue;
        const Mat3 t{{{h[0][n], h[3][n], h[4][n]}, {h[3][n], h[1][n], h[5][n]}, {h[4][n], h[5][n], h[2][n]}}};
        const Vec3 mu = eig3_symmetric(t);
        trace.push_back(mu[0] + mu[1] + mu[2]);
        aniso.push_back((mu[0] - mu[2]) / (std::abs(mu[0]) + std::abs(mu[1]) + std::abs(mu[2]) + 1e-12));
        sheet.push_back(std::clamp(std::abs(mu[2]) / std::sqrt(std::abs(mu[0] * mu[1]) + 1e-12), 0.0, 10.0));
    }
    return {mean_std(trace).mean, mean_std(aniso).mean, mean_std(sheet).mean};
}

StadFeatureVector extract_stad(const VoxelVolume& v, const LabelMask& m, Vendor vendor, const StadParams& params) {
    params.validate();
    require_same_grid(v, m, "extract_stad");
    require(foreground_count(m) > 0, ErrorKind::Degenerate, "extract_stad: empty mask");
    StadFeatureVector out;
    out.vendor = vendor;
    auto& x = out.values;

    const ShapeFeatures shape = in_family("shape", [&] { return shape_features(m); });
    const PcaShape pca = in_family("shape", [&] { return pca_shape(m); });
    x[0] = shape.volume_mm3, x[1] = shape.surface_area_mm2, x[2] = shape.sphericity, x[3] = shape.solidity;
    x[4] = pca.elongation, x[5] = pca.flatness;

    const AppearanceStats app = in_family("appearance", [&] { return appearance_stats(v, m); });
    x[6] = app.mean, x[7] = app.std, x[8] = app.skewness, x[9] = app.kurtosis, x[10] = app.entropy, x[11] = app.iqr;

    const GradientStats grad = in_family("gradient", [&] { return gradient_stats(v, m); });
    x[12] = grad.mean, x[13] = grad.std;

    const VoxelVolume u8 = normalize_u8(v);
    std::size_t slot = 14;
    for (GlcmPlane p : {GlcmPlane::XY, GlcmPlane::XZ, GlcmPlane::YZ}) {
        const GlcmFeatures g =
            in_family("GLCM", [&] { return glcm_plane(u8, m, p, params.glcm_levels, params.glcm_distance); });
        x[slot++] = g.contrast, x[slot++] = g.energy, x[slot++] = g.homogeneity, x[slot++] = g.anisotropy;
    }

    const StructureTensorFeatures st = in_family("directional", [&] {
        return structure_tensor_features(v, m, params.sigma_grad_mm, params.sigma_window_mm);
    });
    const HessianFeatures hs = in_family("directional", [&] { return hessian_features(v, m, params.hessian_sigma_mm); });
    x[26] = st.coherence_mean, x[27] = st.coherence_std, x[28] = st.planarity_mean;
    x[29] = hs.trace_mean, x[30] = hs.anisotropy_mean, x[31] = hs.sheetness_mean;

    for (std::size_t n = 0; n < kStadFeatureCount; ++n)
        require(std::isfinite(x[n]), ErrorKind::Degenerate,
                "feature " + std::string(kStadFeatureNames[n]) + " is not finite");
    return out;
}

}  // namespace hepar
