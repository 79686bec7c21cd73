#include "hepar/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hepar/error.hpp"
#include "hepar/rng.hpp"

namespace hepar {

namespace {

constexpr int kWaves = 24;
const Vec3 kBodySemiAxes{30.0, 26.0, 24.0};
const Vec3 kBlobCenter{-17.0, 13.0, 7.0};
constexpr double kBlobRadius = 6.5;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Signed-distance proxy for an axis-aligned ellipsoid, positive inside.
double ellipsoid_depth(const Vec3& p, const Vec3& c, const Vec3& semi) {
    double rho2 = 0.0;
    for (int a = 0; a < 3; ++a) {
        const double q = (p[a] - c[a]) / semi[a];
        rho2 += q * q;
    }
    const double mean_semi = (semi[0] + semi[1] + semi[2]) / 3.0;
    return (1.0 - std::sqrt(rho2)) * mean_semi;
}

struct Wave {
    Vec3 k;
    double phase;
};

struct Texture {
    std::vector<Wave> waves;
    Wave grating;
};

Vec3 random_unit(Rng& rng) {
    for (;;) {
        const Vec3 v{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        const double n = norm(v);
        if (n > 1e-3 && n <= 1.0) return (1.0 / n) * v;
    }
}

Texture make_texture(const PhantomSpec& s) {
    Rng rng(s.anatomy_seed ^ 0x7e47u);
    const double kmag = 2.0 * std::numbers::pi / s.texture_period_mm;
    Texture t;
    for (int i = 0; i < kWaves; ++i) {
        const Vec3 d = random_unit(rng);
        t.waves.push_back({kmag * d, rng.uniform(0.0, 2.0 * std::numbers::pi)});
    }
    const Vec3 g = (1.0 / norm(s.grating_direction)) * s.grating_direction;
    t.grating = {kmag * g, rng.uniform(0.0, 2.0 * std::numbers::pi)};
    return t;
}

double organ_depth(const PhantomSpec& s, const Vec3& p) {
    double d = ellipsoid_depth(p, s.organ_center_mm, s.semi_axes_mm);
    for (const auto& lobe : s.lobes) d = std::max(d, lobe.radius_mm - norm(p - lobe.center_mm));
    return d;
}

// Base anatomy intensity in [0, 1] before the modality curve.
double base_intensity(const PhantomSpec& s, const Texture& tex, const Vec3& p) {
    const double w = s.edge_width_mm;
    const double body = sigmoid(ellipsoid_depth(p, {0, 0, 0}, kBodySemiAxes) / w);
    const double organ = sigmoid(organ_depth(s, p) / w);
    const double blob = sigmoid((kBlobRadius - norm(p - kBlobCenter)) / w);

    double v = 0.25 * body;
    if (organ > 1e-6) {
        double iso = 0.0;
        for (const auto& wave : tex.waves) iso += std::cos(dot(wave.k, p) + wave.phase);
        iso *= std::sqrt(2.0 / kWaves);
        const double grating = std::sqrt(2.0) * std::cos(dot(tex.grating.k, p) + tex.grating.phase);
        const double texture = std::sqrt(1.0 - s.coherence) * iso + std::sqrt(s.coherence) * grating;
        v += (0.6 + s.texture_amplitude * texture - v) * organ;
    }
    v += (0.92 - v) * blob;
    return std::clamp(v, 0.0, 1.0);
}

}  // namespace

std::string to_string(IntensityCurve c) {
    switch (c) {
        case IntensityCurve::Identity: return "identity";
        case IntensityCurve::Gamma: return "gamma";
        case IntensityCurve::Inverted: return "inverted";
        case IntensityCurve::Sigmoid: return "sigmoid";
    }
    return "?";
}

IntensityCurve parse_intensity_curve(const std::string& s) {
    for (auto c : {IntensityCurve::Identity, IntensityCurve::Gamma, IntensityCurve::Inverted, IntensityCurve::Sigmoid})
        if (to_string(c) == s) return c;
    fail(ErrorKind::Validation, "unknown intensity curve '" + s + "'");
}

double apply_curve(IntensityCurve c, double x) {
    switch (c) {
        case IntensityCurve::Identity: return x;
        case IntensityCurve::Gamma: return std::sqrt(std::max(x, 0.0));
        case IntensityCurve::Inverted: return 1.0 - x;
        case IntensityCurve::Sigmoid: return sigmoid(8.0 * (x - 0.45));
    }
    return x;
}

void PhantomSpec::validate() const {
    auto positive = [](double x) { return std::isfinite(x) && x > 0.0; };
    for (int a = 0; a < 3; ++a) {
        require(dims[a] >= 1, ErrorKind::Validation, "phantom dims must be positive");
        require(positive(spacing[a]) && positive(semi_axes_mm[a]), ErrorKind::Validation,
                "phantom spacing and semi-axes must be positive");
    }
    for (const auto& l : lobes) require(positive(l.radius_mm), ErrorKind::Validation, "lobe radius must be positive");
    require(positive(edge_width_mm) && positive(texture_period_mm) && positive(intensity_scale), ErrorKind::Validation,
            "phantom edge width, texture period and intensity scale must be positive");
    require(std::isfinite(texture_amplitude) && texture_amplitude >= 0.0, ErrorKind::Validation,
            "texture amplitude must be nonnegative");
    require(std::isfinite(noise_sigma) && noise_sigma >= 0.0, ErrorKind::Validation, "noise sigma must be nonnegative");
    require(coherence >= 0.0 && coherence <= 1.0, ErrorKind::Validation, "coherence must be in [0, 1]");
    require(norm(grating_direction) > 0.0, ErrorKind::Validation, "grating direction must be nonzero");
    try {
        transform.validate();
    } catch (const Error& e) {
        fail(ErrorKind::Validation, std::string("phantom transform: ") + e.what());
    }
}

Grid centered_grid(const Index3& dims, const Vec3& spacing) {
    Grid g;
    g.dims = dims;
    g.spacing = spacing;
    for (int a = 0; a < 3; ++a) g.origin[a] = -0.5 * (dims[a] - 1) * spacing[a];
    return g;
}

bool phantom_organ_contains(const PhantomSpec& spec, const Vec3& p) { return organ_depth(spec, p) >= 0.0; }

Phantom make_phantom(const PhantomSpec& spec) {
    spec.validate();
    const Grid grid = centered_grid(spec.dims, spec.spacing);
    const Texture tex = make_texture(spec);
    const SimilarityTransform3D to_anatomy = spec.transform.inverse();
    Rng noise(spec.noise_seed);

    VoxelVolume image(grid, 0.0f);
    LabelMask mask(grid, 0);
    for (int k = 0; k < grid.dims[2]; ++k)
        for (int j = 0; j < grid.dims[1]; ++j)
            for (int i = 0; i < grid.dims[0]; ++i) {
                const Vec3 p = to_anatomy.apply(grid.world(i, j, k));
                double v = apply_curve(spec.curve, base_intensity(spec, tex, p));
                if (spec.noise_sigma > 0.0) v += spec.noise_sigma * noise.normal();
                image(i, j, k) = static_cast<float>(v * spec.intensity_scale);
                mask(i, j, k) = phantom_organ_contains(spec, p) ? 1 : 0;
            }
    return {std::move(image), std::move(mask)};
}

}  // namespace hepar
