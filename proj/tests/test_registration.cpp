#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numbers>

#include "hepar/phantom.hpp"
#include "hepar/registration.hpp"
#include "hepar/rng.hpp"
#include "test_util.hpp"

using namespace hepar;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

Grid cube_grid(int n, double spacing = 1.0) {
    Grid g;
    g.dims = {n, n, n};
    g.spacing = {spacing, spacing, spacing};
    return g;
}

VoxelVolume noise_volume(const Grid& g, std::uint64_t seed) {
    Rng rng(seed);
    VoxelVolume v(g);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(rng.uniform());
    return v;
}

double entropy_of_counts(const std::vector<double>& c) {
    double n = 0.0;
    for (double x : c) n += x;
    double h = 0.0;
    for (double x : c)
        if (x > 0) h -= (x / n) * std::log(x / n);
    return h;
}

double dice(const LabelMask& a, const LabelMask& b) {
    std::size_t inter = 0, sa = 0, sb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        inter += a[i] && b[i];
        sa += a[i];
        sb += b[i];
    }
    return sa + sb == 0 ? 1.0 : 2.0 * inter / double(sa + sb);
}

struct PhantomPair {
    Phantom fixed;
    Phantom moving;
};

PhantomPair phantom_pair(const SimilarityTransform3D& truth, std::uint64_t seed) {
    PhantomSpec f;
    f.anatomy_seed = seed;
    f.noise_seed = 2 * seed + 1;
    PhantomSpec m = f;
    m.noise_seed = 2 * seed + 2;
    m.curve = IntensityCurve::Sigmoid;
    m.transform = truth;
    return {make_phantom(f), make_phantom(m)};
}

void check_recovered(const SimilarityTransform3D& got, const SimilarityTransform3D& truth, double mm, double deg,
                     double scale) {
    const Vec3 d = got.apply({0, 0, 0}) - truth.apply({0, 0, 0});
    for (int a = 0; a < 3; ++a) CHECK(std::abs(d[a]) <= mm);
    CHECK(rotation_angle_between(got.rotation(), truth.rotation()) <= deg * kDeg);
    CHECK(std::abs(got.scale() - truth.scale()) <= scale);
}

}  // namespace

TEST_CASE("transform_point basic cases") {
    const Vec3 p{3.5, -2.0, 7.25};
    const auto id = SimilarityTransform3D::identity({4, 5, 6});
    CHECK(transform_point(id, p) == p);
    const Vec3 t = transform_point(SimilarityTransform3D::translation({1, 2, 3}), {0, 0, 0});
    CHECK(t == Vec3{1, 2, 3});
    const SimilarityTransform3D rz({0, 0, std::numbers::pi / 2}, {0, 0, 0}, 1.0, {0, 0, 0});
    const Vec3 q = transform_point(rz, {1, 0, 0});
    CHECK(std::abs(q[0]) < 1e-12);
    CHECK(std::abs(q[1] - 1.0) < 1e-12);
    CHECK(std::abs(q[2]) < 1e-12);
}

TEST_CASE("inverse and compose round-trip random transforms") {
    Rng rng(2024);
    for (int trial = 0; trial < 500; ++trial) {
        const SimilarityTransform3D t({rng.uniform(-3, 3), rng.uniform(-1.5, 1.5), rng.uniform(-3, 3)},
                                      {rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-50, 50)},
                                      rng.uniform(0.5, 2.0), {rng.uniform(-20, 20), rng.uniform(-20, 20), 3.0});
        const Vec3 p{rng.uniform(-100, 100), rng.uniform(-100, 100), rng.uniform(-100, 100)};
        CHECK(norm(t.inverse().apply(t.apply(p)) - p) < 1e-9);
        CHECK(norm(compose(t, t.inverse()).apply(p) - p) < 1e-9);
        CHECK(norm(compose(t.inverse(), t).apply(p) - p) < 1e-9);
    }
}

TEST_CASE("non-positive scale is rejected") {
    testutil::check_error(ErrorKind::InvalidTransform,
                          [] { SimilarityTransform3D({0, 0, 0}, {0, 0, 0}, 0.0, {0, 0, 0}).validate(); });
    testutil::check_error(ErrorKind::InvalidTransform,
                          [] { (void)SimilarityTransform3D({0, 0, 0}, {0, 0, 0}, -1.0, {0, 0, 0}).inverse(); });
}

TEST_CASE("warp identity and integer shift") {
    const Grid g = cube_grid(12);
    const VoxelVolume v = noise_volume(g, 9);
    CHECK(warp(v, SimilarityTransform3D::identity(), g) == v);

    const VoxelVolume shifted = warp(v, SimilarityTransform3D::translation({5, 0, 0}), g);
    for (int k = 0; k < 12; ++k)
        for (int j = 0; j < 12; ++j)
            for (int i = 0; i < 12; ++i) {
                const float expect = i + 5 < 12 ? v(i + 5, j, k) : 0.0f;
                CHECK(shifted(i, j, k) == expect);
            }
}

TEST_CASE("warp then inverse warp stays within the interpolation bound") {
    // f = A (sin(x/7) + cos(y/9) + sin(z/11)); |grad f| <= A (1/7 + 1/9 + 1/11).
    const double amp = 100.0;
    const double lipschitz = amp * (1.0 / 7 + 1.0 / 9 + 1.0 / 11);
    Grid g = cube_grid(40);
    g.origin = {-19.5, -19.5, -19.5};
    VoxelVolume v(g);
    for (int k = 0; k < 40; ++k)
        for (int j = 0; j < 40; ++j)
            for (int i = 0; i < 40; ++i) {
                const Vec3 p = g.world(i, j, k);
                v(i, j, k) = static_cast<float>(amp * (std::sin(p[0] / 7) + std::cos(p[1] / 9) + std::sin(p[2] / 11)));
            }
    const SimilarityTransform3D t({0.03, -0.05, 5 * kDeg}, {2.0, -1.0, 1.5}, 1.03, {0, 0, 0});
    const VoxelVolume there = warp(v, t, g);
    const VoxelVolume back = warp(there, t.inverse(), g);
    double worst = 0.0;
    for (int k = 8; k < 32; ++k)
        for (int j = 8; j < 32; ++j)
            for (int i = 8; i < 32; ++i) worst = std::max(worst, std::abs(double(back(i, j, k)) - v(i, j, k)));
    CHECK(worst < 2.0 * lipschitz * 1.0);
    MESSAGE("round-trip max error " << worst << " bound " << 2.0 * lipschitz);
}

TEST_CASE("joint histogram examples") {
    Grid g = cube_grid(4);
    VoxelVolume binary(g);
    for (std::size_t i = 0; i < binary.size(); ++i) binary[i] = static_cast<float>(i % 3 == 0);
    const auto h = joint_histogram(binary, binary, nullptr, 2);
    CHECK(h.at(0, 1) == 0.0);
    CHECK(h.at(1, 0) == 0.0);
    CHECK(h.at(0, 0) + h.at(1, 1) == 64.0);

    const VoxelVolume constant(g, 5.0f);
    const auto hc = joint_histogram(constant, noise_volume(g, 1), nullptr, 8);
    const auto rows = hc.fixed_marginal();
    CHECK(rows[0] == 64.0);
    for (int b = 1; b < 8; ++b) CHECK(rows[b] == 0.0);
}

TEST_CASE("joint histogram counts only valid in-bounds samples") {
    const Grid g = cube_grid(10);
    const VoxelVolume fixed = noise_volume(g, 3);
    const auto moved =
        resample_with_validity(noise_volume(g, 4), g, SimilarityTransform3D::translation({2.5, -1.0, 0}),
                               Interpolation::Trilinear);
    std::size_t valid = 0;
    for (std::size_t i = 0; i < moved.valid.size(); ++i) valid += moved.valid[i];
    const auto h = joint_histogram(fixed, moved.image, nullptr, 16, &moved.valid);
    CHECK(h.total() == double(valid));
    CHECK(valid == 7u * 9u * 10u);
    const auto fm = h.fixed_marginal(), mm = h.moving_marginal();
    double sf = 0, sm = 0;
    for (int b = 0; b < 16; ++b) {
        CHECK(fm[b] >= 0);
        CHECK(mm[b] >= 0);
        sf += fm[b];
        sm += mm[b];
    }
    CHECK(sf == h.total());
    CHECK(sm == h.total());

    LabelMask region(g, 0);
    region[0] = 1;
    testutil::check_error(ErrorKind::InsufficientOverlap, [&] { joint_histogram(fixed, fixed, &region, 8); });
}

TEST_CASE("MI of an image with itself is its entropy") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const VoxelVolume v = noise_volume(cube_grid(20), seed);
        const auto h = joint_histogram(v, v, nullptr, 32);
        const double mi = mutual_information(h);
        CHECK(std::abs(mi - entropy_of_counts(h.fixed_marginal())) < 1e-9);
        CHECK(std::abs(mi - entropy_of_counts(h.moving_marginal())) < 1e-9);
    }
}

TEST_CASE("MI of independent noise is small") {
    const Grid g = cube_grid(64);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const double mi =
            mutual_information(joint_histogram(noise_volume(g, 100 + seed), noise_volume(g, 200 + seed), nullptr, 32));
        CHECK(mi >= 0.0);
        CHECK(mi < 0.05);
    }
}

TEST_CASE("MI is exactly symmetric") {
    Rng rng(8);
    const Grid g = cube_grid(16);
    for (int trial = 0; trial < 20; ++trial) {
        const VoxelVolume a = noise_volume(g, rng.next());
        VoxelVolume b = noise_volume(g, rng.next());
        for (std::size_t i = 0; i < b.size(); ++i) b[i] = 0.6f * b[i] + 0.4f * a[i] * a[i];
        const auto hab = joint_histogram(a, b, nullptr, 32);
        const auto hba = joint_histogram(b, a, nullptr, 32);
        CHECK(mutual_information(hab) == mutual_information(hba));
        CHECK(mutual_information(hab) == mutual_information(hab.transposed()));
    }
}

TEST_CASE("MI is unchanged by an affine rescale that keeps bin assignments") {
    Rng rng(17);
    const Grid g = cube_grid(16);
    VoxelVolume a(g), b(g), b2(g);
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = static_cast<float>(rng.index(200));
        b[i] = static_cast<float>((static_cast<int>(a[i]) + rng.index(60)) % 200);
        b2[i] = 4.0f * b[i] + 8.0f;
    }
    const double m1 = mutual_information(joint_histogram(a, b, nullptr, 32));
    const double m2 = mutual_information(joint_histogram(a, b2, nullptr, 32));
    CHECK(std::abs(m1 - m2) <= 1e-12);
}

TEST_CASE("register keeps identity for identical inputs") {
    const auto pair = phantom_pair(SimilarityTransform3D::identity(), 3);
    const auto r = register_images(pair.fixed.image, pair.fixed.image);
    check_recovered(r.transform, SimilarityTransform3D::identity(), 0.5, 0.5, 0.01);
}

TEST_CASE("register recovers a known translation") {
    const auto truth = SimilarityTransform3D::translation({4, -3, 2});
    const auto pair = phantom_pair(truth, 11);
    const auto r = register_images(pair.fixed.image, pair.moving.image);
    check_recovered(r.transform, truth, 1.0, 1.0, 0.02);
    CHECK(r.mi >= r.initial_mi);

    // The pseudo-label lands on the analytic organ of the fixed image.
    const LabelMask label = transfer_label(pair.moving.mask, r.transform, pair.fixed.image.grid());
    CHECK(dice(label, pair.fixed.mask) >= 0.95);
}

TEST_CASE("register recovers rotation and scale") {
    const SimilarityTransform3D truth({0, 0, 5 * kDeg}, {0, 0, 0}, 1.05, {0, 0, 0});
    const auto pair = phantom_pair(truth, 12);
    const auto r = register_images(pair.fixed.image, pair.moving.image);
    check_recovered(r.transform, truth, 1.0, 1.0, 0.02);
}

TEST_CASE("register is deterministic and never ends below its start") {
    const SimilarityTransform3D truth({0.05, -0.03, 0.08}, {3, 1, -2}, 0.97, {0, 0, 0});
    const auto pair = phantom_pair(truth, 21);
    RegistrationConfig cfg;
    cfg.smoothing_voxels = 0.0;
    cfg.max_iterations = 40;
    const auto a = register_images(pair.fixed.image, pair.moving.image, cfg);
    const auto b = register_images(pair.fixed.image, pair.moving.image, cfg);
    const auto pa = a.transform.parameters(), pb = b.transform.parameters();
    CHECK(std::memcmp(pa.data(), pb.data(), sizeof(pa)) == 0);
    CHECK(a.log.size() == b.log.size());

    const double start = evaluate_mi(pair.fixed.image, pair.moving.image, SimilarityTransform3D::identity(), cfg.bins);
    const double end = evaluate_mi(pair.fixed.image, pair.moving.image, a.transform, cfg.bins);
    CHECK(start == a.initial_mi);
    CHECK(end == a.mi);
    CHECK(end >= start);
}

TEST_CASE("register reports misuse without crashing") {
    const auto pair = phantom_pair(SimilarityTransform3D::identity(), 5);
    const VoxelVolume flat(pair.fixed.image.grid(), 1.0f);
    testutil::check_error(ErrorKind::Degenerate, [&] { register_images(flat, pair.moving.image); });
    testutil::check_error(ErrorKind::InsufficientOverlap, [&] {
        register_images(pair.fixed.image, pair.moving.image, {}, SimilarityTransform3D::translation({500, 0, 0}));
    });
    RegistrationConfig bad;
    bad.bins = 1;
    testutil::check_error(ErrorKind::Configuration, [&] { register_images(pair.fixed.image, pair.moving.image, bad); });
}

TEST_CASE("transfer_label trivial cases") {
    const Grid src = cube_grid(8);
    LabelMask m(src, 0);
    m(2, 3, 4) = 1;
    const LabelMask same = transfer_label(m, SimilarityTransform3D::identity(), src);
    CHECK(same == m);

    Grid coarse = cube_grid(4, 2.0);
    const LabelMask down = transfer_label(m, SimilarityTransform3D::identity(), coarse);
    CHECK(foreground_count(down) == 0);  // (2,3,4) falls between coarse centers
    m(2, 4, 6) = 1;
    const LabelMask hit = transfer_label(m, SimilarityTransform3D::identity(), coarse);
    CHECK(foreground_count(hit) == 1);
    CHECK(hit(1, 2, 3) == 1);

    const LabelMask empty(src, 0);
    const SimilarityTransform3D t({0.1, 0.2, 0.3}, {1, 2, 3}, 1.1, {4, 4, 4});
    CHECK(foreground_count(transfer_label(empty, t, src)) == 0);
}

TEST_CASE("transform JSON round trip") {
    const SimilarityTransform3D t({0.1, -0.2, 0.3}, {1.5, -2.5, 3.5}, 1.02, {10, 20, 30});
    const auto j = transform_to_json(t, 0.75, 42);
    CHECK(j.at("iterations") == 42);
    CHECK(std::abs(j.at("euler_deg")[2].get<double>() - 0.3 / kDeg) < 1e-12);
    const auto back = transform_from_json(nlohmann::json::parse(j.dump()));
    const Vec3 p{7, 8, 9};
    CHECK(norm(back.apply(p) - t.apply(p)) < 1e-9);
    testutil::check_error(ErrorKind::Format, [] { transform_from_json(nlohmann::json::object()); });
}
