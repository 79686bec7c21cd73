#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "hepar/augmentation.hpp"
#include "hepar/rng.hpp"
#include "hepar/volume.hpp"
#include "test_util.hpp"

using namespace hepar;

namespace {

Grid cube(int n) {
    Grid g;
    g.dims = {n, n, n};
    return g;
}

VoxelVolume ramp_volume(const Grid& g, std::uint64_t seed) {
    Rng rng(seed);
    VoxelVolume v(g);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(100.0 + 50.0 * rng.uniform());
    return v;
}

LabelMask box_mask(const Grid& g, Index3 lo, Index3 hi) {
    LabelMask m(g, 0);
    for (int k = lo[2]; k <= hi[2]; ++k)
        for (int j = lo[1]; j <= hi[1]; ++j)
            for (int i = lo[0]; i <= hi[0]; ++i) m(i, j, k) = 1;
    return m;
}

LabelMask ball_mask(const Grid& g, Vec3 c, double r) {
    LabelMask m(g, 0);
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i) {
                const Vec3 d{i - c[0], j - c[1], k - c[2]};
                m(i, j, k) = norm(d) <= r ? 1 : 0;
            }
    return m;
}

double dice(const LabelMask& a, const LabelMask& b) {
    std::size_t inter = 0, sa = 0, sb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        inter += a[i] && b[i];
        sa += a[i];
        sb += b[i];
    }
    return 2.0 * inter / double(sa + sb);
}

}  // namespace

TEST_CASE("self-mix reproduces the target") {
    const Grid g = cube(24);
    const VoxelVolume v = ramp_volume(g, 1);
    const LabelMask m = ball_mask(g, {11.0, 12.0, 10.5}, 7.5);
    const MixResult r = instance_mix(v, m, v, m);
    CHECK(r.scale == 1.0);
    CHECK(dice(r.mask, m) >= 0.99);
    double worst = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) worst = std::max(worst, std::abs(double(r.volume[i]) - v[i]));
    CHECK(worst <= 1e-4);
}

TEST_CASE("scale is the fit-inside extent ratio") {
    const Grid g = cube(48);
    const VoxelVolume v = ramp_volume(g, 2);
    const LabelMask src = box_mask(g, {5, 5, 5}, {24, 24, 24});     // 20^3
    const LabelMask dst = box_mask(g, {4, 4, 4}, {43, 43, 43});     // 40^3
    CHECK(instance_mix(v, src, v, dst).scale == 2.0);
    const LabelMask flat = box_mask(g, {4, 4, 4}, {43, 43, 13});    // 40 x 40 x 10
    CHECK(instance_mix(v, src, v, flat).scale == 0.5);
}

TEST_CASE("pasted label matches an independent world-space oracle") {
    const Grid g = cube(48);
    const VoxelVolume sv = ramp_volume(g, 3);
    const VoxelVolume tv = ramp_volume(g, 4);
    // Even extents keep every mapped index off the rounding ties.
    LabelMask src = ball_mask(g, {14.5, 15.5, 13.5}, 9.0);
    const LabelMask tgt = ball_mask(g, {24.5, 23.5, 25.5}, 16.0);
    const auto sb = *bounding_box(src);
    const auto tb = *bounding_box(tgt);
    const MixResult r = instance_mix(sv, src, tv, tgt);

    double s = 1e9;
    for (int a = 0; a < 3; ++a) s = std::min(s, double(tb.hi[a] - tb.lo[a] + 1) / (sb.hi[a] - sb.lo[a] + 1));
    CHECK(r.scale == doctest::Approx(s).epsilon(1e-15));
    const Vec3 cs = g.world(Vec3{0.5 * (sb.lo[0] + sb.hi[0]), 0.5 * (sb.lo[1] + sb.hi[1]), 0.5 * (sb.lo[2] + sb.hi[2])});
    const Vec3 ct = g.world(Vec3{0.5 * (tb.lo[0] + tb.hi[0]), 0.5 * (tb.lo[1] + tb.hi[1]), 0.5 * (tb.lo[2] + tb.hi[2])});
    std::size_t expected = 0;
    for (int k = 0; k < 48; ++k)
        for (int j = 0; j < 48; ++j)
            for (int i = 0; i < 48; ++i) {
                bool in_box = true;
                const Index3 p{i, j, k};
                for (int a = 0; a < 3; ++a) in_box = in_box && p[a] >= tb.lo[a] && p[a] <= tb.hi[a];
                std::uint8_t want = 0;
                if (in_box) {
                    const Vec3 q = g.index(cs + (1.0 / s) * (g.world(i, j, k) - ct));
                    const int x = int(std::lround(q[0])), y = int(std::lround(q[1])), z = int(std::lround(q[2]));
                    want = g.contains(x, y, z) ? src(x, y, z) : 0;
                }
                expected += want;
                CHECK(r.mask(i, j, k) == want);
            }
    CHECK(foreground_count(r.mask) == expected);
}

TEST_CASE("uncovered target foreground gets the ring median, outside the box is untouched") {
    const Grid g = cube(32);
    VoxelVolume tv(g, 7.0f);
    const LabelMask tgt = box_mask(g, {8, 8, 8}, {23, 23, 23});
    const LabelMask ring = dilate(tgt, 3);
    // Ring values: 1..n in a fixed order; the median of 1..n is known.
    std::vector<float> ring_values;
    for (std::size_t i = 0; i < tv.size(); ++i)
        if (ring[i] && !tgt[i]) {
            tv[i] = static_cast<float>(ring_values.size() + 1);
            ring_values.push_back(tv[i]);
        }
    const std::size_t n = ring_values.size();
    const double median = n % 2 ? double((n + 1) / 2) : 0.5 * (n / 2 + n / 2 + 1);

    // Thin source slab: scaled to fit, it cannot cover the whole target cube.
    const VoxelVolume sv(g, 1000.0f);
    const LabelMask src = box_mask(g, {4, 4, 10}, {19, 19, 13});
    const MixResult r = instance_mix(sv, src, tv, tgt);

    const auto tb = *bounding_box(tgt);
    std::size_t filled = 0;
    for (int k = 0; k < 32; ++k)
        for (int j = 0; j < 32; ++j)
            for (int i = 0; i < 32; ++i) {
                const bool in_box = i >= tb.lo[0] && i <= tb.hi[0] && j >= tb.lo[1] && j <= tb.hi[1] &&
                                    k >= tb.lo[2] && k <= tb.hi[2];
                if (!in_box) {
                    CHECK(r.volume(i, j, k) == tv(i, j, k));
                } else if (tgt(i, j, k) && !r.mask(i, j, k)) {
                    CHECK(r.volume(i, j, k) == static_cast<float>(median));
                    ++filled;
                } else if (r.mask(i, j, k)) {
                    CHECK(r.volume(i, j, k) == 1000.0f);
                }
            }
    CHECK(filled > 0);
}

TEST_CASE("mixed labels stay binary and keep the source component count") {
    const Grid g = cube(40);
    const VoxelVolume v = ramp_volume(g, 5);
    LabelMask src = ball_mask(g, {10, 12, 12}, 5.0);
    const LabelMask second = ball_mask(g, {24, 12, 12}, 5.0);
    for (std::size_t i = 0; i < src.size(); ++i) src[i] = src[i] | second[i];
    REQUIRE(connected_components(src) == 2);
    for (double r : {8.0, 12.0, 17.0}) {
        const LabelMask tgt = ball_mask(g, {19.5, 20.5, 19.5}, r);
        const MixResult mix = instance_mix(v, src, v, tgt);
        for (std::size_t i = 0; i < mix.mask.size(); ++i) CHECK(mix.mask[i] <= 1);
        CHECK(connected_components(mix.mask) == 2);
    }
}

TEST_CASE("empty masks are degenerate") {
    const Grid g = cube(8);
    const VoxelVolume v(g, 1.0f);
    const LabelMask empty(g, 0);
    const LabelMask one = box_mask(g, {2, 2, 2}, {4, 4, 4});
    testutil::check_error(ErrorKind::Degenerate, [&] { instance_mix(v, empty, v, one); });
    testutil::check_error(ErrorKind::Degenerate, [&] { instance_mix(v, one, v, empty); });
}

TEST_CASE("mix plans: counts, vendor purity, distinct targets, determinism") {
    std::vector<CohortMember> cohort;
    for (Vendor v : {Vendor::A, Vendor::B1, Vendor::B2})
        for (int i = 0; i < 10; ++i) cohort.push_back({std::string(to_string(v)) + "_" + std::to_string(i), v});
    const auto plan = plan_mixes(cohort, 5, 99);
    CHECK(plan.size() == 150);
    std::map<std::string, Vendor> vendor_of;
    for (const auto& c : cohort) vendor_of[c.case_id] = c.vendor;
    std::map<std::string, std::set<std::string>> targets;
    for (const auto& m : plan) {
        CHECK(m.source != m.target);
        CHECK(vendor_of[m.source] == vendor_of[m.target]);
        CHECK(m.vendor == vendor_of[m.source]);
        targets[m.source].insert(m.target);
    }
    CHECK(targets.size() == 30);
    for (const auto& [src, t] : targets) CHECK(t.size() == 5);

    const auto again = plan_mixes(cohort, 5, 99);
    REQUIRE(again.size() == plan.size());
    for (std::size_t i = 0; i < plan.size(); ++i) {
        CHECK(again[i].source == plan[i].source);
        CHECK(again[i].target == plan[i].target);
    }
    const auto other_seed = plan_mixes(cohort, 5, 100);
    bool differs = false;
    for (std::size_t i = 0; i < plan.size(); ++i) differs = differs || other_seed[i].target != plan[i].target;
    CHECK(differs);

    CHECK(plan_mixes(cohort, 0, 1).empty());
    const std::vector<CohortMember> tiny{{"a", Vendor::A}, {"b", Vendor::A}, {"c", Vendor::B1}, {"d", Vendor::B1}};
    CHECK(plan_mixes(tiny, 1, 3).size() == 4);
    testutil::check_error(ErrorKind::Configuration, [&] { plan_mixes(tiny, 2, 3); });
}

TEST_CASE("generate_mixes records the scale and spec round-trips through JSON") {
    const Grid g = cube(24);
    std::vector<AnnotatedCase> cases;
    cases.push_back({"c1", Vendor::A, ramp_volume(g, 1), box_mask(g, {4, 4, 4}, {13, 13, 13})});
    cases.push_back({"c2", Vendor::A, ramp_volume(g, 2), box_mask(g, {2, 2, 2}, {21, 21, 21})});
    const auto out = generate_mixes(cases, 1, 5);
    REQUIRE(out.size() == 2);
    for (const auto& s : out) {
        CHECK(s.spec.scale > 0.0);
        const MixSpec back = mix_spec_from_json(to_json(s.spec));
        CHECK(back.source == s.spec.source);
        CHECK(back.target == s.spec.target);
        CHECK(back.scale == s.spec.scale);
        CHECK(back.vendor == Vendor::A);
    }
    CHECK(out[0].spec.case_id() == "c1__mix__c2");
    CHECK(out[0].spec.scale == 2.0);
    CHECK(out[1].spec.scale == 0.5);
}
