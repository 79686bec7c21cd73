#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "hepar/metrics.hpp"
#include "hepar/rng.hpp"
#include "test_util.hpp"

using namespace hepar;

namespace {

Grid grid_of(Index3 dims, Vec3 spacing = {1, 1, 1}) {
    Grid g;
    g.dims = dims;
    g.spacing = spacing;
    return g;
}

LabelMask box_mask(Index3 dims, Index3 lo, Index3 hi) {
    LabelMask m(grid_of(dims));
    for (int k = lo[2]; k <= hi[2]; ++k)
        for (int j = lo[1]; j <= hi[1]; ++j)
            for (int i = lo[0]; i <= hi[0]; ++i) m(i, j, k) = 1;
    return m;
}

// Union of a few random boxes plus scattered voxels; never empty.
LabelMask random_mask(Rng& rng, const Grid& g) {
    LabelMask m(g);
    const auto d = g.dims;
    const int boxes = 1 + int(rng.index(3));
    for (int b = 0; b < boxes; ++b) {
        Index3 lo, hi;
        for (int a = 0; a < 3; ++a) {
            lo[a] = int(rng.index(std::uint64_t(d[a])));
            hi[a] = lo[a] + int(rng.index(std::uint64_t(d[a] - lo[a])));
        }
        for (int k = lo[2]; k <= hi[2]; ++k)
            for (int j = lo[1]; j <= hi[1]; ++j)
                for (int i = lo[0]; i <= hi[0]; ++i) m(i, j, k) = 1;
    }
    const int specks = int(rng.index(6));
    for (int s = 0; s < specks; ++s) m[rng.index(m.size())] = 1;
    return m;
}

bool exposed(const LabelMask& m, int i, int j, int k) {
    const int off[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    for (const auto& o : off) {
        const int a = i + o[0], b = j + o[1], c = k + o[2];
        if (!m.grid().contains(a, b, c) || !m(a, b, c)) return true;
    }
    return false;
}

std::vector<Vec3> surface_points(const LabelMask& m) {
    std::vector<Vec3> p;
    const auto d = m.dims();
    const Vec3 h = m.grid().spacing;
    for (int k = 0; k < d[2]; ++k)
        for (int j = 0; j < d[1]; ++j)
            for (int i = 0; i < d[0]; ++i)
                if (m(i, j, k) && exposed(m, i, j, k)) p.push_back({i * h[0], j * h[1], k * h[2]});
    return p;
}

std::vector<double> all_pairs_directed(const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
    std::vector<double> out;
    for (const auto& p : from) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : to) {
            const double dx = p[0] - q[0], dy = p[1] - q[1], dz = p[2] - q[2];
            best = std::min(best, dx * dx + dy * dy + dz * dz);
        }
        out.push_back(std::sqrt(best));
    }
    return out;
}

double p95(std::vector<double> x) {
    std::sort(x.begin(), x.end());
    const double pos = 0.95 * double(x.size() - 1);
    const std::size_t lo = std::size_t(pos);
    if (lo + 1 >= x.size()) return x.back();
    return x[lo] + (pos - double(lo)) * (x[lo + 1] - x[lo]);
}

HausdorffResult brute_hausdorff(const LabelMask& a, const LabelMask& b) {
    const auto sa = surface_points(a), sb = surface_points(b);
    const auto ab = all_pairs_directed(sa, sb), ba = all_pairs_directed(sb, sa);
    return {std::max(*std::max_element(ab.begin(), ab.end()), *std::max_element(ba.begin(), ba.end())),
            std::max(p95(ab), p95(ba))};
}

double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
    double wins = 0.0, pairs = 0.0;
    for (std::size_t p = 0; p < s.size(); ++p)
        for (std::size_t n = 0; n < s.size(); ++n)
            if (y[p] == 1 && y[n] == 0) {
                pairs += 1.0;
                wins += s[p] > s[n] ? 1.0 : s[p] == s[n] ? 0.5 : 0.0;
            }
    return wins / pairs;
}

VoxelVolume prob_volume(const Grid& g, float fill) { return VoxelVolume(g, fill); }

}  // namespace

TEST_CASE("dice examples") {
    const Index3 d{12, 12, 12};
    const auto a = box_mask(d, {0, 0, 0}, {4, 4, 3});  // 100 voxels
    CHECK(foreground_count(a) == 100);
    CHECK(dice(a, a) == 1.0);
    CHECK(dice(a, box_mask(d, {6, 6, 6}, {10, 10, 9})) == 0.0);
    const auto b = box_mask(d, {0, 0, 2}, {4, 4, 5});  // 100 voxels, 50 shared
    CHECK(dice(a, b) == 0.5);
    CHECK(dice(LabelMask(grid_of(d)), LabelMask(grid_of(d))) == 1.0);
    testutil::check_error(ErrorKind::Contract, [&] { (void)dice(a, LabelMask(grid_of({12, 12, 11}))); });
}

TEST_CASE("dice is symmetric and equals 1 only for identical masks") {
    Rng rng(4);
    for (int t = 0; t < 200; ++t) {
        const Grid g = grid_of({6, 5, 4});
        const auto a = random_mask(rng, g);
        auto b = a;
        if (t % 2) b[rng.index(b.size())] ^= 1;
        CHECK(dice(a, b) == dice(b, a));
        CHECK((dice(a, b) == 1.0) == (a == b));
        CHECK(dice(a, b) >= 0.0);
        CHECK(dice(a, b) <= 1.0);
    }
}

TEST_CASE("surface voxels use 6-neighbour exposure") {
    auto m = box_mask({5, 5, 5}, {1, 1, 1}, {3, 3, 3});
    const auto s = surface_voxels(m);
    CHECK(foreground_count(s) == 26);
    CHECK(s(2, 2, 2) == 0);
    const auto full = surface_voxels(box_mask({3, 3, 3}, {0, 0, 0}, {2, 2, 2}));
    CHECK(full(1, 1, 1) == 0);
    CHECK(full(0, 1, 1) == 1);
}

TEST_CASE("distance transform matches brute force") {
    Rng rng(8);
    for (int t = 0; t < 40; ++t) {
        const Index3 d{1 + int(rng.index(10)), 1 + int(rng.index(10)), 1 + int(rng.index(10))};
        const Vec3 h = t % 2 ? Vec3{1, 1, 1} : Vec3{rng.uniform(0.5, 2), rng.uniform(0.5, 2), rng.uniform(0.5, 2)};
        LabelMask seeds(grid_of(d, h));
        const int count = 1 + int(rng.index(4));
        for (int s = 0; s < count; ++s) seeds[rng.index(seeds.size())] = 1;
        const auto dt = distance_transform(seeds);
        std::vector<Vec3> pts;
        for (int k = 0; k < d[2]; ++k)
            for (int j = 0; j < d[1]; ++j)
                for (int i = 0; i < d[0]; ++i)
                    if (seeds(i, j, k)) pts.push_back({i * h[0], j * h[1], k * h[2]});
        for (int k = 0; k < d[2]; ++k)
            for (int j = 0; j < d[1]; ++j)
                for (int i = 0; i < d[0]; ++i) {
                    const auto ref = all_pairs_directed({{i * h[0], j * h[1], k * h[2]}}, pts)[0];
                    REQUIRE(dt[seeds.grid().offset(i, j, k)] == ref);
                }
    }
    const auto empty = distance_transform(LabelMask(grid_of({3, 3, 3})));
    CHECK(std::isinf(empty[0]));
}

TEST_CASE("hausdorff examples") {
    const Index3 d{20, 14, 14};
    const auto a = box_mask(d, {2, 2, 2}, {11, 11, 11});
    const auto same = hausdorff(a, a);
    CHECK(same.hd_mm == 0.0);
    CHECK(same.hd95_mm == 0.0);

    const auto shifted = box_mask(d, {5, 2, 2}, {14, 11, 11});
    const auto h = hausdorff(a, shifted);
    CHECK(h.hd_mm == 3.0);
    CHECK(h.hd_mm == brute_hausdorff(a, shifted).hd_mm);

    const Index3 big{22, 22, 22};
    const auto outer = box_mask(big, {1, 1, 1}, {20, 20, 20});
    const auto inner = box_mask(big, {6, 6, 6}, {15, 15, 15});
    const auto hc = hausdorff(inner, outer), ref = brute_hausdorff(inner, outer);
    CHECK(hc.hd_mm == ref.hd_mm);
    CHECK(hc.hd95_mm == ref.hd95_mm);
    CHECK(hc.hd_mm == doctest::Approx(5.0 * std::sqrt(3.0)));  // outer corner to inner corner

    testutil::check_error(ErrorKind::UndefinedMetric, [&] { (void)hausdorff(a, LabelMask(grid_of(d))); });
    testutil::check_error(ErrorKind::Contract, [&] { (void)hausdorff(a, outer); });
}

TEST_CASE("hausdorff equals the all-pairs oracle on random masks") {
    Rng rng(2024);
    for (int t = 0; t < 100; ++t) {
        const Index3 d{1 + int(rng.index(16)), 1 + int(rng.index(16)), 1 + int(rng.index(16))};
        const Vec3 h = t % 3 == 2 ? Vec3{rng.uniform(0.5, 2), rng.uniform(0.5, 2), rng.uniform(0.5, 2)} : Vec3{1, 1, 1};
        const Grid g = grid_of(d, h);
        const auto a = random_mask(rng, g), b = random_mask(rng, g);
        const auto got = hausdorff(a, b), ref = brute_hausdorff(a, b);
        INFO("pair " << t);
        CHECK(got.hd_mm == ref.hd_mm);
        CHECK(got.hd95_mm == ref.hd95_mm);
        const auto rev = hausdorff(b, a);
        CHECK(rev.hd_mm == got.hd_mm);
        CHECK(rev.hd95_mm == got.hd95_mm);
        CHECK(got.hd95_mm <= got.hd_mm);
        CHECK(got.hd95_mm >= 0.0);
    }
}

TEST_CASE("roc auc examples") {
    const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
    const std::vector<int> y{0, 0, 1, 1};
    CHECK(roc_auc(s, y) == 0.75);
    CHECK(roc_auc(std::vector<double>{1, 2, 3, 4}, y) == 1.0);
    CHECK(roc_auc(std::vector<double>{4, 3, 2, 1}, y) == 0.0);
    CHECK(roc_auc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, y) == 0.5);
    testutil::check_error(ErrorKind::UndefinedMetric,
                          [] { (void)roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}); });
    testutil::check_error(ErrorKind::Contract,
                          [] { (void)roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 2}); });
}

TEST_CASE("roc auc agrees with pairwise counting and ignores monotone transforms") {
    Rng rng(6);
    for (int t = 0; t < 200; ++t) {
        const int n = 2 + int(rng.index(40));
        std::vector<double> s(n);
        std::vector<int> y(n);
        for (int i = 0; i < n; ++i) {
            s[i] = double(rng.index(12)) / 8.0;  // coarse grid forces ties
            y[i] = int(rng.index(2));
        }
        y[0] = 0;
        y[1] = 1;
        const double auc = roc_auc(s, y);
        CHECK(auc == doctest::Approx(pairwise_auc(s, y)).epsilon(1e-15));
        std::vector<double> warped(n);
        for (int i = 0; i < n; ++i) warped[i] = std::exp(3.0 * s[i]) - 7.0;
        CHECK(roc_auc(warped, y) == auc);
        CHECK(auc >= 0.0);
        CHECK(auc <= 1.0);
    }
}

TEST_CASE("accuracy examples") {
    const std::vector<int> y{1, 1, 1, 1, 1, 0, 0, 0, 0, 0};
    CHECK(accuracy(std::vector<double>{.9, .8, .7, .6, .55, .1, .2, .3, .4, .45}, y) == 1.0);
    CHECK(accuracy(std::vector<double>{.1, .2, .3, .4, .45, .9, .8, .7, .6, .55}, y) == 0.0);
    CHECK(accuracy(std::vector<double>{.9, .8, .7, .6, .2, .1, .2, .3, .9, .8}, y) == 0.7);
    CHECK(accuracy(std::vector<double>{0.5}, std::vector<int>{1}) == 1.0);
    CHECK(accuracy(std::vector<double>{0.3}, std::vector<int>{1}, 0.3) == 1.0);
    testutil::check_error(ErrorKind::Contract, [] { (void)accuracy({}, {}); });
}

TEST_CASE("dice-ce loss closed forms") {
    const Grid g = grid_of({10, 8, 6});
    const auto truth = box_mask({10, 8, 6}, {2, 2, 1}, {6, 5, 4});
    const double n = double(foreground_count(truth)), m = double(truth.size());

    VoxelVolume perfect(g, 0.0f);
    for (std::size_t v = 0; v < truth.size(); ++v) perfect[v] = truth[v];
    const double lp = dice_ce_loss(perfect, truth);
    CHECK(lp == doctest::Approx(-(2 * n + 1) / (2 * n + 1 + 1e-8)).epsilon(1e-14));
    CHECK(std::abs(lp + 1.0) <= 1e-6);

    const LabelMask none(g);
    CHECK(dice_ce_loss(prob_volume(g, 0.0f), none) == doctest::Approx(-1.0 / (1.0 + 1e-8)).epsilon(1e-14));

    const double expected = -(n + 1) / (0.5 * m + n + 1 + 1e-8) + n * std::log(2.0);
    CHECK(std::abs(dice_ce_loss(prob_volume(g, 0.5f), truth) - expected) <= 1e-9);

    // zero probability on foreground hits the log clamp
    CHECK(dice_ce_loss(prob_volume(g, 0.0f), truth) ==
          doctest::Approx(-1.0 / (n + 1 + 1e-8) - n * std::log(1e-12)));

    DiceCeWeights w;
    w.w_dc = 2.0;
    w.w_ce = 0.0;
    CHECK(dice_ce_loss(perfect, truth, w) == doctest::Approx(2.0 * lp));

    auto bad = prob_volume(g, 0.5f);
    bad[3] = 1.5f;
    testutil::check_error(ErrorKind::Contract, [&] { (void)dice_ce_loss(bad, truth); });
    bad[3] = -0.1f;
    testutil::check_error(ErrorKind::Contract, [&] { (void)dice_ce_loss(bad, truth); });
    testutil::check_error(ErrorKind::Contract, [&] { (void)dice_ce_loss(prob_volume(grid_of({3, 3, 3}), 0.f), truth); });
}

TEST_CASE("dice-ce loss decreases along the path toward the truth") {
    Rng rng(31);
    for (int t = 0; t < 100; ++t) {
        const Grid g = grid_of({2 + int(rng.index(7)), 2 + int(rng.index(7)), 2 + int(rng.index(7))});
        const auto truth = random_mask(rng, g);
        VoxelVolume p0(g);
        for (std::size_t v = 0; v < p0.size(); ++v) p0[v] = float(rng.uniform());
        double previous = dice_ce_loss(p0, truth);
        for (int s = 1; s <= 20; ++s) {
            const double step = s / 20.0;
            VoxelVolume p(g);
            for (std::size_t v = 0; v < p.size(); ++v)
                p[v] = float(p0[v] + step * (double(truth[v]) - p0[v]));
            const double loss = dice_ce_loss(p, truth);
            INFO("instance " << t << " step " << s);
            CHECK(loss < previous);
            previous = loss;
        }
    }
}

TEST_CASE("evaluation report") {
    const Index3 d{12, 12, 12};
    const auto truth = box_mask(d, {2, 2, 2}, {8, 8, 8});
    const auto pred = box_mask(d, {3, 2, 2}, {9, 8, 8});
    EvalReport r;
    r.segmentation.push_back(evaluate_segmentation("c1", "GED4", pred, truth));
    r.segmentation.push_back(evaluate_segmentation("c2", "GED4", truth, truth));
    r.segmentation.push_back(evaluate_segmentation("c1", "T1WI", LabelMask(truth.grid()), truth));
    CHECK(r.segmentation[0].hausdorff_mm == 1.0);
    CHECK_FALSE(r.segmentation[2].hausdorff_mm.has_value());
    CHECK(r.segmentation[2].dice == 0.0);

    const auto summary = r.segmentation_summary();
    REQUIRE(summary.size() == 3);
    CHECK(summary[0].group == "GED4");
    CHECK(summary[0].n == 2);
    CHECK(summary[0].dice_mean == doctest::Approx((dice(pred, truth) + 1.0) / 2));
    CHECK(summary[0].hausdorff_mean_mm == doctest::Approx(0.5));
    CHECK(summary[1].group == "T1WI");
    CHECK(summary[1].n_distance == 0);
    CHECK(summary[2].group == "all");
    CHECK(summary[2].n == 3);

    const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
    const std::vector<int> y{0, 0, 1, 1};
    r.classification.push_back(evaluate_classification("cirrhosis", s, y));
    CHECK(r.classification[0].auc == 0.75);
    CHECK(r.classification[0].acc == 0.75);
    CHECK(r.classification[0].n_positive == 2);

    const auto j = to_json(r);
    CHECK(j["segmentation"]["cases"].size() == 3);
    CHECK(j["segmentation"]["cases"][2]["hausdorff_max_mm"].is_null());
    CHECK(j["classification"][0]["auc"] == 0.75);
    std::ostringstream table;
    write_table(table, r);
    CHECK(table.str().find("cirrhosis") != std::string::npos);
    CHECK(table.str().find("all") != std::string::npos);
}
