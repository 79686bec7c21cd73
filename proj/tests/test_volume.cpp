#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "hepar/manifest.hpp"
#include "hepar/nifti.hpp"
#include "hepar/rng.hpp"
#include "hepar/volume.hpp"
#include "test_util.hpp"

using namespace hepar;
namespace fs = std::filesystem;

namespace {

std::vector<unsigned char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void patch(const fs::path& p, std::size_t offset, const void* bytes, std::size_t n) {
    std::fstream f(p, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(static_cast<std::streamoff>(offset));
    f.write(static_cast<const char*>(bytes), static_cast<std::streamsize>(n));
}

}  // namespace

TEST_CASE("nifti float32 round trip is bitwise") {
    testutil::TempDir dir;
    Grid g;
    g.dims = {4, 4, 4};
    g.spacing = {0.7, 1.25, 3.0};
    g.origin = {-10.5, 2.0, 7.25};
    Rng rng(11);
    VoxelVolume v(g);
    for (auto& x : v.data()) x = static_cast<float>(rng.normal() * 1000.0);

    for (const char* name : {"a.nii", "a.nii.gz"}) {
        const auto path = dir.path() / name;
        nifti::write(v, path);
        const VoxelVolume back = nifti::read_volume(path);
        CHECK(back.dims() == v.dims());
        for (int a = 0; a < 3; ++a) {
            CHECK(back.grid().spacing[a] == doctest::Approx(g.spacing[a]).epsilon(1e-5));
            CHECK(back.grid().origin[a] == doctest::Approx(g.origin[a]).epsilon(1e-5));
        }
        CHECK(std::equal(v.data().begin(), v.data().end(), back.data().begin()));
    }
}

TEST_CASE("nifti integer datatypes round trip exactly") {
    testutil::TempDir dir;
    Grid g;
    g.dims = {5, 3, 2};
    struct Case {
        nifti::DataType type;
        double lo, hi;
    };
    const Case cases[] = {{nifti::DataType::UInt8, 0, 255},
                          {nifti::DataType::Int16, -32768, 32767},
                          {nifti::DataType::UInt16, 0, 65535},
                          {nifti::DataType::Int32, -2e6, 2e6},
                          {nifti::DataType::Float64, -1e6, 1e6}};
    Rng rng(3);
    for (const auto& c : cases) {
        VoxelVolume v(g);
        for (auto& x : v.data()) x = static_cast<float>(std::floor(rng.uniform(c.lo, c.hi + 1)));
        v[0] = static_cast<float>(c.lo);
        v[1] = static_cast<float>(c.hi);
        const auto path = dir.path() / "t.nii";
        nifti::write(v, path, c.type);
        const auto back = nifti::read_volume(path);
        CHECK(std::equal(v.data().begin(), v.data().end(), back.data().begin()));
    }
}

TEST_CASE("nifti mask with one foreground voxel has one nonzero payload byte") {
    testutil::TempDir dir;
    Grid g;
    g.dims = {6, 5, 4};
    LabelMask m(g, 0);
    m(2, 3, 1) = 1;
    const auto path = dir.path() / "m.nii";
    nifti::write(m, path);
    const auto bytes = slurp(path);
    REQUIRE(bytes.size() == 352 + g.voxel_count());
    CHECK(std::count_if(bytes.begin() + 352, bytes.end(), [](unsigned char b) { return b != 0; }) == 1);
    CHECK(nifti::read_mask(path) == m);
}

TEST_CASE("nifti uint8 write of a normalized volume keeps values in byte range") {
    testutil::TempDir dir;
    Grid g;
    g.dims = {8, 8, 8};
    Rng rng(5);
    VoxelVolume v(g);
    for (auto& x : v.data()) x = static_cast<float>(rng.normal() * 40.0 + 300.0);
    const auto norm = normalize_u8(v);
    const auto path = dir.path() / "n.nii";
    nifti::write(norm, path, nifti::DataType::UInt8);
    const auto bytes = slurp(path);
    REQUIRE(bytes.size() == 352 + g.voxel_count());
    bool saw0 = false, saw255 = false;
    for (std::size_t i = 0; i < g.voxel_count(); ++i) {
        CHECK(static_cast<float>(bytes[352 + i]) == norm[i]);
        saw0 |= bytes[352 + i] == 0;
        saw255 |= bytes[352 + i] == 255;
    }
    CHECK(saw0);
    CHECK(saw255);
}

TEST_CASE("nifti rejects detached magic, bad datatypes and truncation") {
    testutil::TempDir dir;
    Grid g;
    g.dims = {4, 4, 4};
    VoxelVolume v(g, 1.0f);
    const auto path = dir.path() / "x.nii";

    nifti::write(v, path);
    patch(path, 344, "ni1\0", 4);
    testutil::check_error(ErrorKind::Format, [&] { (void)nifti::read_volume(path); });

    nifti::write(v, path);
    const std::int16_t rgb = 128;
    patch(path, 70, &rgb, 2);
    testutil::check_error(ErrorKind::Unsupported, [&] { (void)nifti::read_volume(path); });

    nifti::write(v, path);
    fs::resize_file(path, 352 + 100);
    testutil::check_error(ErrorKind::Corruption, [&] { (void)nifti::read_volume(path); });

    testutil::check_error(ErrorKind::Io, [&] { (void)nifti::read_volume(dir.path() / "missing.nii"); });
}

TEST_CASE("nifti reader agrees with nibabel on a scaled, rotated int16 file") {
    const fs::path data = HEPAR_TEST_DATA;
    std::ifstream in(data / "nibabel_int16_scaled.json");
    const auto ref = nlohmann::json::parse(in);
    const VoxelVolume v = nifti::read_volume(data / "nibabel_int16_scaled.nii.gz");

    for (int a = 0; a < 3; ++a) {
        CHECK(v.dims()[a] == ref["dims"][a].get<int>());
        CHECK(v.grid().spacing[a] == doctest::Approx(ref["zooms"][a].get<double>()).epsilon(1e-6));
    }
    const auto& affine = ref["affine"];
    for (int k : {0, 2})
        for (int j : {0, 3})
            for (int i : {0, 4}) {
                const Vec3 w = v.grid().world(i, j, k);
                for (int r = 0; r < 3; ++r) {
                    const double expect = affine[r][0].get<double>() * i + affine[r][1].get<double>() * j +
                                          affine[r][2].get<double>() * k + affine[r][3].get<double>();
                    CHECK(w[r] == doctest::Approx(expect).epsilon(1e-6));
                }
            }
    const auto& values = ref["values_x_fastest"];
    REQUIRE(values.size() == v.size());
    for (std::size_t n = 0; n < v.size(); ++n) CHECK(v[n] == static_cast<float>(values[n].get<double>()));
}

TEST_CASE("normalize_u8") {
    Grid g;
    g.dims = {101, 1, 1};

    SUBCASE("constant volume maps to zero") {
        VoxelVolume v(g, 42.0f);
        const auto n = normalize_u8(v);
        CHECK(std::all_of(n.data().begin(), n.data().end(), [](float x) { return x == 0.0f; }));
    }
    SUBCASE("two values map to the range ends") {
        Grid g2;
        g2.dims = {2, 1, 1};
        VoxelVolume v(g2, std::vector<float>{10.0f, 20.0f});
        const auto n = normalize_u8(v);
        CHECK(n[0] == 0.0f);
        CHECK(n[1] == 255.0f);
    }
    SUBCASE("ramp matches the exact rational rounding") {
        VoxelVolume v(g);
        for (int k = 0; k <= 100; ++k) v[k] = static_cast<float>(k);
        const auto n = normalize_u8(v);
        for (int k = 0; k <= 100; ++k) {
            // round-half-up of 255k/100 in integer arithmetic
            const int expect = (2 * 255 * k + 100) / 200;
            CHECK(n[k] == static_cast<float>(expect));
        }
    }
    SUBCASE("idempotent") {
        Grid g3;
        g3.dims = {16, 16, 16};
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            Rng rng(seed);
            VoxelVolume v(g3);
            for (auto& x : v.data()) x = static_cast<float>(rng.normal() * 123.0);
            const auto once = normalize_u8(v);
            CHECK(normalize_u8(once) == once);
        }
    }
}

TEST_CASE("resample identity, one-voxel shift and affine exactness") {
    Grid g;
    g.dims = {6, 5, 4};
    g.spacing = {1.5, 2.0, 1.0};
    g.origin = {3.0, -2.0, 1.0};
    Rng rng(9);
    VoxelVolume v(g);
    for (auto& x : v.data()) x = static_cast<float>(rng.uniform(-5, 5));
    const auto id = SimilarityTransform3D::identity();

    CHECK(resample(v, g, id, Interpolation::Trilinear) == v);
    CHECK(resample(v, g, id, Interpolation::Nearest) == v);

    Grid shifted = g;
    shifted.origin[0] += g.spacing[0];
    const auto s = resample(v, shifted, id, Interpolation::Trilinear);
    for (int k = 0; k < 4; ++k)
        for (int j = 0; j < 5; ++j) {
            for (int i = 0; i < 5; ++i) CHECK(s(i, j, k) == v(i + 1, j, k));
            CHECK(s(5, j, k) == 0.0f);
        }

    // f = 2x + 3y + 5z in world mm, sampled on a rotated grid at half-voxel offsets.
    Grid rg;
    rg.dims = {12, 10, 9};
    rg.spacing = {1.0, 1.5, 2.0};
    rg.origin = {-4.0, 5.0, 2.0};
    rg.direction = euler_zyx({0.3, -0.2, 0.5});
    VoxelVolume field(rg);
    auto f = [](const Vec3& p) { return 2 * p[0] + 3 * p[1] + 5 * p[2]; };
    for (int k = 0; k < rg.dims[2]; ++k)
        for (int j = 0; j < rg.dims[1]; ++j)
            for (int i = 0; i < rg.dims[0]; ++i) field(i, j, k) = static_cast<float>(f(rg.world(i, j, k)));
    Grid half = rg;
    half.dims = {10, 8, 7};
    half.origin = rg.world(Vec3{0.5, 0.5, 0.5});
    const auto out = resample(field, half, id, Interpolation::Trilinear);
    for (int k = 0; k < half.dims[2]; ++k)
        for (int j = 0; j < half.dims[1]; ++j)
            for (int i = 0; i < half.dims[0]; ++i)
                CHECK(out(i, j, k) == doctest::Approx(f(half.world(i, j, k))).epsilon(1e-5));
}

TEST_CASE("resample rejects non-positive scale") {
    Grid g;
    g.dims = {3, 3, 3};
    VoxelVolume v(g, 1.0f);
    const SimilarityTransform3D bad({0, 0, 0}, {0, 0, 0}, 0.0, {0, 0, 0});
    testutil::check_error(ErrorKind::InvalidTransform, [&] { (void)resample(v, g, bad, Interpolation::Trilinear); });
}

TEST_CASE("nearest-neighbour mask resampling stays binary") {
    Grid g;
    g.dims = {20, 20, 20};
    Rng rng(4);
    for (int trial = 0; trial < 5; ++trial) {
        LabelMask m(g, 0);
        for (auto& x : m.data()) x = rng.uniform() < 0.3 ? 1 : 0;
        const SimilarityTransform3D t({rng.uniform(-0.3, 0.3), 0.1, rng.uniform(-0.3, 0.3)},
                                      {rng.uniform(-3, 3), 1.0, 0.5}, rng.uniform(0.8, 1.2), g.center());
        const LabelMask r = resample(m, g, t);
        CHECK(std::all_of(r.data().begin(), r.data().end(), [](auto x) { return x <= 1; }));
    }
}

TEST_CASE("bounding box") {
    Grid g;
    g.dims = {8, 6, 12};
    LabelMask m(g, 0);
    CHECK_FALSE(bounding_box(m).has_value());
    m(2, 3, 4) = 1;
    CHECK(*bounding_box(m) == VoxelBox{{2, 3, 4}, {2, 3, 4}});
    LabelMask u(g, 0);
    u(1, 1, 1) = 1;
    u(5, 2, 9) = 1;
    CHECK(*bounding_box(u) == VoxelBox{{1, 1, 1}, {5, 2, 9}});

    // Property: the box holds every foreground voxel and each face touches one.
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        LabelMask r(g, 0);
        const int n = 1 + static_cast<int>(rng.index(10));
        for (int s = 0; s < n; ++s)
            r(static_cast<int>(rng.index(8)), static_cast<int>(rng.index(6)), static_cast<int>(rng.index(12))) = 1;
        const auto box = *bounding_box(r);
        std::array<bool, 6> touched{};
        for (int k = 0; k < 12; ++k)
            for (int j = 0; j < 6; ++j)
                for (int i = 0; i < 8; ++i) {
                    if (!r(i, j, k)) continue;
                    const Index3 p{i, j, k};
                    for (int a = 0; a < 3; ++a) {
                        CHECK(p[a] >= box.lo[a]);
                        CHECK(p[a] <= box.hi[a]);
                        touched[2 * a] = touched[2 * a] || p[a] == box.lo[a];
                        touched[2 * a + 1] = touched[2 * a + 1] || p[a] == box.hi[a];
                    }
                }
        CHECK(std::all_of(touched.begin(), touched.end(), [](bool b) { return b; }));
    }
}

TEST_CASE("manifest loading") {
    SUBCASE("table-sized cohort") {
        nlohmann::json doc = nlohmann::json::array();
        const std::pair<const char*, int> vendors[] = {{"A", 130}, {"B1", 170}, {"B2", 60}};
        for (const auto& [vendor, n] : vendors)
            for (int i = 0; i < n; ++i)
                doc.push_back({{"case_id", std::string(vendor) + "_" + std::to_string(i)},
                               {"vendor", vendor},
                               {"modality", "GED4"},
                               {"volume", "v.nii.gz"},
                               {"stage", "S" + std::to_string(1 + i % 4)}});
        const auto m = parse_manifest(doc.dump(), "/data");
        CHECK(m.case_ids().size() == 360);
        CHECK(m.entries().front().volume == fs::path("/data/v.nii.gz"));
    }
    SUBCASE("unknown stage") {
        const char* text = R"([{"case_id":"c","vendor":"A","modality":"GED4","volume":"v.nii","stage":"S5"}])";
        testutil::check_error(ErrorKind::Validation, [&] { (void)parse_manifest(text, "."); });
    }
    SUBCASE("duplicate case/modality") {
        const char* text = R"([{"case_id":"c","vendor":"A","modality":"GED4","volume":"v.nii"},
                               {"case_id":"c","vendor":"A","modality":"GED4","volume":"w.nii"}])";
        testutil::check_error(ErrorKind::Validation, [&] { (void)parse_manifest(text, "."); });
    }
    SUBCASE("empty manifest") { CHECK(parse_manifest("[]", ".").empty()); }
    SUBCASE("mask grid must match its volume") {
        testutil::TempDir dir;
        Grid g;
        g.dims = {4, 4, 4};
        nifti::write(VoxelVolume(g, 1.0f), dir.path() / "v.nii");
        Grid g2 = g;
        g2.dims = {4, 4, 5};
        nifti::write(LabelMask(g2, 0), dir.path() / "m.nii");
        std::ofstream(dir.path() / "manifest.json")
            << R"([{"case_id":"c","vendor":"B1","modality":"T2WI","volume":"v.nii","mask":"m.nii"}])";
        CHECK_NOTHROW((void)load_manifest(dir.path() / "manifest.json"));
        testutil::check_error(ErrorKind::Validation, [&] { (void)load_manifest(dir.path() / "manifest.json", true); });
    }
}
