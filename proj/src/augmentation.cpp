#include "hepar/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "hepar/error.hpp"
#include "hepar/rng.hpp"
#include "hepar/simd/kernels.hpp"
#include "hepar/volume.hpp"

namespace hepar {

namespace {

double median_of(std::vector<float>& values) {
    if (values.empty()) return 0.0;
    const std::size_t n = values.size();
    const std::size_t mid = n / 2;
    std::nth_element(values.begin(), values.begin() + mid, values.end());
    const double upper = values[mid];
    if (n % 2 == 1) return upper;
    const double lower = *std::max_element(values.begin(), values.begin() + mid);
    return 0.5 * (lower + upper);
}

Vec3 box_center(const VoxelBox& b) {
    return {0.5 * (b.lo[0] + b.hi[0]), 0.5 * (b.lo[1] + b.hi[1]), 0.5 * (b.lo[2] + b.hi[2])};
}

}  // namespace

nlohmann::json to_json(const MixSpec& m) {
    return {{"source", m.source},
            {"target", m.target},
            {"vendor", std::string(to_string(m.vendor))},
            {"scale", m.scale},
            {"seed", m.seed}};
}

MixSpec mix_spec_from_json(const nlohmann::json& j) {
    try {
        MixSpec m;
        m.source = j.at("source").get<std::string>();
        m.target = j.at("target").get<std::string>();
        m.vendor = parse_vendor(j.at("vendor").get<std::string>());
        m.scale = j.at("scale").get<double>();
        m.seed = j.at("seed").get<std::uint64_t>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Format, std::string("malformed mix spec: ") + e.what());
    }
}

MixResult instance_mix(const VoxelVolume& source_volume, const LabelMask& source_mask,
                       const VoxelVolume& target_volume, const LabelMask& target_mask) {
    require(source_volume.grid().same_as(source_mask.grid(), 1e-4) &&
                target_volume.grid().same_as(target_mask.grid(), 1e-4),
            ErrorKind::Contract, "instance_mix: each mask must share its volume's grid");
    const auto sbox = bounding_box(source_mask);
    const auto tbox = bounding_box(target_mask);
    require(sbox.has_value(), ErrorKind::Degenerate, "instance_mix: empty source mask");
    require(tbox.has_value(), ErrorKind::Degenerate, "instance_mix: empty target mask");

    const Grid& sg = source_volume.grid();
    const Grid& tg = target_volume.grid();
    double scale = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        const double se = (sbox->hi[a] - sbox->lo[a] + 1) * sg.spacing[a];
        const double te = (tbox->hi[a] - tbox->lo[a] + 1) * tg.spacing[a];
        scale = std::min(scale, te / se);
    }

    // Source index = cs + S_s^-1 D_s^T D_t S_t (ijk - ct) / scale, axis frames
    // of the two grids aligned.
    const Mat3 axes = transpose(sg.direction) * tg.direction;
    Mat3 a{};
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) a[r][c] = axes[r][c] * tg.spacing[c] / (sg.spacing[r] * scale);
    const Vec3 cs = box_center(*sbox);
    const Vec3 ct = box_center(*tbox);

    MixResult out{target_volume, LabelMask(tg, 0), scale};
    const LabelMask ring_outer = dilate(target_mask, 3);
    std::vector<float> ring;
    for (std::size_t i = 0; i < target_mask.size(); ++i)
        if (ring_outer[i] && !target_mask[i]) ring.push_back(target_volume[i]);
    const auto fill = static_cast<float>(median_of(ring));

    const auto& kernels = simd::active_kernels();
    const simd::RowSampler sampler{source_volume.data().data(), sg.dims};
    const int width = tbox->hi[0] - tbox->lo[0] + 1;
    std::vector<float> row(width);
    std::vector<std::uint8_t> valid(width);
    const std::array<float, 3> step{static_cast<float>(a[0][0]), static_cast<float>(a[1][0]),
                                    static_cast<float>(a[2][0])};
    for (int k = tbox->lo[2]; k <= tbox->hi[2]; ++k)
        for (int j = tbox->lo[1]; j <= tbox->hi[1]; ++j) {
            const Vec3 d0{tbox->lo[0] - ct[0], j - ct[1], k - ct[2]};
            const Vec3 q0 = cs + a * d0;
            kernels.sample_row(sampler, {static_cast<float>(q0[0]), static_cast<float>(q0[1]), static_cast<float>(q0[2])},
                               step, width, row.data(), valid.data());
            for (int x = 0; x < width; ++x) {
                const int i = tbox->lo[0] + x;
                const Vec3 q = cs + a * Vec3{d0[0] + x, d0[1], d0[2]};
                const int si = static_cast<int>(std::round(q[0]));
                const int sj = static_cast<int>(std::round(q[1]));
                const int sk = static_cast<int>(std::round(q[2]));
                const bool pasted = sg.contains(si, sj, sk) && source_mask(si, sj, sk);
                if (pasted) {
                    out.mask(i, j, k) = 1;
                    // Label nearest, intensity trilinear; the trilinear sample
                    // can miss only at the last half voxel of the grid.
                    out.volume(i, j, k) = valid[x] ? row[x] : source_volume(si, sj, sk);
                } else if (target_mask(i, j, k)) {
                    out.volume(i, j, k) = fill;
                }
            }
        }
    return out;
}

std::vector<MixSpec> plan_mixes(const std::vector<CohortMember>& cohort, int per_source, std::uint64_t seed) {
    require(per_source >= 0, ErrorKind::Configuration, "per_source must be nonnegative");
    std::map<Vendor, std::vector<std::string>> groups;
    for (const auto& c : cohort) groups[c.vendor].push_back(c.case_id);
    for (auto& [vendor, ids] : groups) {
        std::sort(ids.begin(), ids.end());
        require(std::adjacent_find(ids.begin(), ids.end()) == ids.end(), ErrorKind::Validation,
                "duplicate case id in augmentation cohort");
        if (per_source > 0)
            require(static_cast<int>(ids.size()) >= per_source + 1, ErrorKind::Configuration,
                    "vendor " + std::string(to_string(vendor)) + " has " + std::to_string(ids.size()) +
                        " annotated cases; per_source=" + std::to_string(per_source) + " needs at least " +
                        std::to_string(per_source + 1));
    }
    std::vector<MixSpec> plan;
    if (per_source == 0) return plan;
    Rng rng(seed);
    for (const auto& [vendor, ids] : groups) {
        for (const auto& source : ids) {
            std::vector<std::string> others;
            for (const auto& id : ids)
                if (id != source) others.push_back(id);
            rng.shuffle(others.begin(), others.end());
            for (int t = 0; t < per_source; ++t) plan.push_back({source, others[t], vendor, 0.0, seed});
        }
    }
    return plan;
}

std::vector<SyntheticCase> generate_mixes(const std::vector<AnnotatedCase>& annotated, int per_source,
                                          std::uint64_t seed) {
    std::vector<CohortMember> cohort;
    std::map<std::string, const AnnotatedCase*> by_id;
    for (const auto& c : annotated) {
        cohort.push_back({c.case_id, c.vendor});
        by_id[c.case_id] = &c;
    }
    std::vector<SyntheticCase> out;
    for (auto spec : plan_mixes(cohort, per_source, seed)) {
        const AnnotatedCase& s = *by_id.at(spec.source);
        const AnnotatedCase& t = *by_id.at(spec.target);
        MixResult mix = instance_mix(s.volume, s.mask, t.volume, t.mask);
        spec.scale = mix.scale;
        out.push_back({std::move(spec), std::move(mix.volume), std::move(mix.mask)});
    }
    return out;
}

}  // namespace hepar
