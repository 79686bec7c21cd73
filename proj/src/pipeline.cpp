#include "hepar/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

#include "csv.hpp"
#include "hepar/augmentation.hpp"
#include "hepar/error.hpp"
#include "hepar/nifti.hpp"
#include "hepar/phantom.hpp"
#include "hepar/rng.hpp"

namespace hepar {

namespace {

using nlohmann::json;

constexpr const char* kModelFormat = "hepar-staging-model";
constexpr int kModelVersion = 1;

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    return splitmix(splitmix(splitmix(seed) ^ a) ^ b);
}

// Runs f(i) for i in [0, n) on `jobs` threads; f reports its own errors.
template <class F>
void parallel_for(std::size_t n, int jobs, F&& f) {
    std::atomic<std::size_t> next{0};
    std::exception_ptr first;
    std::mutex m;
    const auto worker = [&] {
        for (std::size_t i; (i = next++) < n;) {
            try {
                f(i);
            } catch (...) {
                std::lock_guard lock(m);
                if (!first) first = std::current_exception();
            }
        }
    };
    const int threads = std::max(1, std::min<int>(jobs, int(n)));
    std::vector<std::thread> pool;
    for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (first) std::rethrow_exception(first);
}

void prepare_out_dir(const fs::path& dir, bool overwrite) {
    if (fs::exists(dir)) {
        require(fs::is_directory(dir), ErrorKind::Validation, "output path " + dir.string() + " is not a directory");
        require(overwrite || fs::is_empty(dir), ErrorKind::Validation,
                "output directory " + dir.string() + " is not empty; pass --overwrite to replace its files");
    }
    fs::create_directories(dir);
}

fs::path temp_sibling(const fs::path& path) { return path.parent_path() / (".tmp-" + path.filename().string()); }

void commit(const fs::path& tmp, const fs::path& path) {
    std::error_code ec;
    fs::rename(tmp, path, ec);
    require(!ec, ErrorKind::Io, "cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

template <class Img>
void write_image_atomic(const Img& img, const fs::path& path) {
    fs::create_directories(path.parent_path());
    const fs::path tmp = temp_sibling(path);
    nifti::write(img, tmp);
    commit(tmp, path);
}

void write_json_atomic(const fs::path& path, const json& j) { write_text_atomic(path, j.dump(2) + "\n"); }

void require_safe_id(const std::string& id) {
    require(!id.empty() && id != "." && id != ".." && id.find_first_of("/\\") == std::string::npos &&
                id.find('\0') == std::string::npos,
            ErrorKind::Validation, "case id '" + id + "' cannot be used as a directory name");
}

std::string rel(const fs::path& p, const fs::path& base) { return p.lexically_relative(base).generic_string(); }

std::string read_text(const fs::path& path, const std::string& what) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + what + " " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

json read_json(const fs::path& path, const std::string& what) {
    try {
        return json::parse(read_text(path, what));
    } catch (const json::parse_error& e) {
        fail(ErrorKind::Validation, what + " " + path.string() + " is not valid JSON: " + e.what());
    }
}

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", x);
    return buf;
}

void add_skip(std::vector<SkipRecord>& out, std::mutex& m, SkipRecord r) {
    std::lock_guard lock(m);
    out.push_back(std::move(r));
}

void sort_skips(std::vector<SkipRecord>& s) {
    std::sort(s.begin(), s.end(), [](const SkipRecord& a, const SkipRecord& b) {
        return std::tie(a.case_id, a.modality, a.reason) < std::tie(b.case_id, b.modality, b.reason);
    });
}

CommandReport finish(CommandReport r, const fs::path& out_dir) {
    sort_skips(r.skipped);
    write_json_atomic(out_dir / "report.json", to_json(r));
    return r;
}

IntensityCurve curve_for(Modality m) {
    switch (m) {
        case Modality::GED4:
        case Modality::GED3:
            return IntensityCurve::Identity;
        case Modality::T1WI:
        case Modality::GED1:
            return IntensityCurve::Gamma;
        case Modality::T2WI:
            return IntensityCurve::Inverted;
        case Modality::DWI:
        case Modality::GED2:
            return IntensityCurve::Sigmoid;
    }
    return IntensityCurve::Identity;
}

// Uniform in the ball of radius r.
Vec3 ball_sample(Rng& rng, double r) {
    for (;;) {
        const Vec3 v{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        if (dot(v, v) <= 1.0) return r * v;
    }
}

SimilarityTransform3D random_transform(Rng& rng, const CohortSpec& s) {
    const double max_rad = s.max_rotation_deg * std::numbers::pi / 180.0;
    for (;;) {
        const Vec3 angles{rng.uniform(-max_rad, max_rad), rng.uniform(-max_rad, max_rad),
                          rng.uniform(-max_rad, max_rad)};
        const Vec3 t = ball_sample(rng, s.max_translation_mm);
        const double scale = rng.uniform(s.min_scale, s.max_scale);
        SimilarityTransform3D tr(angles, t, scale, {0, 0, 0});
        if (rotation_angle_between(tr.rotation(), identity3()) <= max_rad) return tr;
    }
}

double row_group_mean(const StagingModel& model, const std::vector<const FeatureRow*>& rows) {
    double sum = 0.0;
    for (const auto* r : rows) sum += predict_proba(model.forest, r->features.model_row());
    return sum / double(rows.size());
}

std::string model_stem(StagingTask t, ModalityGroup g) {
    return std::string(to_string(t)) + "__" + std::string(to_string(g));
}

int case_label(const DatasetManifest& m, const std::string& case_id, StagingTask task) {
    const auto stage = m.case_stage(case_id);
    return stage ? binarize_stage(*stage, task) : -1;
}

}  // namespace

void write_text_atomic(const fs::path& path, const std::string& text) {
    if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
    const fs::path tmp = temp_sibling(path);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + tmp.string());
        out << text;
        out.close();
        require(!out.fail(), ErrorKind::Io, "write failed for " + tmp.string());
    }
    commit(tmp, path);
}

fs::path label_path(const fs::path& root, const std::string& case_id, Modality m) {
    require_safe_id(case_id);
    return root / case_id / (std::string(to_string(m)) + ".nii.gz");
}

json to_json(const CommandReport& r) {
    json skipped = json::array();
    for (const auto& s : r.skipped)
        skipped.push_back({{"case_id", s.case_id}, {"modality", s.modality}, {"reason", s.reason}, {"message", s.message}});
    return {{"command", r.command}, {"outputs", r.outputs}, {"skipped", skipped}};
}

// ---- phantom ----

CommandReport cmd_phantom(const CohortSpec& spec, const fs::path& out_dir, const PipelineConfig& cfg) {
    spec.validate();
    prepare_out_dir(out_dir, cfg.overwrite);

    std::vector<int> stages(spec.cases);
    for (int c = 0; c < spec.cases; ++c) stages[c] = c % 4;
    Rng stage_rng(derive(spec.seed, 0x5747));
    stage_rng.shuffle(stages.begin(), stages.end());

    const double fov = std::min({spec.dims[0] * spec.spacing[0], spec.dims[1] * spec.spacing[1],
                                 spec.dims[2] * spec.spacing[2]});
    const double size = fov / 64.0;
    const PhantomSpec defaults;

    std::vector<std::string> ids(spec.cases);
    for (int c = 0; c < spec.cases; ++c) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "case%03d", c + 1);
        ids[c] = buf;
    }

    std::vector<ManifestEntry> entries(std::size_t(spec.cases) * spec.modalities.size());
    parallel_for(std::size_t(spec.cases), cfg.jobs, [&](std::size_t c) {
        Rng rng(derive(spec.seed, 0xCA5E, c));
        const Vendor vendor = spec.vendors[c % spec.vendors.size()];
        const Stage stage = static_cast<Stage>(stages[c]);

        PhantomSpec base = defaults;
        base.dims = spec.dims;
        base.spacing = spec.spacing;
        for (int a = 0; a < 3; ++a) {
            base.semi_axes_mm[a] = defaults.semi_axes_mm[a] * size * rng.uniform(0.92, 1.08);
            base.organ_center_mm[a] = defaults.organ_center_mm[a] * size + rng.uniform(-2.0, 2.0) * size;
        }
        const int lobes = int(rng.index(3));
        for (int l = 0; l < lobes; ++l) {
            Vec3 dir{rng.normal(), rng.normal(), rng.normal()};
            dir = (1.0 / norm(dir)) * dir;
            Lobe lobe;
            for (int a = 0; a < 3; ++a)
                lobe.center_mm[a] = base.organ_center_mm[a] + 0.75 * base.semi_axes_mm[a] * dir[a];
            lobe.radius_mm = rng.uniform(5.0, 8.0) * size;
            base.lobes.push_back(lobe);
        }
        Vec3 g{rng.normal(), rng.normal(), rng.normal()};
        base.grating_direction = (1.0 / norm(g)) * g;
        const double k = spec.stage_coherence[stages[c]] + rng.uniform(-spec.coherence_jitter, spec.coherence_jitter);
        base.coherence = std::clamp(k, 0.0, 1.0);
        base.noise_sigma = spec.noise_sigma;
        base.intensity_scale = 1000.0 * (1.0 + 0.15 * vendor_code(vendor));
        base.anatomy_seed = derive(spec.seed, 0xA7A7, c);

        for (std::size_t mi = 0; mi < spec.modalities.size(); ++mi) {
            const Modality m = spec.modalities[mi];
            PhantomSpec ps = base;
            ps.curve = curve_for(m);
            ps.noise_seed = derive(spec.seed, 0x401E, c * 16 + std::size_t(m));
            std::optional<SimilarityTransform3D> truth;
            if (m != Modality::GED4) {
                Rng trng(derive(spec.seed, 0x7F, c * 16 + std::size_t(m)));
                truth = random_transform(trng, spec);
                // the modality sees the anatomy through the inverse, so
                // registering GED4 onto it recovers `truth`
                ps.transform = truth->inverse();
            }
            const Phantom ph = make_phantom(ps);
            const fs::path image = label_path(out_dir / "images", ids[c], m);
            write_image_atomic(ph.image, image);
            write_image_atomic(ph.mask, label_path(out_dir / "truth", ids[c], m));

            ManifestEntry e;
            e.case_id = ids[c];
            e.vendor = vendor;
            e.modality = m;
            e.volume = image;
            e.stage = stage;
            if (m == Modality::GED4) {
                const fs::path mask = label_path(out_dir / "masks", ids[c], m);
                write_image_atomic(ph.mask, mask);
                e.mask = mask;
            } else {
                json t = transform_to_json(*truth, 0.0, 0);
                t.erase("mi");
                t.erase("iterations");
                write_json_atomic(out_dir / "transforms" / ids[c] / (std::string(to_string(m)) + ".json"), t);
            }
            entries[c * spec.modalities.size() + mi] = std::move(e);
        }
    });

    save_manifest(DatasetManifest(entries), out_dir / "manifest.json");
    write_json_atomic(out_dir / "phantom_spec.json", to_json(spec));

    CommandReport r{"phantom", json::object(), {}};
    std::map<std::string, int> stage_counts;
    for (int s : stages) ++stage_counts[std::string(to_string(static_cast<Stage>(s)))];
    r.outputs = {{"cases", spec.cases},
                 {"volumes", entries.size()},
                 {"annotations", spec.cases},
                 {"transforms", std::size_t(spec.cases) * (spec.modalities.size() - 1)},
                 {"stages", stage_counts},
                 {"manifest", "manifest.json"}};
    return finish(std::move(r), out_dir);
}

// ---- register ----

CommandReport cmd_register(const fs::path& manifest_path, const fs::path& out_dir, const PipelineConfig& cfg) {
    cfg.validate();
    const DatasetManifest manifest = load_manifest(manifest_path);
    prepare_out_dir(out_dir, cfg.overwrite);

    struct Pair {
        const ManifestEntry* moving;
        const ManifestEntry* fixed;
    };
    std::vector<Pair> pairs;
    std::vector<SkipRecord> skipped;
    for (const auto& id : manifest.case_ids()) {
        require_safe_id(id);
        const ManifestEntry* ged4 = manifest.find(id, Modality::GED4);
        if (!ged4 || !ged4->mask) {
            skipped.push_back({id, "", reason::kMissingAnnotation,
                               ged4 ? "GED4 volume has no annotation" : "case has no GED4 volume"});
            continue;
        }
        for (const auto* e : manifest.entries_for(id))
            if (e->modality != Modality::GED4) pairs.push_back({ged4, e});
    }

    std::mutex m;
    std::vector<json> done(pairs.size());
    parallel_for(pairs.size(), cfg.jobs, [&](std::size_t n) {
        const Pair& p = pairs[n];
        const std::string mod(to_string(p.fixed->modality));
        VoxelVolume moving, fixed;
        LabelMask label;
        try {
            moving = nifti::read_volume(p.moving->volume);
            label = nifti::read_mask(*p.moving->mask);
            fixed = nifti::read_volume(p.fixed->volume);
        } catch (const Error& e) {
            add_skip(skipped, m, {p.fixed->case_id, mod, reason::kReadFailed, e.what()});
            return;
        }
        if (!label.grid().same_as(moving.grid())) {
            add_skip(skipped, m, {p.fixed->case_id, mod, reason::kGridMismatch, "GED4 mask and volume grids differ"});
            return;
        }
        try {
            const RegistrationResult res = register_images(fixed, moving, cfg.registration);
            const LabelMask pseudo = transfer_label(label, res.transform, fixed.grid());
            const fs::path tpath = out_dir / "transforms" / p.fixed->case_id / (mod + ".json");
            const fs::path lpath = label_path(out_dir / "pseudo_labels", p.fixed->case_id, p.fixed->modality);
            write_json_atomic(tpath, transform_to_json(res.transform, res.mi, res.iterations));
            write_image_atomic(pseudo, lpath);
            done[n] = {{"case_id", p.fixed->case_id},
                       {"modality", mod},
                       {"mi", res.mi},
                       {"initial_mi", res.initial_mi},
                       {"transform", rel(tpath, out_dir)},
                       {"pseudo_label", rel(lpath, out_dir)}};
        } catch (const Error& e) {
            add_skip(skipped, m, {p.fixed->case_id, mod, reason::kRegistrationFailed, e.what()});
        }
    });

    json registered = json::array();
    for (auto& d : done)
        if (!d.is_null()) registered.push_back(std::move(d));
    CommandReport r{"register", json::object(), std::move(skipped)};
    r.outputs = {{"pairs", registered.size()}, {"registered", registered}};
    return finish(std::move(r), out_dir);
}

// ---- augment ----

CommandReport cmd_augment(const fs::path& manifest_path, const fs::path& out_dir, const PipelineConfig& cfg) {
    cfg.validate();
    const DatasetManifest manifest = load_manifest(manifest_path);

    std::vector<const ManifestEntry*> annotated;
    std::vector<CohortMember> cohort;
    for (const auto& e : manifest.entries())
        if (e.modality == Modality::GED4 && e.mask) {
            require_safe_id(e.case_id);
            annotated.push_back(&e);
            cohort.push_back({e.case_id, e.vendor});
        }
    const std::uint64_t seed = cfg.augmentation.seed.value_or(cfg.seed);
    std::vector<MixSpec> plan = plan_mixes(cohort, cfg.augmentation.per_source, seed);
    prepare_out_dir(out_dir, cfg.overwrite);

    std::map<std::string, const ManifestEntry*> by_id;
    for (const auto* e : annotated) by_id[e->case_id] = e;

    std::vector<SkipRecord> skipped;
    std::mutex m;
    std::vector<std::optional<ManifestEntry>> made(plan.size());
    parallel_for(plan.size(), cfg.jobs, [&](std::size_t n) {
        MixSpec& spec = plan[n];
        const ManifestEntry& s = *by_id.at(spec.source);
        const ManifestEntry& t = *by_id.at(spec.target);
        try {
            const MixResult mix = instance_mix(nifti::read_volume(s.volume), nifti::read_mask(*s.mask),
                                               nifti::read_volume(t.volume), nifti::read_mask(*t.mask));
            spec.scale = mix.scale;
            const std::string id = spec.case_id();
            const fs::path image = label_path(out_dir / "images", id, Modality::GED4);
            const fs::path mask = label_path(out_dir / "masks", id, Modality::GED4);
            write_image_atomic(mix.volume, image);
            write_image_atomic(mix.mask, mask);
            write_json_atomic(out_dir / "specs" / (id + ".json"), to_json(spec));
            ManifestEntry e;
            e.case_id = id;
            e.vendor = spec.vendor;
            e.modality = Modality::GED4;
            e.volume = image;
            e.mask = mask;
            made[n] = std::move(e);
        } catch (const Error& e) {
            add_skip(skipped, m, {spec.case_id(), "GED4", reason::kReadFailed, e.what()});
        }
    });

    std::vector<ManifestEntry> entries;
    json specs = json::array();
    for (std::size_t n = 0; n < plan.size(); ++n)
        if (made[n]) {
            entries.push_back(*made[n]);
            specs.push_back(to_json(plan[n]));
        }
    save_manifest(DatasetManifest(entries), out_dir / "manifest.json");
    CommandReport r{"augment", json::object(), std::move(skipped)};
    r.outputs = {{"synthetic_cases", entries.size()}, {"seed", seed}, {"mixes", specs}, {"manifest", "manifest.json"}};
    return finish(std::move(r), out_dir);
}

// ---- extract ----

CommandReport cmd_extract(const fs::path& manifest_path, const MaskSources& masks, const fs::path& out_dir,
                          const PipelineConfig& cfg) {
    cfg.validate();
    const DatasetManifest manifest = load_manifest(manifest_path);
    prepare_out_dir(out_dir, cfg.overwrite);

    std::vector<const ManifestEntry*> entries;
    for (const auto& e : manifest.entries()) entries.push_back(&e);
    std::sort(entries.begin(), entries.end(), [](const ManifestEntry* a, const ManifestEntry* b) {
        return std::tie(a->case_id, a->modality) < std::tie(b->case_id, b->modality);
    });

    struct Row {
        FeatureRow row;
        std::string provenance;
    };
    std::vector<std::optional<Row>> rows(entries.size());
    std::vector<SkipRecord> skipped;
    std::mutex m;
    parallel_for(entries.size(), cfg.jobs, [&](std::size_t n) {
        const ManifestEntry& e = *entries[n];
        const std::string mod(to_string(e.modality));
        std::optional<fs::path> mask;
        std::string provenance;
        if (e.mask) {
            mask = e.mask;
            provenance = "annotation";
        } else if (masks.pseudo_labels && fs::exists(label_path(*masks.pseudo_labels, e.case_id, e.modality))) {
            mask = label_path(*masks.pseudo_labels, e.case_id, e.modality);
            provenance = "pseudo_label";
        } else if (masks.predictions && fs::exists(label_path(*masks.predictions, e.case_id, e.modality))) {
            mask = label_path(*masks.predictions, e.case_id, e.modality);
            provenance = "prediction";
        }
        if (!mask) {
            add_skip(skipped, m, {e.case_id, mod, reason::kMissingMask, "no annotation, pseudo-label or prediction"});
            return;
        }
        VoxelVolume v;
        LabelMask lm;
        try {
            v = nifti::read_volume(e.volume);
            lm = nifti::read_mask(*mask);
        } catch (const Error& err) {
            add_skip(skipped, m, {e.case_id, mod, reason::kReadFailed, err.what()});
            return;
        }
        if (!v.grid().same_as(lm.grid())) {
            add_skip(skipped, m, {e.case_id, mod, reason::kGridMismatch, provenance + " mask grid differs from volume"});
            return;
        }
        try {
            rows[n] = Row{{e.case_id, mod, extract_stad(v, lm, e.vendor, cfg.stad)}, provenance};
        } catch (const Error& err) {
            add_skip(skipped, m, {e.case_id, mod, reason::kExtractionFailed, err.what()});
        }
    });

    std::vector<FeatureRow> out;
    std::string prov = "case_id,modality,provenance\n";
    json counts = {{"annotation", 0}, {"pseudo_label", 0}, {"prediction", 0}};
    for (auto& r : rows)
        if (r) {
            prov += csv::field(r->row.case_id) + "," + r->row.modality + "," + r->provenance + "\n";
            counts[r->provenance] = counts[r->provenance].get<int>() + 1;
            out.push_back(std::move(r->row));
        }
    write_text_atomic(out_dir / "features.csv", format_feature_csv(out));
    write_text_atomic(out_dir / "provenance.csv", prov);
    CommandReport r{"extract", json::object(), std::move(skipped)};
    r.outputs = {{"rows", out.size()}, {"columns", 3 + kStadFeatureCount}, {"provenance", counts},
                 {"features", "features.csv"}, {"provenance_file", "provenance.csv"}};
    return finish(std::move(r), out_dir);
}

// ---- models and scores ----

json to_json(const StagingModel& m) {
    return {{"format", kModelFormat},
            {"version", kModelVersion},
            {"task", std::string(to_string(m.task))},
            {"group", std::string(to_string(m.group))},
            {"forest", model_to_json(m.forest)}};
}

StagingModel staging_model_from_json(const json& j) {
    require(j.is_object() && j.value("format", "") == kModelFormat, ErrorKind::Validation,
            "not a staging model file");
    require(j.value("version", -1) == kModelVersion, ErrorKind::Validation, "unsupported staging model version");
    StagingModel m;
    try {
        m.task = parse_staging_task(j.at("task").get<std::string>());
        m.group = parse_modality_group(j.at("group").get<std::string>());
        m.forest = model_from_json(j.at("forest"));
    } catch (const json::exception& e) {
        fail(ErrorKind::Validation, std::string("malformed staging model: ") + e.what());
    }
    return m;
}

std::vector<CaseScore> score_cases(const StagingModel& model, const std::vector<FeatureRow>& rows) {
    const auto expected = stad_model_feature_names();
    const auto& got = model.forest.feature_names;
    if (got != expected) {
        std::string detail;
        for (std::size_t n = 0; n < std::max(got.size(), expected.size()); ++n) {
            const std::string a = n < got.size() ? got[n] : "<none>";
            const std::string b = n < expected.size() ? expected[n] : "<none>";
            if (a != b) {
                detail = "column " + std::to_string(n) + ": model has '" + a + "', features have '" + b + "'";
                break;
            }
        }
        fail(ErrorKind::Validation, "model feature names do not match the feature CSV (" + detail + ")");
    }
    std::map<std::string, std::vector<const FeatureRow*>> by_case;
    for (const auto& r : rows)
        if (group_of(parse_modality(r.modality)) == model.group) by_case[r.case_id].push_back(&r);
    std::vector<CaseScore> out;
    for (const auto& [id, rs] : by_case) out.push_back({id, row_group_mean(model, rs), int(rs.size())});
    return out;
}

void write_scores_csv(const fs::path& path, const StagingModel& model, const std::vector<CaseScore>& scores) {
    std::string text = "case_id,task,group,probability,rows\n";
    for (const auto& s : scores)
        text += csv::field(s.case_id) + "," + std::string(to_string(model.task)) + "," +
                std::string(to_string(model.group)) + "," + fmt(s.probability) + "," + std::to_string(s.rows) + "\n";
    write_text_atomic(path, text);
}

ScoreFile read_scores_csv(const fs::path& path) {
    std::istringstream in(read_text(path, "scores CSV"));
    std::string line;
    require(static_cast<bool>(std::getline(in, line)) && line == "case_id,task,group,probability,rows",
            ErrorKind::Validation, "scores CSV " + path.string() + " has an unexpected header");
    ScoreFile f;
    std::size_t line_no = 1;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto v = csv::split(line, line_no, "scores CSV");
        require(v.size() == 5, ErrorKind::Validation, "scores CSV line " + std::to_string(line_no) + ": expected 5 fields");
        const StagingTask t = parse_staging_task(v[1]);
        const ModalityGroup g = parse_modality_group(v[2]);
        if (first) {
            f.task = t;
            f.group = g;
            first = false;
        }
        require(t == f.task && g == f.group, ErrorKind::Validation, "scores CSV mixes tasks or groups");
        CaseScore s;
        s.case_id = v[0];
        try {
            std::size_t used = 0;
            s.probability = std::stod(v[3], &used);
            require(used == v[3].size(), ErrorKind::Validation, "");
            s.rows = std::stoi(v[4]);
        } catch (const std::exception&) {
            fail(ErrorKind::Validation, "scores CSV line " + std::to_string(line_no) + ": malformed number");
        }
        f.scores.push_back(s);
    }
    return f;
}

// ---- train ----

CommandReport cmd_train(const fs::path& features_csv, const fs::path& manifest_path, const fs::path& out_dir,
                        const PipelineConfig& cfg) {
    cfg.validate();
    const auto rows = parse_feature_csv(read_text(features_csv, "feature CSV"));
    const DatasetManifest manifest = load_manifest(manifest_path);
    prepare_out_dir(out_dir, cfg.overwrite);

    std::vector<SkipRecord> skipped;
    std::set<std::string> unlabeled;
    for (const auto& r : rows)
        if (!manifest.case_stage(r.case_id) && unlabeled.insert(r.case_id).second)
            skipped.push_back({r.case_id, "", reason::kMissingStage, "case has no stage in the manifest"});

    json models = json::array();
    for (const StagingTask task : cfg.tasks)
        for (const ModalityGroup group : cfg.groups) {
            const std::string stem = model_stem(task, group);
            std::map<std::string, std::vector<const FeatureRow*>> by_case;
            for (const auto& r : rows)
                if (!unlabeled.count(r.case_id) && group_of(parse_modality(r.modality)) == group)
                    by_case[r.case_id].push_back(&r);
            std::vector<LabeledCase> cases;
            for (const auto& [id, rs] : by_case) cases.push_back({id, case_label(manifest, id, task)});
            require(!cases.empty(), ErrorKind::Training, stem + ": no labeled rows in this group");
            const Split split = stratified_split(cases, cfg.seed, cfg.validation_fraction);

            std::vector<std::vector<double>> x;
            std::vector<int> y;
            for (const auto& id : split.train)
                for (const auto* r : by_case[id]) {
                    const auto row = r->features.model_row();
                    x.emplace_back(row.begin(), row.end());
                    y.push_back(case_label(manifest, id, task));
                }
            StagingModel model{task, group,
                               fit_forest(x, y, cfg.forest, cfg.seed, stad_model_feature_names(), cfg.jobs)};

            std::vector<FeatureRow> val_rows;
            for (const auto& id : split.validation)
                for (const auto* r : by_case[id]) val_rows.push_back(*r);
            const auto scores = score_cases(model, val_rows);
            std::vector<double> s;
            std::vector<int> labels;
            for (const auto& c : scores) {
                s.push_back(c.probability);
                labels.push_back(case_label(manifest, c.case_id, task));
            }
            require(std::count(labels.begin(), labels.end(), 1) > 0 && std::count(labels.begin(), labels.end(), 0) > 0,
                    ErrorKind::Training, stem + ": validation split holds a single class");
            const double auc = roc_auc(s, labels), acc = accuracy(s, labels, cfg.threshold);

            json importance = json::array();
            for (const auto& f : feature_importance(model.forest))
                importance.push_back({{"name", f.name}, {"mean", f.mean}, {"std", f.std}});
            const json validation = {
                {"task", std::string(to_string(task))},
                {"group", std::string(to_string(group))},
                {"train_cases", split.train},
                {"validation_cases", split.validation},
                {"train_rows", x.size()},
                {"validation_rows", val_rows.size()},
                {"auc", auc},
                {"acc", acc},
                {"threshold", cfg.threshold},
                {"oob_accuracy", model.forest.oob_accuracy ? json(*model.forest.oob_accuracy) : json(nullptr)},
                {"warnings", split.warnings},
                {"importance", importance}};
            write_json_atomic(out_dir / (stem + ".model.json"), to_json(model));
            write_json_atomic(out_dir / (stem + ".validation.json"), validation);
            write_scores_csv(out_dir / (stem + ".validation_scores.csv"), model, scores);
            models.push_back({{"task", std::string(to_string(task))},
                              {"group", std::string(to_string(group))},
                              {"model", stem + ".model.json"},
                              {"validation_cases", split.validation.size()},
                              {"auc", auc},
                              {"acc", acc}});
        }
    CommandReport r{"train", json::object(), std::move(skipped)};
    r.outputs = {{"models", models}};
    return finish(std::move(r), out_dir);
}

// ---- predict ----

CommandReport cmd_predict(const fs::path& features_csv, const fs::path& model_path, const fs::path& out_dir,
                          const PipelineConfig& cfg) {
    const StagingModel model = staging_model_from_json(read_json(model_path, "model"));
    const auto rows = parse_feature_csv(read_text(features_csv, "feature CSV"));
    const auto scores = score_cases(model, rows);
    prepare_out_dir(out_dir, cfg.overwrite);
    write_scores_csv(out_dir / "scores.csv", model, scores);
    CommandReport r{"predict", json::object(), {}};
    r.outputs = {{"cases", scores.size()},
                 {"task", std::string(to_string(model.task))},
                 {"group", std::string(to_string(model.group))},
                 {"scores", "scores.csv"}};
    return finish(std::move(r), out_dir);
}

// ---- eval ----

CommandReport cmd_eval(const EvalInputs& in, const fs::path& out_dir, const PipelineConfig& cfg, EvalReport* out) {
    require(in.truth_labels.has_value() == in.pred_labels.has_value(), ErrorKind::Validation,
            "segmentation evaluation needs both --truth and --pred label roots");
    require(in.truth_labels || !in.score_files.empty(), ErrorKind::Validation, "nothing to evaluate");
    require(in.score_files.empty() || in.manifest, ErrorKind::Validation, "score evaluation needs --manifest");

    EvalReport report;
    std::vector<SkipRecord> skipped;
    if (in.truth_labels) {
        const auto collect = [](const fs::path& root) {
            std::set<std::pair<std::string, Modality>> keys;
            require(fs::is_directory(root), ErrorKind::Validation, "label root " + root.string() + " is not a directory");
            for (const auto& dir : fs::directory_iterator(root)) {
                if (!dir.is_directory()) continue;
                for (const auto& f : fs::directory_iterator(dir.path())) {
                    const std::string name = f.path().filename().string();
                    const std::string suffix = ".nii.gz";
                    if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix))
                        continue;
                    try {
                        keys.insert({dir.path().filename().string(), parse_modality(name.substr(0, name.size() - suffix.size()))});
                    } catch (const Error&) {
                    }
                }
            }
            return keys;
        };
        const auto truth = collect(*in.truth_labels), pred = collect(*in.pred_labels);
        std::vector<std::pair<std::string, Modality>> both;
        for (const auto& k : pred) {
            if (truth.count(k))
                both.push_back(k);
            else
                skipped.push_back({k.first, std::string(to_string(k.second)), reason::kMissingMask, "no ground truth"});
        }
        for (const auto& k : truth)
            if (!pred.count(k))
                skipped.push_back({k.first, std::string(to_string(k.second)), reason::kMissingMask, "no prediction"});
        require(!both.empty(), ErrorKind::Validation, "predicted and ground-truth labels share no case");
        std::vector<std::optional<SegmentationCase>> cases(both.size());
        std::mutex m;
        parallel_for(both.size(), cfg.jobs, [&](std::size_t n) {
            const auto& [id, mod] = both[n];
            try {
                cases[n] = evaluate_segmentation(id, std::string(to_string(mod)),
                                                 nifti::read_mask(label_path(*in.pred_labels, id, mod)),
                                                 nifti::read_mask(label_path(*in.truth_labels, id, mod)));
            } catch (const Error& e) {
                add_skip(skipped, m, {id, std::string(to_string(mod)), reason::kReadFailed, e.what()});
            }
        });
        for (auto& c : cases)
            if (c) report.segmentation.push_back(std::move(*c));
    }
    if (!in.score_files.empty()) {
        const DatasetManifest manifest = load_manifest(*in.manifest);
        for (const auto& path : in.score_files) {
            const ScoreFile f = read_scores_csv(path);
            std::vector<double> s;
            std::vector<int> y;
            for (const auto& c : f.scores) {
                const int label =
                    manifest.entries_for(c.case_id).empty() ? -1 : case_label(manifest, c.case_id, f.task);
                if (label < 0) {
                    skipped.push_back({c.case_id, "", reason::kMissingStage, "no stage label for scored case"});
                    continue;
                }
                s.push_back(c.probability);
                y.push_back(label);
            }
            require(!s.empty(), ErrorKind::Validation,
                    "scores in " + path.filename().string() + " share no case with the manifest");
            report.classification.push_back(evaluate_classification(
                std::string(to_string(f.task)) + "/" + std::string(to_string(f.group)), s, y, cfg.threshold));
        }
    }

    prepare_out_dir(out_dir, cfg.overwrite);
    write_json_atomic(out_dir / "eval.json", to_json(report));
    std::ostringstream table;
    write_table(table, report);
    write_text_atomic(out_dir / "eval.txt", table.str());
    if (out) *out = report;
    CommandReport r{"eval", json::object(), std::move(skipped)};
    r.outputs = {{"segmentation_cases", report.segmentation.size()},
                 {"classification", report.classification.size()},
                 {"report", "eval.json"}};
    return finish(std::move(r), out_dir);
}

}  // namespace hepar
