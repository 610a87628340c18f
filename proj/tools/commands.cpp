#include "commands.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ptri/bench.hpp"
#include "ptri/checkpoint.hpp"
#include "ptri/error.hpp"
#include "ptri/hash.hpp"
#include "ptri/heatmap.hpp"
#include "ptri/metrics.hpp"
#include "ptri/patcher.hpp"
#include "ptri/plot.hpp"
#include "ptri/preprocess.hpp"
#include "ptri/rng.hpp"
#include "ptri/slide.hpp"
#include "ptri/train.hpp"
#include "ptri/zoo.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ptri::cli {
namespace {

struct GlobalOpts {
    std::uint64_t seed = 0;
    int threads = 1;
    std::string out_dir = ".";

    fs::path out() const { return fs::path(out_dir); }
};

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    return detail::splitmix64(base ^ detail::splitmix64(index + 1));
}

// Artifacts a command produced. Deterministic files are hashed into run.json;
// files whose bytes depend on measured wall-clock time are listed separately
// and excluded from replay comparison, like timestamps would be.
struct RunRecord {
    std::vector<fs::path> files;
    std::vector<fs::path> nondeterministic;

    void add(const fs::path& p) { files.push_back(p); }
    void add_nondet(const fs::path& p) { nondeterministic.push_back(p); }

    void add_tree(const fs::path& dir) {
        std::vector<fs::path> collected;
        for (const auto& e : fs::recursive_directory_iterator(dir))
            if (e.is_regular_file()) collected.push_back(e.path());
        std::sort(collected.begin(), collected.end());
        files.insert(files.end(), collected.begin(), collected.end());
    }
};

std::string hash_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw_io("cannot open " + p.string() + " for hashing");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return fnv1a64_hex(bytes.data(), bytes.size());
}

std::string rel_to_out(const fs::path& p, const fs::path& out_dir) {
    return fs::relative(p, out_dir).generic_string();
}

void write_run_json(const GlobalOpts& g, const std::string& command,
                    const std::vector<std::string>& argv, const RunRecord& rec) {
    json outputs = json::object();
    for (const auto& p : rec.files) outputs[rel_to_out(p, g.out())] = hash_file(p);
    std::vector<std::string> nondet;
    for (const auto& p : rec.nondeterministic) nondet.push_back(rel_to_out(p, g.out()));
    std::sort(nondet.begin(), nondet.end());
    json j{{"command", command},
           {"argv", argv},
           {"seed", g.seed},
           {"threads", g.threads},
           {"outputs", outputs},
           {"nondeterministic_outputs", nondet}};
    const fs::path path = g.out() / "run.json";
    std::ofstream out(path);
    if (!out) throw_io("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

json json_of(const SgdConfig& sgd) {
    return json{{"learning_rate", sgd.learning_rate},
                {"momentum", sgd.momentum},
                {"batch_size", sgd.batch_size},
                {"epochs", sgd.epochs},
                {"seed", sgd.seed}};
}

json json_of(const std::optional<AugmentConfig>& aug) {
    if (!aug) return nullptr;
    return json{{"max_rotation_deg", aug->max_rotation_deg},
                {"max_zoom_fraction", aug->max_zoom_fraction},
                {"horizontal_flip", aug->horizontal_flip},
                {"vertical_flip", aug->vertical_flip},
                {"seed", aug->seed}};
}

void write_json_file(const json& j, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw_io("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw_io("cannot open " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw_data(path.string() + " is not valid JSON");
    return j;
}

int patch_set_size(const std::vector<Patch>& patches, const fs::path& dir) {
    if (patches.empty()) throw_data("patch set " + dir.string() + " is empty");
    return patches[0].size_px;
}

// ---- synth ----------------------------------------------------------------

struct SynthOpts {
    int tumor_slides = 2;
    int normal_slides = 2;
    int width = 1024;
    int height = 1024;
    int tile_size = 256;
    double tissue_fraction = 0.5;
    int nodules = 3;
    int radius_min = 40;
    int radius_max = 60;
};

void cmd_synth(const GlobalOpts& g, const SynthOpts& o, RunRecord& rec) {
    if (o.tumor_slides < 0 || o.normal_slides < 0 || o.tumor_slides + o.normal_slides == 0)
        throw_usage("need at least one slide (--tumor-slides/--normal-slides)");
    DatasetManifest manifest;
    manifest.seed = g.seed;
    const fs::path slides_dir = g.out() / "slides";
    const fs::path masks_dir = g.out() / "masks";
    fs::create_directories(slides_dir);
    fs::create_directories(masks_dir);

    auto emit = [&](const std::string& id, int nodules, std::uint64_t index) {
        SyntheticSlideSpec spec;
        spec.width_px = o.width;
        spec.height_px = o.height;
        spec.tile_size = o.tile_size;
        spec.tissue_fraction = o.tissue_fraction;
        spec.tumor_nodule_count = nodules;
        spec.tumor_nodule_radius_min = o.radius_min;
        spec.tumor_nodule_radius_max = o.radius_max;
        spec.seed = derive_seed(g.seed, index);
        SyntheticSlide synth = generate_synthetic_slide(spec);
        synth.slide.id = id;
        synth.annotation.slide_id = id;

        const fs::path slide_dir = slides_dir / id;
        write_slide(synth.slide, slide_dir);
        rec.add_tree(slide_dir);

        ManifestEntry entry;
        entry.slide_path = "slides/" + id;
        entry.label = synth.slide.label;
        if (synth.slide.label == SlideLabel::Tumor) {
            const fs::path mask_path = masks_dir / (id + ".png");
            write_mask_png(synth.annotation.mask, mask_path);
            rec.add(mask_path);
            entry.mask_path = "masks/" + id + ".png";
        }
        manifest.entries.push_back(entry);
        std::printf("%s: %dx%d %s\n", id.c_str(), synth.slide.width_px, synth.slide.height_px,
                    to_string(synth.slide.label));
    };

    for (int i = 0; i < o.tumor_slides; ++i)
        emit("tumor_" + std::to_string(i + 1), o.nodules, static_cast<std::uint64_t>(i));
    for (int i = 0; i < o.normal_slides; ++i)
        emit("normal_" + std::to_string(i + 1), 0, 100000 + static_cast<std::uint64_t>(i));

    const fs::path manifest_path = g.out() / "manifest.json";
    write_manifest(manifest, manifest_path);
    rec.add(manifest_path);
    std::printf("wrote %zu slides and %s\n", manifest.entries.size(), manifest_path.string().c_str());
}

// ---- segment --------------------------------------------------------------

struct SegmentOpts {
    std::string slide_path;
};

void cmd_segment(const GlobalOpts& g, const SegmentOpts& o, RunRecord& rec) {
    Slide slide = read_slide(o.slide_path);
    BinaryMask tissue = tissue_mask(slide);
    const fs::path out_path = g.out() / (slide.id + "_tissue.png");
    write_mask_png(tissue, out_path);
    rec.add(out_path);
    const double frac = static_cast<double>(tissue.count()) / (static_cast<double>(tissue.width) * tissue.height);
    std::printf("%s: tissue fraction %.3f -> %s\n", slide.id.c_str(), frac, out_path.string().c_str());
}

// ---- patch ----------------------------------------------------------------

struct PatchOpts {
    std::string manifest_path;
    int patch_size = 64;
    int pos_per_slide = 50;
    int negt_per_slide = 50;
    int negn_per_slide = 100;
    double min_tissue = 0.8;
    bool no_standardize = false;
};

void cmd_patch(const GlobalOpts& g, const PatchOpts& o, RunRecord& rec) {
    const fs::path manifest_path(o.manifest_path);
    DatasetManifest manifest = read_manifest(manifest_path);
    if (manifest.entries.empty()) throw_data("manifest has no slides");

    std::optional<ColorTemplate> tpl;
    if (!o.no_standardize) {
        // Color reference: tissue statistics of the manifest's first slide.
        Slide ref = read_slide(resolve_manifest_path(manifest_path, manifest.entries[0].slide_path));
        tpl = compute_color_stats(ref.to_image(), tissue_mask(ref));
    }

    std::vector<Patch> all;
    std::size_t n_pos = 0, n_negt = 0, n_negn = 0;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        const ManifestEntry& entry = manifest.entries[i];
        Slide slide = read_slide(resolve_manifest_path(manifest_path, entry.slide_path));
        ImageU8 image = slide.to_image();
        BinaryMask tissue = tissue_mask(image);
        if (tpl) {
            image = standardize_color(image, tissue, *tpl);
            slide = make_slide(slide.id, image, slide.tile_size, slide.label);
        }
        BinaryMask tumor;
        if (entry.mask_path) {
            tumor = read_mask_png(resolve_manifest_path(manifest_path, *entry.mask_path));
            if (tumor.width != slide.width_px || tumor.height != slide.height_px)
                throw_data("mask dimensions do not match slide " + slide.id);
        }

        ExtractionConfig config;
        config.patch_size_px = o.patch_size;
        config.min_tissue_fraction = o.min_tissue;
        config.seed = derive_seed(g.seed, i);
        if (entry.label == SlideLabel::Tumor) {
            config.target_positive_tumor = o.pos_per_slide;
            config.target_negative_tumor = o.negt_per_slide;
        } else {
            config.target_negative_normal = o.negn_per_slide;
        }
        std::vector<Patch> patches =
            extract_patches(slide, entry.mask_path ? &tumor : nullptr, tissue, config);
        for (const Patch& p : patches) {
            n_pos += p.label == PatchLabel::PositiveTumor;
            n_negt += p.label == PatchLabel::NegativeTumor;
            n_negn += p.label == PatchLabel::NegativeNormal;
        }
        all.insert(all.end(), std::make_move_iterator(patches.begin()),
                   std::make_move_iterator(patches.end()));
        std::printf("%s: %zu patches\n", slide.id.c_str(), all.size());
    }

    const fs::path patch_dir = g.out() / "patches";
    write_patch_set(all, patch_dir);
    if (tpl) write_color_template(*tpl, patch_dir / "template.json");
    rec.add_tree(patch_dir);
    std::printf("wrote %zu patches (%zu positive-tumor, %zu negative-tumor, %zu negative-normal) -> %s\n",
                all.size(), n_pos, n_negt, n_negn, patch_dir.string().c_str());
}

// ---- train ----------------------------------------------------------------

struct TrainOpts {
    std::string patches_dir;
    std::string val_dir;
    std::string arch = "mobile";
    double lr = 0.01;
    double momentum = 0.0;
    int batch_size = 32;
    int epochs = 10;
    bool augment = false;
    double rotation_deg = 20.0;
    double zoom_frac = 0.20;
    bool no_flip_h = false;
    bool no_flip_v = false;
};

std::optional<AugmentConfig> augment_from(const TrainOpts& o, std::uint64_t seed) {
    if (!o.augment) return std::nullopt;
    AugmentConfig aug;
    aug.max_rotation_deg = o.rotation_deg;
    aug.max_zoom_fraction = o.zoom_frac;
    aug.horizontal_flip = !o.no_flip_h;
    aug.vertical_flip = !o.no_flip_v;
    aug.seed = seed;
    return aug;
}

// Slide-level holdout when no validation set is given: fold 0 of a stratified
// k-fold split over the slides present in the patch set.
void holdout_split(const std::vector<Patch>& patches, std::uint64_t seed,
                   std::vector<Patch>* train_set, std::vector<Patch>* val_set) {
    std::map<std::string, bool> has_tumor_patches;
    for (const Patch& p : patches)
        has_tumor_patches[p.slide_id] =
            has_tumor_patches[p.slide_id] || p.label != PatchLabel::NegativeNormal;
    if (has_tumor_patches.size() < 2)
        throw_data("validation holdout needs patches from at least 2 slides; pass --val-patches");
    DatasetManifest pseudo;
    for (const auto& [id, tumorish] : has_tumor_patches) {
        ManifestEntry e;
        e.slide_path = id;
        e.label = tumorish ? SlideLabel::Tumor : SlideLabel::Normal;
        pseudo.entries.push_back(e);
    }
    const int k = std::min<int>(5, static_cast<int>(pseudo.entries.size()));
    FoldAssignment folds = assign_folds(pseudo, k, seed);
    for (const Patch& p : patches)
        (folds.fold_of.at(p.slide_id) == 0 ? *val_set : *train_set).push_back(p);
}

void cmd_train(const GlobalOpts& g, const TrainOpts& o, RunRecord& rec) {
    std::vector<Patch> patches = read_patch_set(o.patches_dir);
    const int size = patch_set_size(patches, o.patches_dir);

    std::vector<Patch> train_set, val_set;
    if (!o.val_dir.empty()) {
        val_set = read_patch_set(o.val_dir);
        if (patch_set_size(val_set, o.val_dir) != size)
            throw_data("validation patch size does not match training patch size");
        train_set = std::move(patches);
    } else {
        holdout_split(patches, derive_seed(g.seed, 77), &train_set, &val_set);
    }

    ModelGraph model = build(architecture_from_string(o.arch), size, derive_seed(g.seed, 1));
    SgdConfig sgd;
    sgd.learning_rate = o.lr;
    sgd.momentum = o.momentum;
    sgd.batch_size = o.batch_size;
    sgd.epochs = o.epochs;
    sgd.seed = g.seed;
    std::optional<AugmentConfig> aug = augment_from(o, derive_seed(g.seed, 211));

    TrainRun run = train(model, train_set, val_set, sgd, aug);
    run.seed = g.seed;

    const fs::path ckpt_path = g.out() / "model.ckpt";
    save_checkpoint(model, ckpt_path);
    run.checkpoint_path = "model.ckpt";
    rec.add(ckpt_path);

    // Keep the color reference next to the checkpoint so inference can
    // standardize incoming slides the same way the training patches were.
    const fs::path tpl_src = fs::path(o.patches_dir) / "template.json";
    if (fs::exists(tpl_src)) {
        const fs::path tpl_dst = g.out() / "template.json";
        fs::copy_file(tpl_src, tpl_dst, fs::copy_options::overwrite_existing);
        rec.add(tpl_dst);
    }

    json epochs = json::array();
    for (const EpochRecord& e : run.epochs)
        epochs.push_back({{"train_loss", e.train_loss}, {"train_acc", e.train_acc}, {"val_acc", e.val_acc}});
    json j{{"arch", run.arch},
           {"sgd", json_of(run.sgd)},
           {"augment", json_of(run.augment)},
           {"epochs", epochs},
           {"train_patches", train_set.size()},
           {"val_patches", val_set.size()},
           {"checkpoint", run.checkpoint_path},
           {"seed", run.seed}};
    const fs::path run_path = g.out() / "train_run.json";
    write_json_file(j, run_path);
    rec.add(run_path);

    const EpochRecord& last = run.epochs.back();
    std::printf("%s: %zu train / %zu val patches, final train acc %.3f, val acc %.3f -> %s\n",
                run.arch.c_str(), train_set.size(), val_set.size(), last.train_acc, last.val_acc,
                ckpt_path.string().c_str());
}

// ---- cv -------------------------------------------------------------------

struct CvOpts {
    std::string patches_dir;
    std::string manifest_path;
    int k = 5;
    TrainOpts train;  // arch + sgd + augment flags
};

void cmd_cv(const GlobalOpts& g, const CvOpts& o, RunRecord& rec) {
    std::vector<Patch> patches = read_patch_set(o.patches_dir);
    const int size = patch_set_size(patches, o.patches_dir);
    DatasetManifest manifest = read_manifest(o.manifest_path);

    FoldAssignment folds = assign_folds(manifest, o.k, derive_seed(g.seed, 5));
    const fs::path folds_path = g.out() / "folds.json";
    write_fold_assignment(folds, folds_path);
    rec.add(folds_path);

    CvConfig config;
    config.arch = architecture_from_string(o.train.arch);
    config.input_size = size;
    config.sgd.learning_rate = o.train.lr;
    config.sgd.momentum = o.train.momentum;
    config.sgd.batch_size = o.train.batch_size;
    config.sgd.epochs = o.train.epochs;
    config.sgd.seed = g.seed;
    config.augment = augment_from(o.train, g.seed);
    config.seed = g.seed;

    std::vector<TrainRun> runs;
    CvReport report = cross_validate(patches, folds, config, &runs);

    json fold_runs = json::array();
    for (const TrainRun& r : runs) {
        json epochs = json::array();
        for (const EpochRecord& e : r.epochs)
            epochs.push_back({{"train_loss", e.train_loss}, {"train_acc", e.train_acc}, {"val_acc", e.val_acc}});
        fold_runs.push_back({{"fold", r.fold}, {"epochs", epochs}});
    }
    std::vector<std::string> hashes;
    for (std::uint64_t h : report.fold_val_hash) {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
        hashes.emplace_back(buf);
    }
    json j{{"k", report.k},
           {"arch", o.train.arch},
           {"input_size", size},
           {"fold_train_acc", report.fold_train_acc},
           {"fold_val_acc", report.fold_val_acc},
           {"fold_val_hash", hashes},
           {"train_mean", report.train_mean},
           {"train_std", report.train_std},
           {"val_mean", report.val_mean},
           {"val_std", report.val_std},
           {"train_summary", report.train_summary()},
           {"val_summary", report.val_summary()},
           {"sgd", json_of(config.sgd)},
           {"augment", json_of(config.augment)},
           {"runs", fold_runs},
           {"seed", g.seed}};
    const fs::path report_path = g.out() / "cv_report.json";
    write_json_file(j, report_path);
    rec.add(report_path);

    std::printf("%d-fold cv (%s): train %s, val %s -> %s\n", report.k, o.train.arch.c_str(),
                report.train_summary().c_str(), report.val_summary().c_str(),
                report_path.string().c_str());
}

// ---- eval -----------------------------------------------------------------

struct EvalOpts {
    std::string checkpoint_path;
    std::string patches_dir;
    int n_boot = 1000;
    double level = 0.95;
};

void cmd_eval(const GlobalOpts& g, const EvalOpts& o, RunRecord& rec) {
    ModelGraph model = load_checkpoint(o.checkpoint_path);
    std::vector<Patch> patches = read_patch_set(o.patches_dir);
    const int size = patch_set_size(patches, o.patches_dir);
    if (size != model.input_size)
        throw_data("patch size " + std::to_string(size) + " does not match model input size " +
                   std::to_string(model.input_size));

    std::vector<double> scores = predict_scores(model, patches);
    std::vector<int> labels;
    labels.reserve(patches.size());
    for (const Patch& p : patches) labels.push_back(binary_label(p.label));

    const double acc = accuracy(predict_binary(scores), labels);
    RocCurve curve = roc_curve(scores, labels);
    auto [lo, hi] = auc_ci(scores, labels, o.n_boot, o.level, derive_seed(g.seed, 9));
    curve.ci_low = lo;
    curve.ci_high = hi;

    std::size_t n_pos = 0;
    for (int l : labels) n_pos += l == 1;
    json j{{"accuracy", acc},
           {"auc", curve.auc},
           {"auc_ci_low", lo},
           {"auc_ci_high", hi},
           {"confidence_level", o.level},
           {"bootstrap_samples", o.n_boot},
           {"n_patches", patches.size()},
           {"n_positive", n_pos},
           {"n_negative", patches.size() - n_pos},
           {"seed", g.seed}};
    const fs::path metrics_path = g.out() / "metrics.json";
    write_json_file(j, metrics_path);
    rec.add(metrics_path);

    const fs::path csv_path = g.out() / "roc.csv";
    {
        std::ofstream csv(csv_path);
        if (!csv) throw_io("cannot write " + csv_path.string());
        csv << "threshold,fpr,tpr\n";
        char buf[128];
        for (std::size_t i = 0; i < curve.thresholds.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", curve.thresholds[i], curve.fpr[i],
                          curve.tpr[i]);
            csv << buf;
        }
    }
    rec.add(csv_path);

    const fs::path roc_path = g.out() / "roc.png";
    render_roc_png(curve, roc_path);
    rec.add(roc_path);

    std::printf("accuracy %.3f, auc %.3f (%.0f%% ci %.3f-%.3f) on %zu patches -> %s\n", acc,
                curve.auc, o.level * 100.0, lo, hi, patches.size(), metrics_path.string().c_str());
}

// ---- infer ----------------------------------------------------------------

struct InferOpts {
    std::string checkpoint_path;
    std::string slide_path;
    std::string mask_path;
    std::string template_path;
    int stride = 0;
    double threshold = 0.9;
    double min_tissue = 0.5;
    bool no_skip = false;
    int batch_size = 32;
};

void cmd_infer(const GlobalOpts& g, const InferOpts& o, RunRecord& rec) {
    ModelGraph model = load_checkpoint(o.checkpoint_path);
    Slide slide = read_slide(o.slide_path);
    BinaryMask tissue = tissue_mask(slide);

    HeatmapConfig config;
    config.stride_px = o.stride;
    config.decision_threshold = o.threshold;
    config.skip_non_tissue = !o.no_skip;
    config.min_tissue_fraction = o.min_tissue;
    config.batch_size = o.batch_size;
    if (!o.template_path.empty()) config.color_template = read_color_template(o.template_path);

    Heatmap h = predict_heatmap(slide, model, tissue, config);

    const fs::path heatmap_path = g.out() / "heatmap.png";
    render_heatmap(h, heatmap_path);
    rec.add(heatmap_path);
    rec.add(g.out() / "heatmap.json");

    BinaryMask truth;
    const bool have_truth = !o.mask_path.empty();
    if (have_truth) {
        truth = read_mask_png(o.mask_path);
        if (truth.width != slide.width_px || truth.height != slide.height_px)
            throw_data("mask dimensions do not match slide " + slide.id);
    }

    const fs::path overlay_path = g.out() / "overlay.png";
    render_overlay(slide.to_image(), h, have_truth ? &truth : nullptr, overlay_path);
    rec.add(overlay_path);

    std::size_t flagged = 0, evaluated = 0;
    for (std::size_t i = 0; i < h.probs.size(); ++i) {
        evaluated += h.evaluated[i];
        flagged += h.evaluated[i] && h.probs[i] >= o.threshold;
    }
    std::printf("%s: %dx%d grid, %zu/%zu evaluated cells flagged at %.2f\n", slide.id.c_str(),
                h.grid_w, h.grid_h, flagged, evaluated, o.threshold);

    if (have_truth) {
        ComparisonReport report = compare_to_ground_truth(h, AnnotationMask{slide.id, truth}, o.threshold);
        json j{{"slide_id", slide.id},
               {"threshold", o.threshold},
               {"dice", report.dice},
               {"iou", report.iou},
               {"cell_sensitivity", report.cell_sensitivity},
               {"cell_specificity", report.cell_specificity}};
        const fs::path cmp_path = g.out() / "comparison.json";
        write_json_file(j, cmp_path);
        rec.add(cmp_path);
        std::printf("dice %.3f, iou %.3f, cell sensitivity %.3f, cell specificity %.3f\n",
                    report.dice, report.iou, report.cell_sensitivity, report.cell_specificity);
    }
}

// ---- bench ----------------------------------------------------------------

struct BenchOpts {
    int input_size = 64;
    int batch_size = 8;
    int warmup = 5;
    int reps = 30;
};

void cmd_bench(const GlobalOpts& g, const BenchOpts& o, RunRecord& rec) {
    std::vector<BenchReport> reports = compare_archs(o.input_size, o.batch_size, g.seed, o.warmup, o.reps);

    json rows = json::array();
    for (const BenchReport& r : reports) {
        ModelGraph model = build(architecture_from_string(r.arch), o.input_size, 0);
        rows.push_back({{"arch", r.arch},
                        {"ms_per_step", r.ms_per_step},
                        {"iqr_ms", r.iqr_ms},
                        {"batch_times_ms", r.batch_times_ms},
                        {"param_count", param_count(model)},
                        {"macs_per_sample", flops_estimate(model, o.input_size)}});
    }
    json j{{"input_size", o.input_size},
           {"batch_size", o.batch_size},
           {"warmup", o.warmup},
           {"reps", o.reps},
           {"results", rows},
           {"seed", g.seed}};
    const fs::path json_path = g.out() / "bench.json";
    write_json_file(j, json_path);
    rec.add_nondet(json_path);

    const std::string table = bench_table(reports);
    const fs::path table_path = g.out() / "bench.txt";
    {
        std::ofstream out(table_path);
        if (!out) throw_io("cannot write " + table_path.string());
        out << table;
    }
    rec.add_nondet(table_path);

    std::vector<std::string> labels;
    std::vector<double> values;
    for (const BenchReport& r : reports) {
        labels.push_back(r.arch);
        values.push_back(r.ms_per_step);
    }
    const fs::path chart_path = g.out() / "bench.png";
    render_bar_chart_png(labels, values, "MS PER STEP (BATCH " + std::to_string(o.batch_size) + ")",
                         chart_path);
    rec.add_nondet(chart_path);

    std::fputs(table.c_str(), stdout);
}

// ---- replay ---------------------------------------------------------------

struct ReplayOpts {
    std::string run_path;
};

void cmd_replay(const GlobalOpts& g, const ReplayOpts& o) {
    json run = read_json_file(o.run_path);
    for (const char* key : {"command", "argv", "outputs", "nondeterministic_outputs"})
        if (!run.contains(key)) throw_data(std::string(o.run_path) + " lacks \"" + key + "\"");

    std::vector<std::string> argv = run["argv"].get<std::vector<std::string>>();
    // Re-run into a scratch directory regardless of where the original wrote.
    std::vector<std::string> replay_argv;
    for (std::size_t i = 0; i < argv.size(); ++i) {
        if (argv[i] == "--out-dir") {
            ++i;  // drop the flag and its value
            continue;
        }
        if (argv[i].rfind("--out-dir=", 0) == 0) continue;
        replay_argv.push_back(argv[i]);
    }
    const fs::path replay_dir = g.out() / "replay";
    fs::remove_all(replay_dir);
    replay_argv.push_back("--out-dir");
    replay_argv.push_back(replay_dir.string());

    std::printf("replaying `%s` into %s\n", run["command"].get<std::string>().c_str(),
                replay_dir.string().c_str());
    const int rc = run_cli(replay_argv);
    if (rc != 0) throw_data("replayed command exited with code " + std::to_string(rc));

    json replay_run = read_json_file(replay_dir / "run.json");
    std::vector<std::string> mismatches;
    for (const auto& [rel, hash] : run["outputs"].items()) {
        const fs::path p = replay_dir / rel;
        if (!fs::exists(p)) {
            mismatches.push_back(rel + " (missing)");
            continue;
        }
        if (hash_file(p) != hash.get<std::string>()) mismatches.push_back(rel);
    }
    for (const auto& [rel, hash] : replay_run["outputs"].items())
        if (!run["outputs"].contains(rel)) mismatches.push_back(rel + " (unexpected extra)");

    if (!mismatches.empty()) {
        std::string msg = "replay diverged on " + std::to_string(mismatches.size()) + " artifact(s):";
        for (const std::string& m : mismatches) msg += " " + m;
        throw_data(msg);
    }
    std::printf("replay ok: %zu artifacts byte-identical, %zu timing files skipped\n",
                run["outputs"].size(), run["nondeterministic_outputs"].size());
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"Tumor triage over tiled slide images: synthetic data, tissue segmentation, "
                 "patch training, heatmap inference, benchmarking"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--seed", g.seed, "Base seed for every random choice")->capture_default_str();
    app.add_option("--threads", g.threads, "Worker thread cap (modules run sequentially today)")
        ->envname("PTRI_THREADS")
        ->check(CLI::PositiveNumber);
    app.add_option("--out-dir", g.out_dir, "Directory receiving all outputs")
        ->envname("PTRI_OUT_DIR")
        ->capture_default_str();

    SynthOpts synth;
    CLI::App* s = app.add_subcommand("synth", "Generate a seeded synthetic slide corpus + manifest");
    s->add_option("--tumor-slides", synth.tumor_slides)->capture_default_str();
    s->add_option("--normal-slides", synth.normal_slides)->capture_default_str();
    s->add_option("--width", synth.width)->capture_default_str();
    s->add_option("--height", synth.height)->capture_default_str();
    s->add_option("--tile-size", synth.tile_size)->capture_default_str();
    s->add_option("--tissue-fraction", synth.tissue_fraction)->capture_default_str();
    s->add_option("--nodules", synth.nodules, "Tumor nodules per tumor slide")->capture_default_str();
    s->add_option("--radius-min", synth.radius_min)->capture_default_str();
    s->add_option("--radius-max", synth.radius_max)->capture_default_str();

    SegmentOpts segment;
    CLI::App* sg = app.add_subcommand("segment", "Compute the tissue mask of one slide");
    sg->add_option("--slide", segment.slide_path, "Slide directory or flat PNG")->required();

    PatchOpts patch;
    CLI::App* p = app.add_subcommand("patch", "Extract labeled patches from every manifest slide");
    p->add_option("--manifest", patch.manifest_path)->required();
    p->add_option("--patch-size", patch.patch_size)->capture_default_str();
    p->add_option("--pos", patch.pos_per_slide, "Positive-tumor patches per tumor slide")->capture_default_str();
    p->add_option("--neg-tumor", patch.negt_per_slide, "Negative-tumor patches per tumor slide")->capture_default_str();
    p->add_option("--neg-normal", patch.negn_per_slide, "Negative-normal patches per normal slide")->capture_default_str();
    p->add_option("--min-tissue", patch.min_tissue, "Minimum tissue fraction per patch")->capture_default_str();
    p->add_flag("--no-standardize", patch.no_standardize, "Skip color standardization");

    auto add_train_flags = [](CLI::App* cmd, TrainOpts& t) {
        cmd->add_option("--arch", t.arch, "mobile | vgg | res50 | res101")->capture_default_str();
        cmd->add_option("--lr", t.lr)->capture_default_str();
        cmd->add_option("--momentum", t.momentum)->capture_default_str();
        cmd->add_option("--batch-size", t.batch_size)->capture_default_str();
        cmd->add_option("--epochs", t.epochs)->capture_default_str();
        cmd->add_flag("--augment", t.augment, "Randomly flip/rotate/zoom training patches");
        cmd->add_option("--rotation-deg", t.rotation_deg)->capture_default_str();
        cmd->add_option("--zoom-frac", t.zoom_frac)->capture_default_str();
        cmd->add_flag("--no-flip-h", t.no_flip_h);
        cmd->add_flag("--no-flip-v", t.no_flip_v);
    };

    TrainOpts train_opts;
    CLI::App* t = app.add_subcommand("train", "Train one architecture on a patch set");
    t->add_option("--patches", train_opts.patches_dir)->required();
    t->add_option("--val-patches", train_opts.val_dir, "Validation patch set (default: slide holdout)");
    add_train_flags(t, train_opts);

    CvOpts cv;
    CLI::App* c = app.add_subcommand("cv", "Slide-level k-fold cross-validation");
    c->add_option("--patches", cv.patches_dir)->required();
    c->add_option("--manifest", cv.manifest_path)->required();
    c->add_option("--k", cv.k)->capture_default_str();
    add_train_flags(c, cv.train);

    EvalOpts eval;
    CLI::App* e = app.add_subcommand("eval", "Score a checkpoint on a patch set (accuracy, ROC, AUC)");
    e->add_option("--checkpoint", eval.checkpoint_path)->required();
    e->add_option("--patches", eval.patches_dir)->required();
    e->add_option("--bootstrap", eval.n_boot)->capture_default_str();
    e->add_option("--level", eval.level, "Confidence level for the AUC interval")->capture_default_str();

    InferOpts infer;
    CLI::App* in = app.add_subcommand("infer", "Whole-slide tumor probability heatmap");
    in->add_option("--checkpoint", infer.checkpoint_path)->required();
    in->add_option("--slide", infer.slide_path)->required();
    in->add_option("--mask", infer.mask_path, "Ground-truth tumor mask for comparison metrics");
    in->add_option("--template", infer.template_path, "Color template JSON");
    in->add_option("--stride", infer.stride, "Grid stride in pixels (0 = patch size)")->capture_default_str();
    in->add_option("--threshold", infer.threshold)->capture_default_str();
    in->add_option("--min-tissue", infer.min_tissue)->capture_default_str();
    in->add_flag("--no-skip", infer.no_skip, "Run the model on non-tissue cells too");
    in->add_option("--batch-size", infer.batch_size)->capture_default_str();

    BenchOpts bench;
    CLI::App* b = app.add_subcommand("bench", "Benchmark all four architectures");
    b->add_option("--input-size", bench.input_size)->capture_default_str();
    b->add_option("--batch-size", bench.batch_size)->capture_default_str();
    b->add_option("--warmup", bench.warmup)->capture_default_str();
    b->add_option("--reps", bench.reps)->capture_default_str();

    ReplayOpts replay;
    CLI::App* r = app.add_subcommand("replay", "Re-run a recorded command and verify byte identity");
    r->add_option("--run", replay.run_path, "run.json of the command to replay")->required();

    for (CLI::App* sub : app.get_subcommands(nullptr)) sub->fallthrough();

    std::vector<const char*> argv;
    argv.push_back("ptri");
    for (const std::string& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& err) {
        return app.exit(err);
    } catch (const CLI::CallForAllHelp& err) {
        return app.exit(err);
    } catch (const CLI::ParseError& err) {
        throw_usage(err.what());
    }

    fs::create_directories(g.out());
    RunRecord rec;
    if (s->parsed()) {
        cmd_synth(g, synth, rec);
        write_run_json(g, "synth", args, rec);
    } else if (sg->parsed()) {
        cmd_segment(g, segment, rec);
        write_run_json(g, "segment", args, rec);
    } else if (p->parsed()) {
        cmd_patch(g, patch, rec);
        write_run_json(g, "patch", args, rec);
    } else if (t->parsed()) {
        cmd_train(g, train_opts, rec);
        write_run_json(g, "train", args, rec);
    } else if (c->parsed()) {
        cmd_cv(g, cv, rec);
        write_run_json(g, "cv", args, rec);
    } else if (e->parsed()) {
        cmd_eval(g, eval, rec);
        write_run_json(g, "eval", args, rec);
    } else if (in->parsed()) {
        cmd_infer(g, infer, rec);
        write_run_json(g, "infer", args, rec);
    } else if (b->parsed()) {
        cmd_bench(g, bench, rec);
        write_run_json(g, "bench", args, rec);
    } else if (r->parsed()) {
        // Verification only: replay writes no artifacts of its own, so it never
        // clobbers the run.json it is checking.
        cmd_replay(g, replay);
    }
    return 0;
}

}  // namespace ptri::cli
