#include "ptri/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "ptri/hash.hpp"
#include "ptri/metrics.hpp"

namespace ptri {

int binary_label(PatchLabel label) { return label == PatchLabel::PositiveTumor ? 1 : 0; }

Tensor<float> image_batch_to_tensor(const std::vector<const ImageU8*>& images) {
    if (images.empty()) throw_data("image batch: empty");
    const int h = images[0]->height, w = images[0]->width;
    Tensor<float> t({static_cast<int>(images.size()), h, w, 3});
    float* dst = t.ptr();
    for (const ImageU8* img : images) {
        if (img->width != w || img->height != h || img->channels != 3)
            throw_data("image batch: mixed dimensions");
        for (std::size_t i = 0; i < img->data.size(); ++i)
            *dst++ = static_cast<float>(img->data[i]) * (1.0f / 255.0f);
    }
    return t;
}

namespace {

std::vector<int> argmax_rows(const Tensor<float>& logits) {
    const int n = logits.dim(0), c = logits.dim(1);
    std::vector<int> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const float* row = logits.ptr() + static_cast<std::ptrdiff_t>(i) * c;
        out[static_cast<std::size_t>(i)] =
            static_cast<int>(std::max_element(row, row + c) - row);
    }
    return out;
}

double evaluate_accuracy(const ModelGraph& model, const std::vector<Patch>& patches,
                         int batch_size) {
    std::vector<int> preds, labels;
    preds.reserve(patches.size());
    labels.reserve(patches.size());
    for (std::size_t start = 0; start < patches.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(patches.size(), start + static_cast<std::size_t>(batch_size));
        std::vector<const ImageU8*> imgs;
        imgs.reserve(end - start);
        for (std::size_t i = start; i < end; ++i) imgs.push_back(&patches[i].pixels);
        const Tensor<float> logits = model.forward(image_batch_to_tensor(imgs));
        for (int p : argmax_rows(logits)) preds.push_back(p);
    }
    for (const Patch& p : patches) labels.push_back(binary_label(p.label));
    return accuracy(preds, labels);
}

}  // namespace

TrainRun train(ModelGraph& model, const std::vector<Patch>& train_patches,
               const std::vector<Patch>& val_patches, const SgdConfig& sgd,
               const std::optional<AugmentConfig>& augment) {
    if (sgd.epochs < 1) throw_data("train: epochs must be at least 1");
    if (sgd.batch_size < 1) throw_data("train: batch size must be at least 1");
    if (train_patches.empty()) throw_data("train: empty training set");
    if (val_patches.empty()) throw_data("train: empty validation set");
    for (const Patch& p : train_patches)
        if (p.pixels.width != model.input_size || p.pixels.height != model.input_size)
            throw_data("train: patch size does not match model input size");

    std::vector<int> labels(train_patches.size());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = binary_label(train_patches[i].label);
    if (std::set<int>(labels.begin(), labels.end()).size() < 2)
        throw_data("train: training set contains a single class");

    TrainRun run;
    run.arch = model.name;
    run.sgd = sgd;
    run.augment = augment;
    run.seed = sgd.seed;

    Rng shuffle_rng = Rng(sgd.seed).split(1);
    Rng aug_rng = augment ? Rng(augment->seed) : Rng(0);

    std::vector<std::size_t> order(train_patches.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    ParamGrads<float> grads;
    ParamGrads<float> velocity;
    if (sgd.momentum != 0.0) velocity = make_zero_grads(model);

    for (int epoch = 0; epoch < sgd.epochs; ++epoch) {
        try {
            for (std::size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[shuffle_rng.uniform_int(0, static_cast<std::uint64_t>(i - 1))]);

            double loss_sum = 0.0;
            std::size_t seen = 0, correct = 0;
            for (std::size_t start = 0; start < order.size();
                 start += static_cast<std::size_t>(sgd.batch_size)) {
                const std::size_t end =
                    std::min(order.size(), start + static_cast<std::size_t>(sgd.batch_size));
                std::vector<ImageU8> augmented;
                std::vector<const ImageU8*> imgs;
                std::vector<int> batch_labels;
                imgs.reserve(end - start);
                batch_labels.reserve(end - start);
                if (augment) augmented.reserve(end - start);
                for (std::size_t i = start; i < end; ++i) {
                    const Patch& p = train_patches[order[i]];
                    if (augment) {
                        augmented.push_back(ptri::augment(p.pixels, sample_draw(*augment, aug_rng)));
                        imgs.push_back(&augmented.back());
                    } else {
                        imgs.push_back(&p.pixels);
                    }
                    batch_labels.push_back(labels[order[i]]);
                }

                const Tensor<float> x = image_batch_to_tensor(imgs);
                const std::vector<Tensor<float>> acts = model.forward_collect(x);
                const LossResult<float> loss = softmax_cross_entropy(acts.back(), batch_labels);
                if (!std::isfinite(loss.loss)) throw_numeric("training loss is non-finite");

                for (std::size_t i = 0; i < batch_labels.size(); ++i) {
                    const float* row = acts.back().ptr() + static_cast<std::ptrdiff_t>(i) * 2;
                    correct += (row[1] > row[0] ? 1 : 0) == batch_labels[i];
                }
                seen += batch_labels.size();
                loss_sum += static_cast<double>(loss.loss) * static_cast<double>(batch_labels.size());

                grads.assign(model.layers.size(), {});
                Tensor<float> g = loss.grad;
                for (std::size_t li = model.layers.size(); li-- > 0;) {
                    g = backward_layer(model.layers[li], model.params[li], acts[li], g, grads[li]);
                    if (!g.all_finite())
                        throw_numeric("non-finite gradient in layer " + model.layers[li].name);
                }
                sgd_step(model, grads, sgd, sgd.momentum != 0.0 ? &velocity : nullptr);
            }

            EpochRecord rec;
            rec.train_loss = loss_sum / static_cast<double>(seen);
            rec.train_acc = static_cast<double>(correct) / static_cast<double>(seen);
            rec.val_acc = evaluate_accuracy(model, val_patches, sgd.batch_size);
            run.epochs.push_back(rec);
        } catch (const Error& e) {
            if (e.category() == ErrorCategory::Numeric)
                throw_numeric("epoch " + std::to_string(epoch + 1) + ": " + e.what());
            throw;
        }
    }
    return run;
}

std::vector<double> predict_scores(const ModelGraph& model, const std::vector<Patch>& patches,
                                   int batch_size) {
    std::vector<double> scores;
    scores.reserve(patches.size());
    for (std::size_t start = 0; start < patches.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(patches.size(), start + static_cast<std::size_t>(batch_size));
        std::vector<const ImageU8*> imgs;
        imgs.reserve(end - start);
        for (std::size_t i = start; i < end; ++i) imgs.push_back(&patches[i].pixels);
        const Tensor<float> probs = softmax_forward(model.forward(image_batch_to_tensor(imgs)));
        for (std::size_t i = 0; i < end - start; ++i)
            scores.push_back(static_cast<double>(probs.ptr()[i * 2 + 1]));
    }
    return scores;
}

std::vector<int> predict_binary(const std::vector<double>& scores) {
    std::vector<int> preds(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) preds[i] = scores[i] > 0.5 ? 1 : 0;
    return preds;
}

std::string format_mean_std(double mean, double std) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f ± %.3f", mean, std);
    return buf;
}

std::string CvReport::train_summary() const { return format_mean_std(train_mean, train_std); }
std::string CvReport::val_summary() const { return format_mean_std(val_mean, val_std); }

namespace {

std::pair<double, double> mean_and_population_std(const std::vector<double>& xs) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size());
    return {mean, std::sqrt(var)};
}

std::uint64_t hash_patches(const std::vector<const Patch*>& patches) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const Patch* p : patches) {
        h = fnv1a64(p->pixels.data.data(), p->pixels.data.size(), h);
        const std::uint8_t label = static_cast<std::uint8_t>(binary_label(p->label));
        h = fnv1a64(&label, 1, h);
    }
    return h;
}

}  // namespace

CvReport cross_validate(const std::vector<Patch>& patches, const FoldAssignment& folds,
                        const CvConfig& config, std::vector<TrainRun>* runs) {
    if (folds.k < 2) throw_data("cross_validate: need at least 2 folds");
    if (patches.empty()) throw_data("cross_validate: no patches");

    std::vector<int> patch_fold(patches.size());
    for (std::size_t i = 0; i < patches.size(); ++i) {
        const auto it = folds.fold_of.find(patches[i].slide_id);
        if (it == folds.fold_of.end())
            throw_data("cross_validate: slide " + patches[i].slide_id + " has no fold assignment");
        patch_fold[i] = it->second;
    }

    CvReport report;
    report.k = folds.k;
    for (int fold = 0; fold < folds.k; ++fold) {
        std::vector<Patch> train_set, val_set;
        std::set<std::string> train_slides, val_slides;
        std::vector<const Patch*> val_ptrs;
        for (std::size_t i = 0; i < patches.size(); ++i) {
            if (patch_fold[i] == fold) {
                val_set.push_back(patches[i]);
                val_slides.insert(patches[i].slide_id);
            } else {
                train_set.push_back(patches[i]);
                train_slides.insert(patches[i].slide_id);
            }
        }
        for (const Patch& p : val_set) val_ptrs.push_back(&p);
        for (const auto& id : val_slides)
            if (train_slides.count(id))
                throw_data("cross_validate: slide " + id + " leaked between folds");

        const std::uint64_t fold_tag = static_cast<std::uint64_t>(fold);
        ModelGraph model = build(config.arch, config.input_size,
                                 detail::splitmix64(config.seed ^ detail::splitmix64(fold_tag)));
        SgdConfig sgd = config.sgd;
        sgd.seed = detail::splitmix64(config.sgd.seed ^ detail::splitmix64(fold_tag + 101));
        std::optional<AugmentConfig> augment = config.augment;
        if (augment)
            augment->seed = detail::splitmix64(augment->seed ^ detail::splitmix64(fold_tag + 211));

        TrainRun run = train(model, train_set, val_set, sgd, augment);
        run.fold = fold;
        report.fold_train_acc.push_back(run.epochs.back().train_acc);
        report.fold_val_acc.push_back(run.epochs.back().val_acc);
        report.fold_val_hash.push_back(hash_patches(val_ptrs));
        if (runs) runs->push_back(std::move(run));
    }

    std::tie(report.train_mean, report.train_std) = mean_and_population_std(report.fold_train_acc);
    std::tie(report.val_mean, report.val_std) = mean_and_population_std(report.fold_val_acc);
    return report;
}

}  // namespace ptri
