#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ptri/augment.hpp"
#include "ptri/graph.hpp"
#include "ptri/patcher.hpp"
#include "ptri/zoo.hpp"

namespace ptri {

// Binary task: tumor-positive patches vs everything else.
int binary_label(PatchLabel label);

// Stacks equal-sized RGB images into a [B,H,W,3] float tensor scaled to [0,1].
Tensor<float> image_batch_to_tensor(const std::vector<const ImageU8*>& images);

struct EpochRecord {
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_acc = 0.0;
};

struct TrainRun {
    std::string arch;
    SgdConfig sgd;
    std::optional<AugmentConfig> augment;
    int fold = -1;  // fold index during cross-validation, -1 otherwise
    std::vector<EpochRecord> epochs;
    std::string checkpoint_path;
    std::uint64_t seed = 0;
};

// Trains the model in place. Batches are reshuffled every epoch from the SGD
// seed; augmentation (when given) draws one transform per training sample and
// never touches validation data.
TrainRun train(ModelGraph& model, const std::vector<Patch>& train_patches,
               const std::vector<Patch>& val_patches, const SgdConfig& sgd,
               const std::optional<AugmentConfig>& augment);

// Tumor-class probability per patch, in input order.
std::vector<double> predict_scores(const ModelGraph& model, const std::vector<Patch>& patches,
                                   int batch_size = 32);

std::vector<int> predict_binary(const std::vector<double>& scores);

struct CvReport {
    int k = 0;
    std::vector<double> fold_train_acc;
    std::vector<double> fold_val_acc;
    // Fingerprint of each fold's validation pixels+labels; augmentation must
    // not change these.
    std::vector<std::uint64_t> fold_val_hash;
    double train_mean = 0.0, train_std = 0.0;
    double val_mean = 0.0, val_std = 0.0;

    std::string train_summary() const;
    std::string val_summary() const;
};

std::string format_mean_std(double mean, double std);

struct CvConfig {
    ArchitectureId arch = ArchitectureId::MobileMini;
    int input_size = 64;
    SgdConfig sgd;
    std::optional<AugmentConfig> augment;
    std::uint64_t seed = 0;
};

// Slide-level k-fold cross-validation over extracted patches. Per-fold model
// and shuffle seeds derive deterministically from config.seed.
CvReport cross_validate(const std::vector<Patch>& patches, const FoldAssignment& folds,
                        const CvConfig& config, std::vector<TrainRun>* runs = nullptr);

}  // namespace ptri
