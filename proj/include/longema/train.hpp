#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "longema/data.hpp"
#include "longema/model.hpp"
#include "longema/numerics.hpp"

namespace longema {

struct TrainConfig {
    std::size_t horizon = 4;
    std::size_t batch_size = 4;
    double lr_main = 2e-5;
    double lr_embedding = 5e-4;
    double weight_decay = 5e-5;
    std::size_t max_epochs = 100;
    std::size_t patience = 20; // epochs without validation improvement
    std::uint64_t seed = 0;
    Variant variant = Variant::Ema2Vec;
    std::size_t hidden_dim = 128;
    std::vector<std::size_t> mlp_dims = {64, 32, 3};
    double dropout_lstm = 0.3;
    double dropout_dense1 = 0.1;
    double dropout_dense2 = 0.2;
    double delta_max_days = kDefaultDeltaMaxDays;
    bool class_weighting = false;
    std::size_t jobs = 1;

    std::size_t embed_K() const {
        if (variant == Variant::Time2Vec) return 7; // output dim 8
        if (variant == Variant::Ema2Vec) return 8;  // output dim 9
        return 0;
    }
    void validate() const;
    std::string digest() const;
};

struct TrainHistory {
    Vec train_loss;
    Vec val_macro_f1;
    Vec val_weighted_f1;
    Vec epoch_seconds;
    std::size_t best_epoch = 0;
};

struct TrainResult {
    ModelParams params; // snapshot from the best-validation epoch
    Normalizer normalizer;
    TrainHistory history;
};

/// Mini-batch Adam training with per-component learning rates and
/// validation-based epoch selection (best weighted F1, earliest on ties).
/// Samples must be labeled and unnormalized; normalization statistics are
/// fit on the training set only.
TrainResult train(const std::vector<LongitudinalSample>& train_set,
                  const std::vector<LongitudinalSample>& val_set,
                  const TrainConfig& config);

/// Mean gradient over a batch (already-normalized samples). The serial
/// version is the reference; the parallel version fans out per sample and
/// reduces in fixed order, so both are bit-identical.
Vec batch_gradient_serial(const std::vector<LongitudinalSample>& samples,
                          const std::vector<std::size_t>& batch,
                          const ModelParams& params,
                          const std::vector<std::uint64_t>& sample_seeds,
                          const Vec& class_weights, double* mean_loss);
Vec batch_gradient_parallel(const std::vector<LongitudinalSample>& samples,
                            const std::vector<std::size_t>& batch,
                            const ModelParams& params,
                            const std::vector<std::uint64_t>& sample_seeds,
                            const Vec& class_weights, double* mean_loss);

void write_history_csv(const TrainHistory& history, const std::string& path);

/// argmax class under eval mode.
int predict(const LongitudinalSample& normalized_sample, const ModelParams& params);

} // namespace longema
