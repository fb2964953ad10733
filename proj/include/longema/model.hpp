#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "longema/embeddings.hpp"
#include "longema/features.hpp"
#include "longema/numerics.hpp"

namespace longema {

enum class Variant { LstmDay, LongLstm, TimeConcat, Time2Vec, Ema2Vec };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);

/// Shape metadata for one model instance. All parameter offsets into the
/// flat vector derive from this.
struct ModelShape {
    Variant variant = Variant::LongLstm;
    std::size_t channels = 10;     // F sensing channels
    std::size_t hidden_dim = 128;
    std::size_t covariate_dim = 10;
    std::vector<std::size_t> mlp_dims = {64, 32, 3}; // last entry = classes
    std::size_t embed_K = 0;       // 7 for time2vec, 8 for ema2vec
    double dropout_lstm = 0.3;
    double dropout_dense1 = 0.1;
    double dropout_dense2 = 0.2;

    std::size_t feature_dim() const {
        return variant == Variant::LstmDay ? channels
                                           : kFunctionalsPerChannel * channels;
    }
    std::size_t embed_dim() const {
        switch (variant) {
            case Variant::Time2Vec:
            case Variant::Ema2Vec: return embed_K + 1;
            case Variant::TimeConcat: return 1;
            default: return 0;
        }
    }
    std::size_t input_dim() const { return feature_dim() + embed_dim(); }
    std::size_t n_classes() const { return mlp_dims.back(); }
    std::size_t lstm_param_count() const {
        return 4 * (hidden_dim * input_dim() + hidden_dim * hidden_dim + hidden_dim);
    }
    std::size_t mlp_param_count() const {
        std::size_t n = 0, in = hidden_dim + covariate_dim;
        for (std::size_t d : mlp_dims) { n += d * in + d; in = d; }
        return n;
    }
    std::size_t embed_param_count() const {
        return (variant == Variant::Time2Vec || variant == Variant::Ema2Vec)
                   ? 2 * (embed_K + 1)
                   : 0;
    }
    std::size_t param_count() const {
        return lstm_param_count() + mlp_param_count() + embed_param_count();
    }
    /// Offset of the embedding segment within the flat vector.
    std::size_t embed_offset() const { return lstm_param_count() + mlp_param_count(); }

    bool operator==(const ModelShape&) const = default;
};

/// All learnable parameters as one flat vector; layout is
/// [4x(W,U,b) LSTM gates | MLP layers (W,b) | embedding weights, biases].
struct ModelParams {
    ModelShape shape;
    Vec flat;

    TimeEmbeddingParams embedding_params() const;
    void set_embedding_params(const TimeEmbeddingParams& p);
};

ModelParams init_params(const ModelShape& shape, std::mt19937_64& rng);

enum class Mode { Train, Eval };

/// Everything the backward pass needs to reproduce the forward exactly.
struct ForwardTrace {
    ModelShape shape;
    Mode mode = Mode::Eval;
    std::vector<Vec> inputs;     // per fed step, length input_dim
    Vec step_deltas;             // scaled delay per fed step (NaN when unused)
    std::vector<Vec> gate_i, gate_f, gate_g, gate_o;
    std::vector<Vec> cell, hidden;
    Vec drop_z, drop_d1, drop_d2; // inverted-dropout scale factors (train mode)
    Vec covariates;
    Vec mlp_pre1, mlp_act1, mlp_pre2, mlp_act2, logits, probabilities;
};

struct ForwardResult {
    Vec probabilities;
    ForwardTrace trace;
};

/// Longitudinal forward: steps fed oldest-valid-first, masked steps
/// skipped with state carried through. Throws UnusableSampleError when
/// every step is masked. Sample features must already be normalized.
ForwardResult forward(const LongitudinalSample& sample, const ModelParams& params,
                      Mode mode, std::uint64_t rng_seed);

/// Standard stress-prediction baseline: LSTM over the raw day-long
/// sequence (one step per row of `day`, fed in time order), same MLP head.
ForwardResult forward_standard(const Matrix& day, const Vec& covariates,
                               const ModelParams& params, Mode mode,
                               std::uint64_t rng_seed);

/// Repackages a record's raw day sequence as a sample the lstm_day
/// variant can train on: daily[t] = row t (NaN where unobserved),
/// step_mask all valid, deltas unused.
LongitudinalSample standard_sample_from_record(const EmaRecord& record);

/// Cross-entropy -log p[label]; optional per-class weights.
double loss(const Vec& probabilities, int label, const Vec& class_weights = {});

/// Gradient of loss(forward(...)) w.r.t. every parameter, flat.
Vec backward(const ForwardTrace& trace, int label, const ModelParams& params,
             const Vec& class_weights = {});

/// Per-feature z-scoring statistics, fit on training data only.
struct Normalizer {
    Vec feature_mean, feature_std; // daily functionals (or raw channels for lstm_day)
    Vec cov_mean, cov_std;

    /// Returns a copy of the sample with z-scored features; NaN (missing
    /// functionals) become 0 after scaling, i.e. train-mean imputation.
    LongitudinalSample apply(const LongitudinalSample& sample) const;
    Vec apply_covariates(const Vec& cov) const;
};

/// Statistics over valid steps' features and covariates; works for both
/// longitudinal samples and lstm_day pseudo-samples.
Normalizer fit_normalizer(const std::vector<LongitudinalSample>& train_samples);

} // namespace longema
