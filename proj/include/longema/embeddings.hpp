#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "longema/numerics.hpp"

namespace longema {

enum class EmbeddingKind { Time2Vec, Ema2Vec, TimeConcat };

std::string to_string(EmbeddingKind kind);
EmbeddingKind embedding_kind_from_string(const std::string& name);

/// Learnable weights of a time-embedding module. For time2vec, weights
/// are the frequencies and biases the phases; for ema2vec they are the
/// per-dimension (a, b) pairs. TimeConcat carries no parameters.
struct TimeEmbeddingParams {
    EmbeddingKind kind = EmbeddingKind::TimeConcat;
    Vec weights; // length K+1 (empty for timeconcat)
    Vec biases;  // length K+1 (empty for timeconcat)

    std::size_t dims() const {
        return kind == EmbeddingKind::TimeConcat ? 1 : weights.size();
    }
    std::size_t param_count() const { return weights.size() + biases.size(); }
};

/// K+1 output dims for time2vec/ema2vec; ema2vec requires even K.
TimeEmbeddingParams init_embedding_params(EmbeddingKind kind, std::size_t K,
                                          std::mt19937_64& rng);

Vec time2vec(double tau, const TimeEmbeddingParams& params);
Vec ema2vec(double delta, const TimeEmbeddingParams& params);

/// Dispatch on params.kind; timeconcat returns the scalar delay.
Vec embed(double delta, const TimeEmbeddingParams& params);

/// d(embed)/d(weights, biases) stacked as a (dims x param_count) Jacobian,
/// columns ordered weights then biases. Empty for timeconcat.
Matrix embed_jacobian(double delta, const TimeEmbeddingParams& params);

/// Elementwise embedding honoring the validity mask; masked positions
/// yield empty vectors.
std::vector<Vec> embed_sequence(const Vec& deltas,
                                const std::vector<std::uint8_t>& mask,
                                const TimeEmbeddingParams& params);

/// profile[h] = cos(embed(deltas[0]), embed(deltas[h])). All positions
/// must be valid.
Vec similarity_profile(const Vec& deltas, const TimeEmbeddingParams& params);

struct ClassProfiles {
    std::vector<Vec> mean_profile;       // one per class (may be empty)
    std::vector<std::size_t> class_size; // sample counts per class
};

/// Arithmetic mean of similarity profiles per trend class; samples whose
/// profile cannot be computed over the full horizon are skipped.
ClassProfiles class_average_profiles(const std::vector<Vec>& delta_sequences,
                                     const std::vector<int>& trend_classes,
                                     std::size_t n_classes,
                                     const TimeEmbeddingParams& params);

void write_profiles_csv(const ClassProfiles& profiles, const std::string& path);

} // namespace longema
