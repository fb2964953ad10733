#include "longema/embeddings.hpp"

#include <cmath>
#include <fstream>
#include <limits>

namespace longema {

namespace {

constexpr double kSqrtEps = 1e-8; // clamps the sqrt-activation gradient at delta = 0
constexpr double kPi = 3.14159265358979323846;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Activation value for ema2vec dimension k at delay delta.
double ema_basis(double delta, std::size_t k, std::size_t K) {
    if (k == 0) return delta;
    if (k <= K / 2) return delta * delta;
    return std::sqrt(delta + kSqrtEps);
}

} // namespace

std::string to_string(EmbeddingKind kind) {
    switch (kind) {
        case EmbeddingKind::Time2Vec: return "time2vec";
        case EmbeddingKind::Ema2Vec: return "ema2vec";
        case EmbeddingKind::TimeConcat: return "timeconcat";
    }
    return "unknown";
}

EmbeddingKind embedding_kind_from_string(const std::string& name) {
    if (name == "time2vec") return EmbeddingKind::Time2Vec;
    if (name == "ema2vec") return EmbeddingKind::Ema2Vec;
    if (name == "timeconcat") return EmbeddingKind::TimeConcat;
    throw FormatError("unknown embedding kind: " + name);
}

TimeEmbeddingParams init_embedding_params(EmbeddingKind kind, std::size_t K,
                                          std::mt19937_64& rng) {
    TimeEmbeddingParams p;
    p.kind = kind;
    if (kind == EmbeddingKind::TimeConcat) return p;
    if (kind == EmbeddingKind::Ema2Vec && K % 2 != 0)
        throw ContractViolationError("ema2vec requires even K");
    // Deltas are scaled to [0, 1]; sinusoidal dims start with frequencies
    // spanning that domain (random-Fourier-feature style) so the basis has
    // curvature from the first step.
    const double w_range = kind == EmbeddingKind::Time2Vec ? 2.0 * kPi : 1.0;
    std::uniform_real_distribution<double> weight_dist(-w_range, w_range);
    std::uniform_real_distribution<double> bias_dist(-0.5, 0.5);
    p.weights.resize(K + 1);
    p.biases.resize(K + 1);
    for (auto& w : p.weights) w = weight_dist(rng);
    for (auto& b : p.biases) b = bias_dist(rng);
    return p;
}

Vec time2vec(double tau, const TimeEmbeddingParams& params) {
    if (params.kind != EmbeddingKind::Time2Vec)
        throw ContractViolationError("time2vec: wrong params kind");
    if (!std::isfinite(tau))
        throw ContractViolationError("time2vec: invoked with missing input");
    const std::size_t dims = params.weights.size();
    Vec out(dims);
    out[0] = sigmoid(params.weights[0] * tau + params.biases[0]);
    for (std::size_t k = 1; k < dims; ++k)
        out[k] = sigmoid(std::sin(params.weights[k] * tau + params.biases[k]));
    return out;
}

Vec ema2vec(double delta, const TimeEmbeddingParams& params) {
    if (params.kind != EmbeddingKind::Ema2Vec)
        throw ContractViolationError("ema2vec: wrong params kind");
    if (!std::isfinite(delta))
        throw ContractViolationError("ema2vec: invoked with missing input");
    const std::size_t dims = params.weights.size();
    const std::size_t K = dims - 1;
    Vec out(dims);
    double norm_sq = 0.0;
    for (std::size_t k = 0; k < dims; ++k) {
        out[k] = params.weights[k] * ema_basis(delta, k, K) + params.biases[k];
        norm_sq += out[k] * out[k];
    }
    const double norm = std::sqrt(norm_sq);
    if (norm < 1e-12)
        throw DegenerateInputError("ema2vec: embedding parameters collapsed to zero norm");
    for (auto& v : out) v /= norm;
    return out;
}

Vec embed(double delta, const TimeEmbeddingParams& params) {
    switch (params.kind) {
        case EmbeddingKind::Time2Vec: return time2vec(delta, params);
        case EmbeddingKind::Ema2Vec: return ema2vec(delta, params);
        case EmbeddingKind::TimeConcat:
            if (!std::isfinite(delta))
                throw ContractViolationError("timeconcat: invoked with missing input");
            return Vec{delta};
    }
    throw ContractViolationError("embed: unknown kind");
}

Matrix embed_jacobian(double delta, const TimeEmbeddingParams& params) {
    const std::size_t dims = params.weights.size();
    const std::size_t np = params.param_count();
    Matrix jac(params.dims(), np);
    if (params.kind == EmbeddingKind::TimeConcat) return jac;

    if (params.kind == EmbeddingKind::Time2Vec) {
        for (std::size_t k = 0; k < dims; ++k) {
            const double u = params.weights[k] * delta + params.biases[k];
            double dpre_du; // derivative of the pre-sigmoid value w.r.t. u
            double s;
            if (k == 0) {
                s = sigmoid(u);
                dpre_du = 1.0;
            } else {
                s = sigmoid(std::sin(u));
                dpre_du = std::cos(u);
            }
            const double dsig = s * (1.0 - s) * dpre_du;
            jac(k, k) = dsig * delta;    // d/dw_k
            jac(k, dims + k) = dsig;     // d/db_k
        }
        return jac;
    }

    // ema2vec: e = v / ||v||, v_k = a_k * basis_k + b_k
    const std::size_t K = dims - 1;
    Vec v(dims);
    double norm_sq = 0.0;
    for (std::size_t k = 0; k < dims; ++k) {
        v[k] = params.weights[k] * ema_basis(delta, k, K) + params.biases[k];
        norm_sq += v[k] * v[k];
    }
    const double norm = std::sqrt(norm_sq);
    if (norm < 1e-12)
        throw DegenerateInputError("ema2vec: embedding parameters collapsed to zero norm");
    Vec e(dims);
    for (std::size_t k = 0; k < dims; ++k) e[k] = v[k] / norm;

    // de_j/dv_m = (delta_jm - e_j e_m) / ||v||; each parameter touches one v_m.
    for (std::size_t m = 0; m < dims; ++m) {
        const double basis = ema_basis(delta, m, K);
        for (std::size_t j = 0; j < dims; ++j) {
            const double de_dv = ((j == m ? 1.0 : 0.0) - e[j] * e[m]) / norm;
            jac(j, m) = de_dv * basis;    // d/da_m
            jac(j, dims + m) = de_dv;     // d/db_m
        }
    }
    return jac;
}

std::vector<Vec> embed_sequence(const Vec& deltas,
                                const std::vector<std::uint8_t>& mask,
                                const TimeEmbeddingParams& params) {
    if (mask.size() != deltas.size())
        throw ContractViolationError("embed_sequence: mask length mismatch");
    std::vector<Vec> out(deltas.size());
    for (std::size_t h = 0; h < deltas.size(); ++h)
        if (mask[h]) out[h] = embed(deltas[h], params);
    return out;
}

Vec similarity_profile(const Vec& deltas, const TimeEmbeddingParams& params) {
    Vec profile(deltas.size());
    const Vec target = embed(deltas[0], params);
    for (std::size_t h = 0; h < deltas.size(); ++h)
        profile[h] = cosine_similarity(target, embed(deltas[h], params));
    return profile;
}

ClassProfiles class_average_profiles(const std::vector<Vec>& delta_sequences,
                                     const std::vector<int>& trend_classes,
                                     std::size_t n_classes,
                                     const TimeEmbeddingParams& params) {
    if (delta_sequences.size() != trend_classes.size())
        throw ContractViolationError("class_average_profiles: size mismatch");
    ClassProfiles out;
    out.mean_profile.assign(n_classes, Vec());
    out.class_size.assign(n_classes, 0);
    for (std::size_t i = 0; i < delta_sequences.size(); ++i) {
        const int c = trend_classes[i];
        if (c < 0 || static_cast<std::size_t>(c) >= n_classes) continue;
        bool all_valid = true;
        for (double d : delta_sequences[i])
            if (!std::isfinite(d)) { all_valid = false; break; }
        if (!all_valid) continue;
        const Vec profile = similarity_profile(delta_sequences[i], params);
        auto& acc = out.mean_profile[static_cast<std::size_t>(c)];
        if (acc.empty()) acc.assign(profile.size(), 0.0);
        if (acc.size() != profile.size()) continue; // mixed horizons not averaged
        for (std::size_t h = 0; h < profile.size(); ++h) acc[h] += profile[h];
        ++out.class_size[static_cast<std::size_t>(c)];
    }
    for (std::size_t c = 0; c < n_classes; ++c)
        if (out.class_size[c] > 0)
            for (auto& v : out.mean_profile[c]) v /= static_cast<double>(out.class_size[c]);
    return out;
}

void write_profiles_csv(const ClassProfiles& profiles, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out << "class,h,similarity\n";
    for (std::size_t c = 0; c < profiles.mean_profile.size(); ++c)
        for (std::size_t h = 0; h < profiles.mean_profile[c].size(); ++h)
            out << c << ',' << h << ',' << profiles.mean_profile[c][h] << '\n';
}

} // namespace longema
