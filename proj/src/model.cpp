#include "longema/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace longema {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::size_t kGates = 4; // i, f, g, o

struct Layout {
    std::size_t input, hidden;
    std::size_t gate_block; // per-gate parameter count

    explicit Layout(const ModelShape& s)
        : input(s.input_dim()), hidden(s.hidden_dim),
          gate_block(s.hidden_dim * s.input_dim() + s.hidden_dim * s.hidden_dim +
                     s.hidden_dim) {}

    std::size_t W(std::size_t gate) const { return gate * gate_block; }
    std::size_t U(std::size_t gate) const { return gate * gate_block + hidden * input; }
    std::size_t b(std::size_t gate) const {
        return gate * gate_block + hidden * input + hidden * hidden;
    }
};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// y += M x, M row-major (rows x cols) stored in flat at `off`.
void matvec_add(const Vec& flat, std::size_t off, std::size_t rows, std::size_t cols,
                const Vec& x, Vec& y) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = flat.data() + off + r * cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
        y[r] += acc;
    }
}

// y += M^T d
void matvec_t_add(const Vec& flat, std::size_t off, std::size_t rows, std::size_t cols,
                  const Vec& d, Vec& y) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = flat.data() + off + r * cols;
        for (std::size_t c = 0; c < cols; ++c) y[c] += row[c] * d[r];
    }
}

// grad[off + r*cols + c] += d[r] * x[c]
void outer_add(Vec& grad, std::size_t off, const Vec& d, const Vec& x) {
    for (std::size_t r = 0; r < d.size(); ++r) {
        double* row = grad.data() + off + r * x.size();
        for (std::size_t c = 0; c < x.size(); ++c) row[c] += d[r] * x[c];
    }
}

Vec dropout_mask(std::mt19937_64& rng, std::size_t n, double rate) {
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    Vec mask(n);
    const double keep = 1.0 - rate;
    for (auto& m : mask) m = (dist(rng) < keep) ? 1.0 / keep : 0.0;
    return mask;
}

ForwardResult run_core(const std::vector<Vec>& step_features, const Vec& step_deltas,
                       const Vec& covariates, const ModelParams& params, Mode mode,
                       std::uint64_t rng_seed) {
    const ModelShape& shape = params.shape;
    if (shape.mlp_dims.size() != 3)
        throw ContractViolationError("model: expected exactly 3 MLP layers");
    if (params.flat.size() != shape.param_count())
        throw ContractViolationError("model: parameter vector does not match shape");
    if (covariates.size() != shape.covariate_dim)
        throw ContractViolationError("model: covariate dimension mismatch");
    if (step_features.empty())
        throw UnusableSampleError("model: every step of the sample is masked");

    const Layout lay(shape);
    const std::size_t hid = shape.hidden_dim;
    const std::size_t in = shape.input_dim();
    const std::size_t feat = shape.feature_dim();
    const std::size_t edim = shape.embed_dim();
    const bool learned_embed =
        shape.variant == Variant::Time2Vec || shape.variant == Variant::Ema2Vec;
    const TimeEmbeddingParams emb = params.embedding_params();

    ForwardResult res;
    ForwardTrace& tr = res.trace;
    tr.shape = shape;
    tr.mode = mode;
    tr.covariates = covariates;
    tr.step_deltas = step_deltas;

    Vec h(hid, 0.0), c(hid, 0.0);
    for (std::size_t t = 0; t < step_features.size(); ++t) {
        if (step_features[t].size() != feat)
            throw ContractViolationError("model: step feature dimension mismatch");
        Vec x(in);
        std::copy(step_features[t].begin(), step_features[t].end(), x.begin());
        if (edim > 0) {
            Vec e = learned_embed ? embed(step_deltas[t], emb) : Vec{step_deltas[t]};
            std::copy(e.begin(), e.end(), x.begin() + static_cast<std::ptrdiff_t>(feat));
        }

        Vec a[kGates];
        for (std::size_t g = 0; g < kGates; ++g) {
            a[g].assign(hid, 0.0);
            matvec_add(params.flat, lay.W(g), hid, in, x, a[g]);
            matvec_add(params.flat, lay.U(g), hid, hid, h, a[g]);
            for (std::size_t r = 0; r < hid; ++r) a[g][r] += params.flat[lay.b(g) + r];
        }
        Vec gi(hid), gf(hid), gg(hid), go(hid);
        for (std::size_t r = 0; r < hid; ++r) {
            gi[r] = sigmoid(a[0][r]);
            gf[r] = sigmoid(a[1][r]);
            gg[r] = std::tanh(a[2][r]);
            go[r] = sigmoid(a[3][r]);
            c[r] = gf[r] * c[r] + gi[r] * gg[r];
            h[r] = go[r] * std::tanh(c[r]);
        }
        tr.inputs.push_back(std::move(x));
        tr.gate_i.push_back(std::move(gi));
        tr.gate_f.push_back(std::move(gf));
        tr.gate_g.push_back(std::move(gg));
        tr.gate_o.push_back(std::move(go));
        tr.cell.push_back(c);
        tr.hidden.push_back(h);
    }

    std::mt19937_64 rng(rng_seed);
    if (mode == Mode::Train) {
        tr.drop_z = dropout_mask(rng, hid, shape.dropout_lstm);
        tr.drop_d1 = dropout_mask(rng, shape.mlp_dims[0], shape.dropout_dense1);
        tr.drop_d2 = dropout_mask(rng, shape.mlp_dims[1], shape.dropout_dense2);
    } else {
        tr.drop_z.assign(hid, 1.0);
        tr.drop_d1.assign(shape.mlp_dims[0], 1.0);
        tr.drop_d2.assign(shape.mlp_dims[1], 1.0);
    }

    // MLP head over [z (dropped), covariates]
    Vec a0(hid + shape.covariate_dim);
    for (std::size_t r = 0; r < hid; ++r) a0[r] = h[r] * tr.drop_z[r];
    std::copy(covariates.begin(), covariates.end(),
              a0.begin() + static_cast<std::ptrdiff_t>(hid));

    std::size_t off = shape.lstm_param_count();
    const std::size_t d1 = shape.mlp_dims[0], d2 = shape.mlp_dims[1],
                      d3 = shape.mlp_dims[2];

    tr.mlp_pre1.assign(d1, 0.0);
    matvec_add(params.flat, off, d1, a0.size(), a0, tr.mlp_pre1);
    for (std::size_t r = 0; r < d1; ++r) tr.mlp_pre1[r] += params.flat[off + d1 * a0.size() + r];
    off += d1 * a0.size() + d1;
    tr.mlp_act1.assign(d1, 0.0);
    Vec act1d(d1);
    for (std::size_t r = 0; r < d1; ++r) {
        tr.mlp_act1[r] = std::max(0.0, tr.mlp_pre1[r]);
        act1d[r] = tr.mlp_act1[r] * tr.drop_d1[r];
    }

    tr.mlp_pre2.assign(d2, 0.0);
    matvec_add(params.flat, off, d2, d1, act1d, tr.mlp_pre2);
    for (std::size_t r = 0; r < d2; ++r) tr.mlp_pre2[r] += params.flat[off + d2 * d1 + r];
    off += d2 * d1 + d2;
    tr.mlp_act2.assign(d2, 0.0);
    Vec act2d(d2);
    for (std::size_t r = 0; r < d2; ++r) {
        tr.mlp_act2[r] = std::max(0.0, tr.mlp_pre2[r]);
        act2d[r] = tr.mlp_act2[r] * tr.drop_d2[r];
    }

    tr.logits.assign(d3, 0.0);
    matvec_add(params.flat, off, d3, d2, act2d, tr.logits);
    for (std::size_t r = 0; r < d3; ++r) tr.logits[r] += params.flat[off + d3 * d2 + r];

    const double mx = *std::max_element(tr.logits.begin(), tr.logits.end());
    double denom = 0.0;
    tr.probabilities.assign(d3, 0.0);
    for (std::size_t r = 0; r < d3; ++r) {
        tr.probabilities[r] = std::exp(tr.logits[r] - mx);
        denom += tr.probabilities[r];
    }
    for (auto& p : tr.probabilities) p /= denom;
    res.probabilities = tr.probabilities;
    return res;
}

} // namespace

std::string to_string(Variant v) {
    switch (v) {
        case Variant::LstmDay: return "lstm";
        case Variant::LongLstm: return "long";
        case Variant::TimeConcat: return "timeconcat";
        case Variant::Time2Vec: return "time2vec";
        case Variant::Ema2Vec: return "ema2vec";
    }
    return "unknown";
}

Variant variant_from_string(const std::string& name) {
    if (name == "lstm" || name == "lstm_day") return Variant::LstmDay;
    if (name == "long" || name == "long_lstm") return Variant::LongLstm;
    if (name == "timeconcat") return Variant::TimeConcat;
    if (name == "time2vec") return Variant::Time2Vec;
    if (name == "ema2vec") return Variant::Ema2Vec;
    throw FormatError("unknown model variant: " + name);
}

TimeEmbeddingParams ModelParams::embedding_params() const {
    TimeEmbeddingParams p;
    switch (shape.variant) {
        case Variant::Time2Vec: p.kind = EmbeddingKind::Time2Vec; break;
        case Variant::Ema2Vec: p.kind = EmbeddingKind::Ema2Vec; break;
        default: p.kind = EmbeddingKind::TimeConcat; return p;
    }
    const std::size_t dims = shape.embed_K + 1;
    const std::size_t off = shape.embed_offset();
    p.weights.assign(flat.begin() + off, flat.begin() + off + dims);
    p.biases.assign(flat.begin() + off + dims, flat.begin() + off + 2 * dims);
    return p;
}

void ModelParams::set_embedding_params(const TimeEmbeddingParams& p) {
    if (shape.embed_param_count() != p.param_count())
        throw ContractViolationError("set_embedding_params: size mismatch");
    const std::size_t off = shape.embed_offset();
    std::copy(p.weights.begin(), p.weights.end(), flat.begin() + off);
    std::copy(p.biases.begin(), p.biases.end(), flat.begin() + off + p.weights.size());
}

ModelParams init_params(const ModelShape& shape, std::mt19937_64& rng) {
    ModelParams params;
    params.shape = shape;
    params.flat.assign(shape.param_count(), 0.0);

    const Layout lay(shape);
    const std::size_t hid = shape.hidden_dim;
    const double lstm_limit = 1.0 / std::sqrt(static_cast<double>(hid));
    std::uniform_real_distribution<double> lstm_dist(-lstm_limit, lstm_limit);
    for (std::size_t g = 0; g < kGates; ++g) {
        for (std::size_t i = 0; i < hid * shape.input_dim(); ++i)
            params.flat[lay.W(g) + i] = lstm_dist(rng);
        for (std::size_t i = 0; i < hid * hid; ++i)
            params.flat[lay.U(g) + i] = lstm_dist(rng);
        if (g == 1) // forget gate bias starts open
            for (std::size_t i = 0; i < hid; ++i) params.flat[lay.b(g) + i] = 1.0;
    }

    std::size_t off = shape.lstm_param_count();
    std::size_t fan_in = hid + shape.covariate_dim;
    for (std::size_t d : shape.mlp_dims) {
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
        std::uniform_real_distribution<double> he(-limit, limit);
        for (std::size_t i = 0; i < d * fan_in; ++i) params.flat[off + i] = he(rng);
        off += d * fan_in + d; // biases stay zero
        fan_in = d;
    }

    if (shape.embed_param_count() > 0) {
        const EmbeddingKind kind = shape.variant == Variant::Time2Vec
                                       ? EmbeddingKind::Time2Vec
                                       : EmbeddingKind::Ema2Vec;
        params.set_embedding_params(init_embedding_params(kind, shape.embed_K, rng));
    }
    return params;
}

ForwardResult forward(const LongitudinalSample& sample, const ModelParams& params,
                      Mode mode, std::uint64_t rng_seed) {
    std::vector<Vec> steps;
    Vec deltas;
    if (params.shape.variant == Variant::LstmDay) {
        for (std::size_t t = 0; t < sample.daily.size(); ++t) {
            if (!sample.step_mask[t]) continue;
            steps.push_back(sample.daily[t]);
            deltas.push_back(kNaN);
        }
    } else {
        // oldest valid step first, target (h=0) last
        for (std::size_t k = sample.daily.size(); k-- > 0;) {
            if (!sample.step_mask[k]) continue;
            steps.push_back(sample.daily[k]);
            deltas.push_back(sample.deltas[k]);
        }
    }
    return run_core(steps, deltas, sample.covariates, params, mode, rng_seed);
}

ForwardResult forward_standard(const Matrix& day, const Vec& covariates,
                               const ModelParams& params, Mode mode,
                               std::uint64_t rng_seed) {
    if (params.shape.variant != Variant::LstmDay)
        throw ContractViolationError("forward_standard: params variant must be lstm_day");
    std::vector<Vec> steps;
    Vec deltas(day.rows, kNaN);
    steps.reserve(day.rows);
    for (std::size_t t = 0; t < day.rows; ++t)
        steps.emplace_back(day.data.begin() + t * day.cols,
                           day.data.begin() + (t + 1) * day.cols);
    return run_core(steps, deltas, covariates, params, mode, rng_seed);
}

LongitudinalSample standard_sample_from_record(const EmaRecord& record) {
    LongitudinalSample s;
    s.student_id = record.student_id;
    s.target_time = record.timestamp;
    s.covariates = covariates_for(record);
    const std::size_t T = record.day.steps(), F = record.day.channels();
    s.daily.assign(T, Vec(F, 0.0));
    s.deltas.assign(T, kNaN);
    s.delta_days.assign(T, kNaN);
    s.step_mask.assign(T, 1);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t f = 0; f < F; ++f)
            s.daily[t][f] = record.day.is_observed(t, f) ? record.day.values(t, f) : kNaN;
    return s;
}

double loss(const Vec& probabilities, int label, const Vec& class_weights) {
    if (label < 0 || static_cast<std::size_t>(label) >= probabilities.size())
        throw ContractViolationError("loss: label out of range");
    const double w = class_weights.empty()
                         ? 1.0
                         : class_weights[static_cast<std::size_t>(label)];
    return -w * std::log(probabilities[static_cast<std::size_t>(label)]);
}

Vec backward(const ForwardTrace& tr, int label, const ModelParams& params,
             const Vec& class_weights) {
    const ModelShape& shape = tr.shape;
    if (!(shape == params.shape))
        throw ContractViolationError("backward: trace and params shapes differ");
    if (tr.inputs.empty())
        throw ContractViolationError("backward: empty trace");

    const Layout lay(shape);
    const std::size_t hid = shape.hidden_dim;
    const std::size_t in = shape.input_dim();
    const std::size_t feat = shape.feature_dim();
    const std::size_t d1 = shape.mlp_dims[0], d2 = shape.mlp_dims[1],
                      d3 = shape.mlp_dims[2];
    const bool learned_embed =
        shape.variant == Variant::Time2Vec || shape.variant == Variant::Ema2Vec;

    Vec grad(shape.param_count(), 0.0);

    const double w = class_weights.empty()
                         ? 1.0
                         : class_weights[static_cast<std::size_t>(label)];
    Vec dlogits = tr.probabilities;
    dlogits[static_cast<std::size_t>(label)] -= 1.0;
    for (auto& v : dlogits) v *= w;

    // Rebuild forward MLP inputs from the trace.
    Vec a0(hid + shape.covariate_dim);
    const Vec& z = tr.hidden.back();
    for (std::size_t r = 0; r < hid; ++r) a0[r] = z[r] * tr.drop_z[r];
    std::copy(tr.covariates.begin(), tr.covariates.end(),
              a0.begin() + static_cast<std::ptrdiff_t>(hid));
    Vec act1d(d1), act2d(d2);
    for (std::size_t r = 0; r < d1; ++r) act1d[r] = tr.mlp_act1[r] * tr.drop_d1[r];
    for (std::size_t r = 0; r < d2; ++r) act2d[r] = tr.mlp_act2[r] * tr.drop_d2[r];

    const std::size_t off1 = shape.lstm_param_count();
    const std::size_t off2 = off1 + d1 * a0.size() + d1;
    const std::size_t off3 = off2 + d2 * d1 + d2;

    outer_add(grad, off3, dlogits, act2d);
    for (std::size_t r = 0; r < d3; ++r) grad[off3 + d3 * d2 + r] += dlogits[r];
    Vec dact2d(d2, 0.0);
    matvec_t_add(params.flat, off3, d3, d2, dlogits, dact2d);

    Vec dpre2(d2);
    for (std::size_t r = 0; r < d2; ++r)
        dpre2[r] = (tr.mlp_pre2[r] > 0.0) ? dact2d[r] * tr.drop_d2[r] : 0.0;
    outer_add(grad, off2, dpre2, act1d);
    for (std::size_t r = 0; r < d2; ++r) grad[off2 + d2 * d1 + r] += dpre2[r];
    Vec dact1d(d1, 0.0);
    matvec_t_add(params.flat, off2, d2, d1, dpre2, dact1d);

    Vec dpre1(d1);
    for (std::size_t r = 0; r < d1; ++r)
        dpre1[r] = (tr.mlp_pre1[r] > 0.0) ? dact1d[r] * tr.drop_d1[r] : 0.0;
    outer_add(grad, off1, dpre1, a0);
    for (std::size_t r = 0; r < d1; ++r) grad[off1 + d1 * a0.size() + r] += dpre1[r];
    Vec da0(a0.size(), 0.0);
    matvec_t_add(params.flat, off1, d1, a0.size(), dpre1, da0);

    Vec dh(hid);
    for (std::size_t r = 0; r < hid; ++r) dh[r] = da0[r] * tr.drop_z[r];
    Vec dc(hid, 0.0);

    const TimeEmbeddingParams emb = params.embedding_params();
    const std::size_t n_steps = tr.inputs.size();
    for (std::size_t t = n_steps; t-- > 0;) {
        const Vec& gi = tr.gate_i[t];
        const Vec& gf = tr.gate_f[t];
        const Vec& gg = tr.gate_g[t];
        const Vec& go = tr.gate_o[t];
        const Vec& ct = tr.cell[t];
        const Vec* c_prev = (t > 0) ? &tr.cell[t - 1] : nullptr;
        const Vec* h_prev = (t > 0) ? &tr.hidden[t - 1] : nullptr;

        Vec da[kGates];
        for (auto& v : da) v.assign(hid, 0.0);
        for (std::size_t r = 0; r < hid; ++r) {
            const double tc = std::tanh(ct[r]);
            const double do_r = dh[r] * tc;
            const double dc_r = dc[r] + dh[r] * go[r] * (1.0 - tc * tc);
            const double di_r = dc_r * gg[r];
            const double dg_r = dc_r * gi[r];
            const double df_r = dc_r * (c_prev ? (*c_prev)[r] : 0.0);
            da[0][r] = di_r * gi[r] * (1.0 - gi[r]);
            da[1][r] = df_r * gf[r] * (1.0 - gf[r]);
            da[2][r] = dg_r * (1.0 - gg[r] * gg[r]);
            da[3][r] = do_r * go[r] * (1.0 - go[r]);
            dc[r] = dc_r * gf[r]; // flows to c_{t-1}
        }

        Vec dx(in, 0.0);
        Vec dh_prev(hid, 0.0);
        for (std::size_t g = 0; g < kGates; ++g) {
            outer_add(grad, lay.W(g), da[g], tr.inputs[t]);
            if (h_prev) outer_add(grad, lay.U(g), da[g], *h_prev);
            for (std::size_t r = 0; r < hid; ++r) grad[lay.b(g) + r] += da[g][r];
            matvec_t_add(params.flat, lay.W(g), hid, in, da[g], dx);
            matvec_t_add(params.flat, lay.U(g), hid, hid, da[g], dh_prev);
        }
        dh = std::move(dh_prev);

        if (learned_embed) {
            const Matrix jac = embed_jacobian(tr.step_deltas[t], emb);
            const std::size_t eo = shape.embed_offset();
            for (std::size_t p = 0; p < jac.cols; ++p) {
                double acc = 0.0;
                for (std::size_t j = 0; j < jac.rows; ++j)
                    acc += jac(j, p) * dx[feat + j];
                grad[eo + p] += acc;
            }
        }
    }
    return grad;
}

LongitudinalSample Normalizer::apply(const LongitudinalSample& sample) const {
    LongitudinalSample out = sample;
    for (std::size_t h = 0; h < out.daily.size(); ++h) {
        if (!out.step_mask[h]) continue;
        Vec& v = out.daily[h];
        for (std::size_t j = 0; j < v.size(); ++j) {
            if (std::isnan(v[j])) {
                v[j] = 0.0; // train-mean imputation after z-scoring
            } else {
                v[j] = (v[j] - feature_mean[j]) / feature_std[j];
            }
        }
    }
    out.covariates = apply_covariates(out.covariates);
    return out;
}

Vec Normalizer::apply_covariates(const Vec& cov) const {
    Vec out(cov.size());
    for (std::size_t j = 0; j < cov.size(); ++j)
        out[j] = (cov[j] - cov_mean[j]) / cov_std[j];
    return out;
}

Normalizer fit_normalizer(const std::vector<LongitudinalSample>& train_samples) {
    if (train_samples.empty())
        throw InsufficientDataError("fit_normalizer: empty training set");
    std::size_t dim = 0;
    for (const auto& s : train_samples)
        for (std::size_t h = 0; h < s.daily.size(); ++h)
            if (s.step_mask[h]) { dim = s.daily[h].size(); break; }
    const std::size_t cdim = train_samples.front().covariates.size();

    Normalizer norm;
    norm.feature_mean.assign(dim, 0.0);
    norm.feature_std.assign(dim, 0.0);
    norm.cov_mean.assign(cdim, 0.0);
    norm.cov_std.assign(cdim, 0.0);

    Vec count(dim, 0.0), sum(dim, 0.0), sumsq(dim, 0.0);
    Vec csum(cdim, 0.0), csumsq(cdim, 0.0);
    double ccount = 0.0;
    for (const auto& s : train_samples) {
        for (std::size_t h = 0; h < s.daily.size(); ++h) {
            if (!s.step_mask[h]) continue;
            for (std::size_t j = 0; j < dim; ++j) {
                const double v = s.daily[h][j];
                if (std::isnan(v)) continue;
                count[j] += 1.0;
                sum[j] += v;
                sumsq[j] += v * v;
            }
        }
        for (std::size_t j = 0; j < cdim; ++j) {
            csum[j] += s.covariates[j];
            csumsq[j] += s.covariates[j] * s.covariates[j];
        }
        ccount += 1.0;
    }
    for (std::size_t j = 0; j < dim; ++j) {
        const double n = std::max(count[j], 1.0);
        norm.feature_mean[j] = sum[j] / n;
        const double var = std::max(0.0, sumsq[j] / n - norm.feature_mean[j] * norm.feature_mean[j]);
        norm.feature_std[j] = var > 1e-12 ? std::sqrt(var) : 1.0;
    }
    for (std::size_t j = 0; j < cdim; ++j) {
        norm.cov_mean[j] = csum[j] / ccount;
        const double var = std::max(0.0, csumsq[j] / ccount - norm.cov_mean[j] * norm.cov_mean[j]);
        norm.cov_std[j] = var > 1e-12 ? std::sqrt(var) : 1.0;
    }
    return norm;
}

} // namespace longema
