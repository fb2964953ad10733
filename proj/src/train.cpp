#include "longema/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#ifdef LONGEMA_OPENMP
#include <omp.h>
#endif

#include "longema/eval.hpp"

namespace longema {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    return splitmix64(a ^ splitmix64(b));
}

Vec sample_gradient(const LongitudinalSample& sample, const ModelParams& params,
                    std::uint64_t seed, const Vec& class_weights, double* out_loss) {
    ForwardResult fwd = forward(sample, params, Mode::Train, seed);
    *out_loss = loss(fwd.probabilities, sample.label, class_weights);
    return backward(fwd.trace, sample.label, params, class_weights);
}

} // namespace

void TrainConfig::validate() const {
    if (lr_main <= 0.0 || lr_embedding <= 0.0)
        throw ContractViolationError("TrainConfig: learning rates must be positive");
    if (weight_decay < 0.0)
        throw ContractViolationError("TrainConfig: weight decay must be non-negative");
    if (batch_size == 0 || max_epochs == 0)
        throw ContractViolationError("TrainConfig: batch size and epochs must be positive");
    for (double p : {dropout_lstm, dropout_dense1, dropout_dense2})
        if (p < 0.0 || p >= 1.0)
            throw ContractViolationError("TrainConfig: dropout rates must lie in [0,1)");
    if (mlp_dims.size() != 3)
        throw ContractViolationError("TrainConfig: expected 3 MLP layer sizes");
}

std::string TrainConfig::digest() const {
    std::ostringstream ss;
    ss << to_string(variant) << '|' << horizon << '|' << batch_size << '|' << lr_main
       << '|' << lr_embedding << '|' << weight_decay << '|' << max_epochs << '|'
       << patience << '|' << seed << '|' << hidden_dim << '|' << dropout_lstm << '|'
       << dropout_dense1 << '|' << dropout_dense2 << '|' << delta_max_days << '|'
       << class_weighting;
    for (auto d : mlp_dims) ss << '|' << d;
    std::uint64_t h = 1469598103934665603ULL; // FNV-1a
    for (char c : ss.str()) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    std::ostringstream hex;
    hex << std::hex << h;
    return hex.str();
}

Vec batch_gradient_serial(const std::vector<LongitudinalSample>& samples,
                          const std::vector<std::size_t>& batch,
                          const ModelParams& params,
                          const std::vector<std::uint64_t>& sample_seeds,
                          const Vec& class_weights, double* mean_loss) {
    Vec grad(params.flat.size(), 0.0);
    double total = 0.0;
    for (std::size_t j = 0; j < batch.size(); ++j) {
        double l = 0.0;
        const Vec g = sample_gradient(samples[batch[j]], params, sample_seeds[j],
                                      class_weights, &l);
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
        total += l;
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (auto& v : grad) v *= inv;
    if (mean_loss) *mean_loss = total * inv;
    return grad;
}

Vec batch_gradient_parallel(const std::vector<LongitudinalSample>& samples,
                            const std::vector<std::size_t>& batch,
                            const ModelParams& params,
                            const std::vector<std::uint64_t>& sample_seeds,
                            const Vec& class_weights, double* mean_loss) {
    std::vector<Vec> grads(batch.size());
    Vec losses(batch.size(), 0.0);
#ifdef LONGEMA_OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(batch.size()); ++j) {
        grads[static_cast<std::size_t>(j)] =
            sample_gradient(samples[batch[static_cast<std::size_t>(j)]], params,
                            sample_seeds[static_cast<std::size_t>(j)], class_weights,
                            &losses[static_cast<std::size_t>(j)]);
    }
    // reduce in batch order so the result matches the serial path bit for bit
    Vec grad(params.flat.size(), 0.0);
    double total = 0.0;
    for (std::size_t j = 0; j < batch.size(); ++j) {
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += grads[j][i];
        total += losses[j];
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (auto& v : grad) v *= inv;
    if (mean_loss) *mean_loss = total * inv;
    return grad;
}

int predict(const LongitudinalSample& normalized_sample, const ModelParams& params) {
    const ForwardResult fwd = forward(normalized_sample, params, Mode::Eval, 0);
    return static_cast<int>(std::max_element(fwd.probabilities.begin(),
                                             fwd.probabilities.end()) -
                            fwd.probabilities.begin());
}

TrainResult train(const std::vector<LongitudinalSample>& train_set,
                  const std::vector<LongitudinalSample>& val_set,
                  const TrainConfig& config) {
    config.validate();
    if (train_set.empty() || val_set.empty())
        throw InsufficientDataError("train: empty train or validation set");
    for (const auto* set : {&train_set, &val_set})
        for (const auto& s : *set)
            if (s.label < 0)
                throw ContractViolationError("train: unlabeled sample in input");

    // infer shapes from the data
    std::size_t feat_dim = 0;
    for (const auto& s : train_set) {
        for (std::size_t h = 0; h < s.daily.size(); ++h)
            if (s.step_mask[h]) { feat_dim = s.daily[h].size(); break; }
        if (feat_dim) break;
    }
    if (feat_dim == 0)
        throw UnusableSampleError("train: no valid steps in training data");

    ModelShape shape;
    shape.variant = config.variant;
    if (config.variant == Variant::LstmDay) {
        shape.channels = feat_dim;
    } else {
        if (feat_dim % kFunctionalsPerChannel != 0)
            throw ContractViolationError("train: daily feature dim not a multiple of 8");
        shape.channels = feat_dim / kFunctionalsPerChannel;
    }
    shape.hidden_dim = config.hidden_dim;
    shape.covariate_dim = train_set.front().covariates.size();
    shape.mlp_dims = config.mlp_dims;
    shape.embed_K = config.embed_K();
    shape.dropout_lstm = config.dropout_lstm;
    shape.dropout_dense1 = config.dropout_dense1;
    shape.dropout_dense2 = config.dropout_dense2;

    TrainResult result;
    result.normalizer = fit_normalizer(train_set);

    std::vector<LongitudinalSample> train_n, val_n;
    train_n.reserve(train_set.size());
    val_n.reserve(val_set.size());
    for (const auto& s : train_set) train_n.push_back(result.normalizer.apply(s));
    for (const auto& s : val_set) val_n.push_back(result.normalizer.apply(s));

    Vec class_weights;
    if (config.class_weighting) {
        Vec counts(shape.n_classes(), 0.0);
        for (const auto& s : train_n) counts[static_cast<std::size_t>(s.label)] += 1.0;
        class_weights.assign(shape.n_classes(), 0.0);
        for (std::size_t c = 0; c < counts.size(); ++c)
            if (counts[c] > 0.0)
                class_weights[c] = static_cast<double>(train_n.size()) /
                                   (static_cast<double>(counts.size()) * counts[c]);
    }

    std::mt19937_64 init_rng(config.seed);
    ModelParams params = init_params(shape, init_rng);
    const std::size_t split = shape.embed_offset();
    AdamState main_state(split);
    AdamState embed_state(params.flat.size() - split);

    ModelParams best_params = params;
    double best_f1 = -1.0;
    std::size_t best_epoch = 0, since_best = 0;

    std::vector<std::size_t> order(train_n.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::mt19937_64 shuffle_rng(mix(config.seed, 0x5005ULL + epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double epoch_loss = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(start + config.batch_size, order.size());
            std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
            std::vector<std::uint64_t> seeds(batch.size());
            for (std::size_t j = 0; j < batch.size(); ++j)
                seeds[j] = mix(mix(config.seed, epoch), batch[j]);

            double batch_loss = 0.0;
            Vec grad = (config.jobs > 1)
                           ? batch_gradient_parallel(train_n, batch, params, seeds,
                                                     class_weights, &batch_loss)
                           : batch_gradient_serial(train_n, batch, params, seeds,
                                                   class_weights, &batch_loss);
            if (!std::isfinite(batch_loss))
                throw DivergedTrainingError("train: non-finite loss at epoch " +
                                            std::to_string(epoch) + ", batch " +
                                            std::to_string(n_batches));
            epoch_loss += batch_loss;
            ++n_batches;

            Vec main_p(params.flat.begin(), params.flat.begin() + static_cast<std::ptrdiff_t>(split));
            Vec main_g(grad.begin(), grad.begin() + static_cast<std::ptrdiff_t>(split));
            adam_step(main_p, main_g, main_state, config.lr_main, config.weight_decay);
            std::copy(main_p.begin(), main_p.end(), params.flat.begin());
            if (split < params.flat.size()) {
                Vec emb_p(params.flat.begin() + static_cast<std::ptrdiff_t>(split), params.flat.end());
                Vec emb_g(grad.begin() + static_cast<std::ptrdiff_t>(split), grad.end());
                adam_step(emb_p, emb_g, embed_state, config.lr_embedding, config.weight_decay);
                std::copy(emb_p.begin(), emb_p.end(),
                          params.flat.begin() + static_cast<std::ptrdiff_t>(split));
            }
        }

        std::vector<int> preds, labels;
        preds.reserve(val_n.size());
        labels.reserve(val_n.size());
        for (const auto& s : val_n) {
            preds.push_back(predict(s, params));
            labels.push_back(s.label);
        }
        const F1Result f1 = f1_scores(preds, labels);

        const auto t1 = std::chrono::steady_clock::now();
        result.history.train_loss.push_back(epoch_loss / static_cast<double>(n_batches));
        result.history.val_macro_f1.push_back(f1.macro);
        result.history.val_weighted_f1.push_back(f1.weighted);
        result.history.epoch_seconds.push_back(
            std::chrono::duration<double>(t1 - t0).count());

        if (f1.weighted > best_f1) {
            best_f1 = f1.weighted;
            best_epoch = epoch;
            best_params = params;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            break;
        }
    }

    result.params = std::move(best_params);
    result.history.best_epoch = best_epoch;
    return result;
}

void write_history_csv(const TrainHistory& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out << "epoch,train_loss,val_macro_f1,val_weighted_f1,seconds,is_best\n";
    for (std::size_t e = 0; e < history.train_loss.size(); ++e)
        out << e << ',' << history.train_loss[e] << ',' << history.val_macro_f1[e] << ','
            << history.val_weighted_f1[e] << ',' << history.epoch_seconds[e] << ','
            << (e == history.best_epoch ? 1 : 0) << '\n';
}

} // namespace longema
