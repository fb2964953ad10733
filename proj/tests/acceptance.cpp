// Acceptance suite: end-to-end checks of the library's core guarantees.
// Prints one pass/fail line per criterion and exits non-zero when any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "longema/data.hpp"
#include "longema/eval.hpp"
#include "longema/trends.hpp"

using namespace longema;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int number, const std::string& what, bool ok, const std::string& detail) {
    std::printf("criterion %2d [%s] %s (%s)\n", number, ok ? "PASS" : "FAIL",
                what.c_str(), detail.c_str());
    if (!ok) ++failures;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

ModelShape small_shape(Variant v, std::size_t channels, std::size_t hidden) {
    ModelShape s;
    s.variant = v;
    s.channels = channels;
    s.hidden_dim = hidden;
    s.covariate_dim = 3;
    s.mlp_dims = {5, 4, 3};
    s.embed_K = v == Variant::Time2Vec || v == Variant::Ema2Vec ? 2 : 0;
    return s;
}

LongitudinalSample random_sample(const ModelShape& shape, std::size_t horizon,
                                 std::mt19937_64& rng, bool with_masked) {
    std::uniform_real_distribution<double> feat(-1.0, 1.0), delta(0.01, 0.2);
    LongitudinalSample s;
    const std::size_t n = horizon + 1;
    s.daily.assign(n, Vec());
    s.deltas.assign(n, std::nan(""));
    s.delta_days.assign(n, std::nan(""));
    s.step_mask.assign(n, 0);
    double d = 0.0;
    for (std::size_t h = 0; h < n; ++h) {
        const bool masked = with_masked && h == n / 2 && n > 2;
        if (masked) { d += delta(rng); continue; }
        s.step_mask[h] = 1;
        s.deltas[h] = h == 0 ? 0.0 : d;
        s.delta_days[h] = s.deltas[h] * 7.0;
        s.daily[h].resize(shape.feature_dim());
        for (auto& v : s.daily[h]) v = feat(rng);
        d += delta(rng);
    }
    s.covariates.resize(shape.covariate_dim);
    for (auto& v : s.covariates) v = feat(rng);
    s.label = 1;
    return s;
}

double max_rel_error(const Vec& a, const Vec& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1e-6});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

// --- independent references, written per definition ---

Vec reference_functionals(const std::vector<double>& vals) {
    const std::size_t n = vals.size();
    double mean = 0;
    for (double v : vals) mean += v;
    mean /= n;
    double mx = vals[0], mn = vals[0], sum = 0, var = 0;
    for (double v : vals) {
        mx = std::max(mx, v);
        mn = std::min(mn, v);
        sum += v;
        var += (v - mean) * (v - mean);
    }
    var /= n;
    std::vector<double> sorted = vals;
    std::sort(sorted.begin(), sorted.end());
    auto pct = [&](double q) {
        if (n == 1) return sorted[0];
        const double pos = q * (n - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const std::size_t hi = std::min(lo + 1, n - 1);
        return sorted[lo] + (pos - lo) * (sorted[hi] - sorted[lo]);
    };
    const double median =
        n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    double mcr = 0;
    if (n >= 2) {
        int crossings = 0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            const double a = vals[i] - mean, b = vals[i + 1] - mean;
            if ((a > 0 && b < 0) || (a < 0 && b > 0)) ++crossings;
        }
        mcr = static_cast<double>(crossings) / (n - 1);
    }
    return {mean, mx, mn, std::sqrt(var), median, sum, pct(0.75) - pct(0.25), mcr};
}

int brute_force_trend(const Vec& delta_days) {
    const std::size_t n = delta_days.size();
    double best_rss = 1e300;
    int best = 0;
    for (int c = 0; c < 3; ++c) {
        Vec x(n);
        for (std::size_t h = 0; h < n; ++h) {
            const double hh = static_cast<double>(h);
            x[h] = c == 0 ? hh : (c == 1 ? hh * hh : std::sqrt(hh));
        }
        double sx = 0, sxx = 0, sy = 0, sxy = 0;
        for (std::size_t i = 0; i < n; ++i) {
            sx += x[i];
            sxx += x[i] * x[i];
            sy += delta_days[i];
            sxy += x[i] * delta_days[i];
        }
        const double det = n * sxx - sx * sx;
        const double alpha = (n * sxy - sx * sy) / det;
        const double beta = (sy - alpha * sx) / n;
        double rss = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = delta_days[i] - alpha * x[i] - beta;
            rss += r * r;
        }
        if (rss < best_rss - 1e-15) {
            best_rss = rss;
            best = c;
        }
    }
    return best;
}

std::pair<double, double> reference_f1(const std::vector<int>& pred,
                                       const std::vector<int>& label) {
    double macro = 0, weighted = 0;
    int present = 0;
    for (int c = 0; c < 3; ++c) {
        int tp = 0, fp = 0, fn = 0, support = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            if (label[i] == c) ++support;
            if (pred[i] == c && label[i] == c) ++tp;
            if (pred[i] == c && label[i] != c) ++fp;
            if (pred[i] != c && label[i] == c) ++fn;
        }
        const double prec = tp + fp ? static_cast<double>(tp) / (tp + fp) : 0.0;
        const double rec = tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0;
        const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
        if (support) {
            macro += f1;
            ++present;
        }
        weighted += f1 * support / pred.size();
    }
    return {present ? macro / present : 0.0, weighted};
}

// --- criteria ---

void criterion_gradients() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(7001);
    double worst = 0.0;
    std::size_t checks = 0;
    for (Variant v : {Variant::LstmDay, Variant::LongLstm, Variant::TimeConcat,
                      Variant::Time2Vec, Variant::Ema2Vec}) {
        for (int cfg = 0; cfg < 10; ++cfg) {
            const std::size_t channels = 1 + cfg % 3;
            const std::size_t hidden = 2 + cfg % 4;
            const std::size_t horizon = 2 + cfg % 3;
            const ModelShape shape = small_shape(v, channels, hidden);
            ModelParams params = init_params(shape, rng);
            // nudge zero-initialized biases off exact ReLU kinks, where the
            // central difference straddles the non-differentiable point
            std::uniform_real_distribution<double> jitter(0.01, 0.05);
            for (auto& p : params.flat) p += jitter(rng);
            const auto sample = random_sample(shape, horizon, rng, cfg % 2 == 1);
            const int label = cfg % 3;
            const std::uint64_t seed = 900 + cfg;
            const Mode mode = cfg % 3 == 0 ? Mode::Train : Mode::Eval;

            const auto fwd = forward(sample, params, mode, seed);
            const Vec analytic = backward(fwd.trace, label, params);
            const auto f = [&](const Vec& theta) {
                ModelParams p{shape, theta};
                return loss(forward(sample, p, mode, seed).probabilities, label);
            };
            const Vec numeric = finite_diff_gradient(f, params.flat, 1e-5);
            worst = std::max(worst, max_rel_error(analytic, numeric));
            ++checks;
        }
    }
    const double secs = seconds_since(t0);
    std::ostringstream d;
    d << checks << " checks, max rel err " << worst << ", " << secs << "s";
    report(1, "analytic gradients match central finite differences",
           worst < 1e-4 && secs < 60.0, d.str());
}

void criterion_embedding_properties() {
    std::mt19937_64 rng(7002);
    std::uniform_real_distribution<double> delta(0.0, 1.0);
    double worst_norm = 0.0;
    bool in_range = true;
    for (int draw = 0; draw < 10000; ++draw) {
        if (draw % 100 == 0) {
            // fresh random parameters every 100 draws
            rng.seed(7002 + static_cast<std::uint64_t>(draw));
        }
        const auto pe = init_embedding_params(EmbeddingKind::Ema2Vec, 8, rng);
        const auto pt = init_embedding_params(EmbeddingKind::Time2Vec, 7, rng);
        const double dl = delta(rng);
        const Vec e = ema2vec(dl, pe);
        double norm = 0.0;
        for (double v : e) norm += v * v;
        worst_norm = std::max(worst_norm, std::abs(std::sqrt(norm) - 1.0));
        for (double v : time2vec(dl, pt))
            if (!(v > 0.0 && v < 1.0)) in_range = false;
    }
    std::ostringstream d;
    d << "10000 draws, worst norm deviation " << worst_norm;
    report(2, "ema2vec is unit-norm and time2vec stays in (0,1)",
           worst_norm < 1e-9 && in_range, d.str());
}

void criterion_trend_oracle() {
    std::mt19937_64 rng(7003);
    std::uniform_real_distribution<double> gap(0.05, 2.5);
    std::uniform_int_distribution<int> len(3, 8);
    std::size_t agree = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = len(rng);
        Vec d(n, 0.0);
        for (std::size_t h = 1; h < n; ++h) d[h] = d[h - 1] + gap(rng);
        const auto fit = classify_trend(d, std::vector<std::uint8_t>(n, 1));
        if (static_cast<int>(fit.cls) == brute_force_trend(d)) ++agree;
    }
    // exact functional forms must classify with numerically zero residual
    Vec lin{0, 2, 4, 6, 8}, conv{0, 1, 4, 9, 16}, conc(5);
    for (std::size_t h = 0; h < 5; ++h) conc[h] = std::sqrt(static_cast<double>(h));
    const std::vector<std::uint8_t> valid(5, 1);
    const auto fl = classify_trend(lin, valid);
    const auto fv = classify_trend(conv, valid);
    const auto fc = classify_trend(conc, valid);
    const bool exact = fl.cls == TrendClass::Linear && fl.fits[0].residual_ss < 1e-10 &&
                       fv.cls == TrendClass::Convex && fv.fits[1].residual_ss < 1e-10 &&
                       fc.cls == TrendClass::Concave && fc.fits[2].residual_ss < 1e-10;
    std::ostringstream d;
    d << agree << "/1000 oracle agreement, exact forms " << (exact ? "ok" : "wrong");
    report(3, "trend classification matches the brute-force oracle",
           agree == 1000 && exact, d.str());
}

void criterion_functional_oracle() {
    std::mt19937_64 rng(7004);
    std::uniform_real_distribution<double> dist(-10, 10);
    std::uniform_int_distribution<int> len(1, 30), chans(1, 4);
    std::bernoulli_distribution masked(0.2);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t T = len(rng), F = chans(rng);
        DaySequence day(T, F);
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t f = 0; f < F; ++f) {
                day.values(t, f) = dist(rng);
                if (masked(rng)) day.observed[t * F + f] = 0;
            }
        const auto df = daily_functionals(day);
        for (std::size_t f = 0; f < F; ++f) {
            std::vector<double> vals;
            for (std::size_t t = 0; t < T; ++t)
                if (day.is_observed(t, f)) vals.push_back(day.values(t, f));
            if (vals.empty()) {
                for (std::size_t j = 0; j < 8; ++j)
                    if (!std::isnan(df.values[8 * f + j])) worst = 1.0;
                continue;
            }
            const Vec ref = reference_functionals(vals);
            for (std::size_t j = 0; j < 8; ++j)
                worst = std::max(worst, std::abs(df.values[8 * f + j] - ref[j]));
        }
    }
    std::ostringstream d;
    d << "1000 random days, worst abs deviation " << worst;
    report(4, "daily functionals match the per-definition reference", worst < 1e-10,
           d.str());
}

void criterion_f1_oracle() {
    std::mt19937_64 rng(7005);
    std::uniform_int_distribution<int> cls(0, 2), len(1, 60);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = len(rng);
        std::vector<int> preds(n), labels(n);
        for (int i = 0; i < n; ++i) {
            preds[i] = cls(rng);
            labels[i] = cls(rng);
        }
        const auto res = f1_scores(preds, labels);
        const auto [macro, weighted] = reference_f1(preds, labels);
        worst = std::max({worst, std::abs(res.macro - macro),
                          std::abs(res.weighted - weighted)});
    }
    // hand-checkable case: everything predicted as class 0
    const auto hand = f1_scores({0, 0, 0, 0, 0, 0}, {0, 0, 1, 1, 2, 2});
    const bool hand_ok = std::abs(hand.macro - 1.0 / 6.0) < 1e-12;
    std::ostringstream d;
    d << "1000 random sets, worst deviation " << worst << ", all-zero case macro "
      << hand.macro;
    report(5, "F1 scores match the independent reference", worst < 1e-12 && hand_ok,
           d.str());
}

void criterion_masked_steps() {
    std::mt19937_64 rng(7006);
    bool skip_ok = true;
    for (int trial = 0; trial < 100; ++trial) {
        const Variant v = trial % 2 ? Variant::Time2Vec : Variant::LongLstm;
        const ModelShape shape = small_shape(v, 2, 4);
        ModelParams params = init_params(shape, rng);
        auto sample = random_sample(shape, 4, rng, false);
        const std::size_t cut = 1 + trial % 3;

        LongitudinalSample masked = sample;
        masked.step_mask[cut] = 0;
        LongitudinalSample removed = sample;
        removed.daily.erase(removed.daily.begin() + static_cast<std::ptrdiff_t>(cut));
        removed.deltas.erase(removed.deltas.begin() + static_cast<std::ptrdiff_t>(cut));
        removed.delta_days.erase(removed.delta_days.begin() + static_cast<std::ptrdiff_t>(cut));
        removed.step_mask.erase(removed.step_mask.begin() + static_cast<std::ptrdiff_t>(cut));
        if (forward(masked, params, Mode::Eval, 0).probabilities !=
            forward(removed, params, Mode::Eval, 0).probabilities)
            skip_ok = false;
    }

    // forecast rewrite: day-0 features replaced by day-1 features, and the
    // model output no longer depends on the original target-day features
    bool forecast_ok = true;
    const ModelShape shape = small_shape(Variant::Ema2Vec, 2, 4);
    ModelParams params = init_params(shape, rng);
    for (int trial = 0; trial < 100; ++trial) {
        auto s = random_sample(shape, 4, rng, false);
        const auto fc = forecast_rewrite(s);
        if (fc.daily[0] != s.daily[1] || fc.daily[1] != s.daily[1]) forecast_ok = false;
        for (std::size_t h = 2; h < s.daily.size(); ++h)
            if (fc.daily[h] != s.daily[h]) forecast_ok = false;
        LongitudinalSample perturbed = s;
        for (auto& x : perturbed.daily[0]) x += 3.21;
        if (forward(forecast_rewrite(perturbed), params, Mode::Eval, 0).probabilities !=
            forward(fc, params, Mode::Eval, 0).probabilities)
            forecast_ok = false;
    }
    auto bad = random_sample(shape, 4, rng, false);
    bad.step_mask[1] = 0;
    bool rejected = false;
    try {
        forecast_rewrite(bad);
    } catch (const UnusableSampleError&) {
        rejected = true;
    }
    report(6, "masked steps are skipped exactly and the forecast rewrite holds",
           skip_ok && forecast_ok && rejected,
           std::string("skip ") + (skip_ok ? "ok" : "broken") + ", rewrite " +
               (forecast_ok ? "ok" : "broken") + ", masked h=1 " +
               (rejected ? "rejected" : "accepted"));
}

void criterion_folds_and_masking() {
    std::mt19937_64 rng(7007);
    std::uniform_int_distribution<int> n_students(1, 6), n_records(5, 40);
    bool folds_ok = true;
    for (int trial = 0; trial < 100; ++trial) {
        EmaDataset ds;
        const int s = n_students(rng);
        std::vector<int> counts(static_cast<std::size_t>(s));
        for (int i = 0; i < s; ++i) {
            counts[static_cast<std::size_t>(i)] = n_records(rng);
            for (int r = 0; r < counts[static_cast<std::size_t>(i)]; ++r) {
                EmaRecord rec;
                rec.student_id = "s" + std::to_string(i);
                rec.timestamp = 86400LL * (r + 1);
                rec.raw_stress = 1 + r % 5;
                rec.day = DaySequence(2, 1);
                ds.records.push_back(rec);
            }
        }
        const auto folds = chronological_folds(ds, 5);
        for (int i = 0; i < s; ++i) {
            const auto& blocks = folds.blocks.at("s" + std::to_string(i));
            if (blocks.size() != 5) { folds_ok = false; continue; }
            std::size_t expect_start = 0;
            for (const auto& [lo, hi] : blocks) {
                if (lo != expect_start || hi < lo) folds_ok = false;
                expect_start = hi;
            }
            if (expect_start != static_cast<std::size_t>(counts[static_cast<std::size_t>(i)]))
                folds_ok = false;
        }
    }
    // the masking boundary: exactly 7 days is a valid delay, one second
    // beyond is masked
    const bool at_cap = scale_delta(7.0).has_value() &&
                        std::abs(scale_delta(7.0).value() - 1.0) < 1e-12;
    const bool beyond = !scale_delta(7.0 + 1.0 / kSecondsPerDay).has_value();
    report(7, "chronological folds partition every student and the delay cap is sharp",
           folds_ok && at_cap && beyond,
           std::string("100 datasets ") + (folds_ok ? "ok" : "broken") +
               ", boundary " + (at_cap && beyond ? "ok" : "broken"));
}

void criterion_variant_ordering() {
    const auto t0 = Clock::now();
    const Variant vs[] = {Variant::LstmDay, Variant::LongLstm, Variant::Time2Vec,
                          Variant::Ema2Vec};
    double mean[4] = {};
    for (int s = 0; s < 5; ++s) {
        SyntheticConfig scfg;
        scfg.n_students = 20;
        scfg.study_days = 60;
        scfg.seed = 100 + static_cast<std::uint64_t>(s);
        scfg.trend_label_weight = 4.0;
        scfg.functional_label_weight = 0.4;
        scfg.covariate_label_weight = 0.1;
        scfg.noise_level = 0.15;
        scfg.channels = 2;
        scfg.day_steps = 8;
        const EmaDataset ds = generate_synthetic(scfg);
        for (int v = 0; v < 4; ++v) {
            TrainConfig cfg;
            cfg.variant = vs[v];
            cfg.hidden_dim = 16;
            cfg.mlp_dims = {16, 8, 3};
            cfg.max_epochs = 150;
            cfg.patience = 150;
            cfg.lr_main = 3e-3;
            cfg.lr_embedding = 3e-3;
            cfg.weight_decay = 5e-4;
            cfg.batch_size = 8;
            cfg.class_weighting = true;
            cfg.seed = static_cast<std::uint64_t>(s);
            mean[v] += cross_validate(ds, cfg, 5, true).weighted_mean() / 5.0;
        }
    }
    const double secs = seconds_since(t0);
    const bool ordered = mean[3] >= mean[2] && mean[2] >= mean[1] && mean[1] >= mean[0];
    const bool margin = mean[3] - mean[1] >= 0.02;
    std::ostringstream d;
    d << "lstm_day " << mean[0] << " <= long_lstm " << mean[1] << " <= time2vec "
      << mean[2] << " <= ema2vec " << mean[3] << ", " << secs << "s";
    report(8, "time-aware variants dominate the baselines on synthetic data",
           ordered && margin && secs < 900.0, d.str());
}

void criterion_determinism() {
    SyntheticConfig scfg;
    scfg.n_students = 6;
    scfg.study_days = 30;
    scfg.channels = 2;
    scfg.day_steps = 6;
    scfg.seed = 11;
    const EmaDataset ds = generate_synthetic(scfg);
    auto samples = build_samples(ds, 4);
    assign_labels(samples, ds, student_medians(ds));
    std::vector<LongitudinalSample> train_set(samples.begin(), samples.end() - 10);
    std::vector<LongitudinalSample> val_set(samples.end() - 10, samples.end());

    TrainConfig cfg;
    cfg.variant = Variant::Ema2Vec;
    cfg.hidden_dim = 6;
    cfg.mlp_dims = {6, 4, 3};
    cfg.max_epochs = 3;
    cfg.patience = 3;
    cfg.lr_main = 1e-3;
    cfg.lr_embedding = 1e-3;
    cfg.batch_size = 8;
    cfg.seed = 5;
    const auto a = train(train_set, val_set, cfg);
    const auto b = train(train_set, val_set, cfg);
    const bool repro = a.params.flat == b.params.flat;

    cfg.jobs = 4;
    const auto c = train(train_set, val_set, cfg);
    const bool parallel_same = a.params.flat == c.params.flat;

    // checkpoint round-trip: bitwise parameters and byte-stable files
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "longema_acceptance";
    fs::create_directories(dir);
    const std::string p1 = (dir / "ck1.json").string(), p2 = (dir / "ck2.json").string();
    const Checkpoint ck{a.params, a.normalizer, cfg.digest()};
    save_checkpoint(ck, p1);
    const Checkpoint loaded = load_checkpoint(p1);
    save_checkpoint(loaded, p2);
    auto slurp = [](const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    const bool roundtrip = loaded.params.flat == a.params.flat &&
                           loaded.config_digest == ck.config_digest &&
                           slurp(p1) == slurp(p2);
    fs::remove_all(dir);
    report(9, "training is bit-reproducible and checkpoints round-trip",
           repro && parallel_same && roundtrip,
           std::string("rerun ") + (repro ? "identical" : "differs") + ", jobs=4 " +
               (parallel_same ? "identical" : "differs") + ", round-trip " +
               (roundtrip ? "exact" : "differs"));
}

void criterion_similarity() {
    std::mt19937_64 rng(7010);
    std::uniform_real_distribution<double> delta(0.0, 1.0);
    double worst = 0.0;
    bool self_one = true;
    for (int trial = 0; trial < 100; ++trial) {
        const EmbeddingKind kind =
            trial % 2 ? EmbeddingKind::Ema2Vec : EmbeddingKind::Time2Vec;
        const auto params =
            init_embedding_params(kind, kind == EmbeddingKind::Ema2Vec ? 8 : 7, rng);
        Vec deltas(5);
        deltas[0] = 0.0;
        for (std::size_t h = 1; h < 5; ++h) deltas[h] = delta(rng);
        const Vec profile = similarity_profile(deltas, params);
        if (std::abs(profile[0] - 1.0) > 1e-12) self_one = false;
        const Vec target = embed(deltas[0], params);
        for (std::size_t h = 0; h < 5; ++h) {
            // brute-force cosine, written out long-hand
            const Vec other = embed(deltas[h], params);
            double dot = 0, nu = 0, nv = 0;
            for (std::size_t i = 0; i < target.size(); ++i) {
                dot += target[i] * other[i];
                nu += target[i] * target[i];
                nv += other[i] * other[i];
            }
            worst = std::max(worst,
                             std::abs(profile[h] - dot / std::sqrt(nu * nv)));
        }
    }
    std::ostringstream d;
    d << "100 profiles, worst cosine deviation " << worst;
    report(10, "similarity profiles equal brute-force cosine with sim(0,0)=1",
           self_one && worst < 1e-12, d.str());
}

} // namespace

int main() {
    criterion_gradients();
    criterion_embedding_properties();
    criterion_trend_oracle();
    criterion_functional_oracle();
    criterion_f1_oracle();
    criterion_masked_steps();
    criterion_folds_and_masking();
    criterion_variant_ordering();
    criterion_determinism();
    criterion_similarity();
    if (failures) std::printf("%d criteria failed\n", failures);
    else std::printf("all criteria passed\n");
    return failures ? 1 : 0;
}
