#include "longema/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace longema {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean_of(const Vec& v) {
    if (v.empty()) return kNaN;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double std_of(const Vec& v) {
    if (v.empty()) return kNaN;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

// sample index by (student, within-student record index)
std::map<std::pair<std::string, std::size_t>, std::size_t> sample_lookup(
    const std::vector<LongitudinalSample>& samples) {
    std::map<std::pair<std::string, std::size_t>, std::size_t> lut;
    for (std::size_t i = 0; i < samples.size(); ++i)
        lut[{samples[i].student_id, samples[i].record_index}] = i;
    return lut;
}

} // namespace

FoldSplit chronological_folds(const EmaDataset& dataset, std::size_t k) {
    if (k < 2)
        throw ContractViolationError("chronological_folds: cross-validation needs k >= 2");
    if (dataset.records.empty())
        throw InsufficientDataError("chronological_folds: empty dataset");

    FoldSplit split;
    split.k = k;
    for (const auto& [sid, range] : student_ranges(dataset)) {
        const std::size_t n = range.second - range.first;
        if (n < k)
            split.warnings.push_back(sid + " has " + std::to_string(n) +
                                     " samples for " + std::to_string(k) + " folds");
        auto& blocks = split.blocks[sid];
        std::size_t pos = 0;
        for (std::size_t f = 0; f < k; ++f) {
            const std::size_t size = n / k + (f < n % k ? 1 : 0);
            blocks.emplace_back(pos, pos + size);
            pos += size;
        }
    }
    return split;
}

FoldAssignment fold_assignment(const FoldSplit& folds, const EmaDataset& dataset,
                               const std::vector<LongitudinalSample>& samples,
                               std::size_t test_fold, bool strict_causal) {
    if (test_fold >= folds.k)
        throw ContractViolationError("fold_assignment: test_fold out of range");
    const auto lut = sample_lookup(samples);
    const auto ranges = student_ranges(dataset);

    FoldAssignment out;
    out.train_visible.assign(dataset.records.size(), 0);
    for (const auto& [sid, blocks] : folds.blocks) {
        const std::size_t base = ranges.at(sid).first;
        std::vector<std::size_t> train_records;
        for (std::size_t f = 0; f < folds.k; ++f) {
            const auto [lo, hi] = blocks[f];
            if (f == test_fold) {
                for (std::size_t r = lo; r < hi; ++r)
                    out.test_idx.push_back(lut.at({sid, r}));
            } else if (!strict_causal || f < test_fold) {
                for (std::size_t r = lo; r < hi; ++r) train_records.push_back(r);
            }
        }
        // validation = last chronological eighth of the training records
        const std::size_t n_val =
            train_records.empty() ? 0 : std::max<std::size_t>(1, train_records.size() / 8);
        for (std::size_t i = 0; i < train_records.size(); ++i) {
            const std::size_t r = train_records[i];
            out.train_visible[base + r] = 1;
            if (i + n_val >= train_records.size())
                out.val_idx.push_back(lut.at({sid, r}));
            else
                out.train_idx.push_back(lut.at({sid, r}));
        }
    }
    return out;
}

F1Result f1_scores(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.empty() || predictions.size() != labels.size())
        throw ContractViolationError("f1_scores: empty input or length mismatch");

    F1Result res;
    for (auto& row : res.confusion) row.fill(0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] > 2 || predictions[i] < 0 || predictions[i] > 2)
            throw ContractViolationError("f1_scores: class outside {0,1,2}");
        ++res.confusion[static_cast<std::size_t>(labels[i])]
                       [static_cast<std::size_t>(predictions[i])];
    }

    double macro_sum = 0.0, weighted_sum = 0.0;
    std::size_t present = 0, total = labels.size();
    for (std::size_t c = 0; c < 3; ++c) {
        std::size_t tp = res.confusion[c][c], support = 0, predicted = 0;
        for (std::size_t j = 0; j < 3; ++j) {
            support += res.confusion[c][j];
            predicted += res.confusion[j][c];
        }
        // zero-support and zero-prediction classes contribute F1 = 0
        const double denom = static_cast<double>(support + predicted);
        const double f1 = denom > 0.0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
        if (support > 0) {
            macro_sum += f1;
            ++present;
            weighted_sum += f1 * static_cast<double>(support) / static_cast<double>(total);
        }
    }
    res.macro = present > 0 ? macro_sum / static_cast<double>(present) : 0.0;
    res.weighted = weighted_sum;
    return res;
}

double MetricReport::macro_mean() const { return mean_of(fold_macro); }
double MetricReport::macro_std() const { return std_of(fold_macro); }
double MetricReport::weighted_mean() const { return mean_of(fold_weighted); }
double MetricReport::weighted_std() const { return std_of(fold_weighted); }

namespace {

std::vector<LongitudinalSample> pick(const std::vector<LongitudinalSample>& samples,
                                     const std::vector<std::size_t>& idx) {
    std::vector<LongitudinalSample> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(samples[i]);
    return out;
}

} // namespace

MetricReport cross_validate(const EmaDataset& dataset, const TrainConfig& config,
                            std::size_t k, bool strict_causal) {
    const FoldSplit folds = chronological_folds(dataset, k);
    std::vector<LongitudinalSample> samples =
        build_samples(dataset, config.horizon, config.delta_max_days);

    // the lstm_day baseline trains on raw day sequences instead
    std::vector<LongitudinalSample> model_samples;
    if (config.variant == Variant::LstmDay) {
        const auto ranges = student_ranges(dataset);
        model_samples.reserve(samples.size());
        for (const auto& s : samples) {
            LongitudinalSample day =
                standard_sample_from_record(dataset.records[ranges.at(s.student_id).first +
                                                            s.record_index]);
            day.record_index = s.record_index;
            model_samples.push_back(std::move(day));
        }
    } else {
        model_samples = samples;
    }

    MetricReport report;
    for (std::size_t f = 0; f < k; ++f) {
        try {
            const FoldAssignment fa = fold_assignment(folds, dataset, samples, f, strict_causal);
            const auto medians = student_medians(dataset, fa.train_visible);
            assign_labels(model_samples, dataset, medians);

            TrainConfig fold_cfg = config;
            fold_cfg.seed = config.seed + f; // independent fold initializations
            const TrainResult tr = train(pick(model_samples, fa.train_idx),
                                         pick(model_samples, fa.val_idx), fold_cfg);

            std::vector<int> preds, labels;
            for (auto i : fa.test_idx) {
                const LongitudinalSample s = tr.normalizer.apply(model_samples[i]);
                preds.push_back(predict(s, tr.params));
                labels.push_back(s.label);
            }
            const F1Result f1 = f1_scores(preds, labels);
            report.fold_macro.push_back(f1.macro);
            report.fold_weighted.push_back(f1.weighted);
            report.fold_confusion.push_back(f1.confusion);
            report.fold_errors.emplace_back();
        } catch (const std::exception& e) {
            report.fold_errors.emplace_back(e.what());
        }
    }
    return report;
}

LongitudinalSample forecast_rewrite(const LongitudinalSample& sample) {
    if (sample.daily.size() < 2 || !sample.step_mask[1])
        throw UnusableSampleError("forecast_rewrite: immediate past report is masked");
    LongitudinalSample out = sample;
    out.daily[0] = sample.daily[1]; // pad with the previous report's day features
    return out;
}

MetricReport forecast_evaluate(const Checkpoint& checkpoint,
                               const std::vector<LongitudinalSample>& labeled_samples) {
    if (checkpoint.params.shape.variant == Variant::LstmDay)
        throw ContractViolationError(
            "forecast_evaluate: requires a longitudinally trained checkpoint");
    MetricReport report;
    std::vector<int> preds, labels;
    for (const auto& s : labeled_samples) {
        if (s.label < 0)
            throw ContractViolationError("forecast_evaluate: unlabeled sample");
        if (s.daily.size() < 2 || !s.step_mask[1]) {
            ++report.skipped_samples;
            continue;
        }
        const LongitudinalSample rewritten =
            checkpoint.normalizer.apply(forecast_rewrite(s));
        preds.push_back(predict(rewritten, checkpoint.params));
        labels.push_back(s.label);
    }
    if (preds.empty())
        throw InsufficientDataError("forecast_evaluate: every sample was skipped");
    const F1Result f1 = f1_scores(preds, labels);
    report.fold_macro.push_back(f1.macro);
    report.fold_weighted.push_back(f1.weighted);
    report.fold_confusion.push_back(f1.confusion);
    report.fold_errors.emplace_back();
    return report;
}

GridSearchResult grid_search(const std::vector<TrainConfig>& grid,
                             const EmaDataset& dataset, std::size_t k) {
    if (grid.empty())
        throw ContractViolationError("grid_search: empty grid");
    const FoldSplit folds = chronological_folds(dataset, k);

    GridSearchResult res;
    res.mean_val_weighted_f1.assign(grid.size(), kNaN);
    res.notes.assign(grid.size(), "");
    for (std::size_t g = 0; g < grid.size(); ++g) {
        std::vector<LongitudinalSample> samples;
        try {
            samples = build_samples(dataset, grid[g].horizon, grid[g].delta_max_days);
        } catch (const std::exception& e) {
            res.notes[g] = e.what();
            continue;
        }
        Vec scores;
        for (std::size_t f = 0; f < k; ++f) {
            try {
                const FoldAssignment fa = fold_assignment(folds, dataset, samples, f);
                const auto medians = student_medians(dataset, fa.train_visible);
                std::vector<LongitudinalSample> labeled = samples;
                assign_labels(labeled, dataset, medians);
                TrainConfig cfg = grid[g];
                cfg.seed = grid[g].seed + f;
                const TrainResult tr =
                    train(pick(labeled, fa.train_idx), pick(labeled, fa.val_idx), cfg);
                scores.push_back(tr.history.val_weighted_f1[tr.history.best_epoch]);
            } catch (const std::exception& e) {
                res.notes[g] = std::string("fold ") + std::to_string(f) + ": " + e.what();
            }
        }
        if (!scores.empty()) res.mean_val_weighted_f1[g] = mean_of(scores);
    }

    double best = -1.0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const double s = res.mean_val_weighted_f1[g];
        if (std::isfinite(s) && s > best) {
            best = s;
            res.best_index = g;
        }
    }
    return res;
}

void write_metric_report_csv(const MetricReport& report, const std::string& model_name,
                             const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out << "model,fold,f1_macro,f1_weighted,error\n";
    std::size_t ok = 0;
    for (std::size_t f = 0; f < report.fold_errors.size(); ++f) {
        out << model_name << ',' << f << ',';
        if (report.fold_errors[f].empty()) {
            out << report.fold_macro[ok] << ',' << report.fold_weighted[ok] << ",\n";
            ++ok;
        } else {
            out << ",,\"" << report.fold_errors[f] << "\"\n";
        }
    }
    out << model_name << ",aggregate," << report.macro_mean() << ','
        << report.weighted_mean() << ",\n";
}

std::string format_metric_table(
    const std::vector<std::pair<std::string, MetricReport>>& rows) {
    std::ostringstream ss;
    ss << std::left << std::setw(24) << "Model" << std::setw(20) << "F1 Macro"
       << std::setw(20) << "F1 Weighted" << '\n';
    ss << std::string(64, '-') << '\n';
    ss << std::fixed << std::setprecision(3);
    for (const auto& [name, report] : rows) {
        std::ostringstream macro, weighted;
        macro << std::fixed << std::setprecision(3) << report.macro_mean() << " +/- "
              << report.macro_std();
        weighted << std::fixed << std::setprecision(3) << report.weighted_mean()
                 << " +/- " << report.weighted_std();
        ss << std::left << std::setw(24) << name << std::setw(20) << macro.str()
           << std::setw(20) << weighted.str() << '\n';
    }
    return ss.str();
}

} // namespace longema
