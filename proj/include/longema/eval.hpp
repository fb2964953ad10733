#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "longema/data.hpp"
#include "longema/train.hpp"

namespace longema {

/// Per-student contiguous chronological blocks over record indices
/// (within-student, half-open ranges).
struct FoldSplit {
    std::size_t k = 5;
    std::map<std::string, std::vector<std::pair<std::size_t, std::size_t>>> blocks;
    std::vector<std::string> warnings; // students with fewer samples than folds
};

FoldSplit chronological_folds(const EmaDataset& dataset, std::size_t k = 5);

/// Concrete sample index sets for one fold assignment. Validation is the
/// last chronological eighth of each student's training records, giving
/// the overall 70/10/20 split. strict_causal restricts training to blocks
/// earlier than the test block.
struct FoldAssignment {
    std::vector<std::size_t> train_idx, val_idx, test_idx; // into the samples vector
    std::vector<std::uint8_t> train_visible;               // over dataset.records
};

FoldAssignment fold_assignment(const FoldSplit& folds, const EmaDataset& dataset,
                               const std::vector<LongitudinalSample>& samples,
                               std::size_t test_fold, bool strict_causal = false);

using Confusion = std::array<std::array<std::size_t, 3>, 3>; // [label][prediction]

struct F1Result {
    double macro = 0.0;
    double weighted = 0.0;
    Confusion confusion{};
};

F1Result f1_scores(const std::vector<int>& predictions, const std::vector<int>& labels);

struct MetricReport {
    Vec fold_macro, fold_weighted;
    std::vector<Confusion> fold_confusion;
    std::vector<std::string> fold_errors; // empty string = fold succeeded
    std::size_t skipped_samples = 0;      // forecast mode only

    double macro_mean() const;
    double macro_std() const;
    double weighted_mean() const;
    double weighted_std() const;
};

/// Trains one model per fold and aggregates test metrics.
MetricReport cross_validate(const EmaDataset& dataset, const TrainConfig& config,
                            std::size_t k = 5, bool strict_causal = false);

/// Zero-finetune forecasting: each sample is rewritten so the target-day
/// features are replaced by those of the previous report, then scored by
/// the frozen checkpoint. Samples with a masked h=1 step are skipped.
MetricReport forecast_evaluate(const Checkpoint& checkpoint,
                               const std::vector<LongitudinalSample>& labeled_samples);

/// The forecast input rewrite on its own: [d0,d1,...,dH] -> [d1,d1,...,dH].
LongitudinalSample forecast_rewrite(const LongitudinalSample& sample);

struct GridSearchResult {
    std::size_t best_index = 0;
    Vec mean_val_weighted_f1; // NaN for configs that failed every fold
    std::vector<std::string> notes;
};

/// Scores every config by mean validation weighted F1 across folds;
/// diverging configs are recorded as failed and skipped.
GridSearchResult grid_search(const std::vector<TrainConfig>& grid,
                             const EmaDataset& dataset, std::size_t k = 5);

void write_metric_report_csv(const MetricReport& report, const std::string& model_name,
                             const std::string& path);
std::string format_metric_table(const std::vector<std::pair<std::string, MetricReport>>& rows);

} // namespace longema
