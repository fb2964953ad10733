#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "longema/dataset.hpp"
#include "longema/features.hpp"
#include "longema/model.hpp"

namespace longema {

/// below median -> 0, at median -> 1, above median -> 2
int map_label(int raw_stress, double student_median);

/// Median raw stress per student over the records admitted by `visible`
/// (all records when empty). Used training-fold-only inside CV to keep
/// labels leakage-free.
std::map<std::string, double> student_medians(
    const EmaDataset& dataset,
    const std::vector<std::uint8_t>& visible = {});

/// Configuration of the deterministic synthetic EMA generator. Students
/// report in phases whose inter-report gaps are constant (linear delay
/// curve), backward-growing (convex) or backward-shrinking (concave);
/// stress depends on the phase trend, sensing drift, and covariates
/// through a noisy utility model.
struct SyntheticConfig {
    std::size_t n_students = 20;
    std::size_t study_days = 60;
    std::size_t session_length = 8; // reports per reporting-regime phase
    std::array<double, 3> regime_mix = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    double trend_label_weight = 2.5;
    double functional_label_weight = 1.0;
    double covariate_label_weight = 0.5;
    double noise_level = 0.3;
    std::size_t channels = 10;  // F, last channel carries time-to-next-deadline
    std::size_t day_steps = 24; // T
    std::uint64_t seed = 0;
};

EmaDataset generate_synthetic(const SyntheticConfig& config);

void save_dataset(const EmaDataset& dataset, const std::string& dir);
EmaDataset load_dataset(const std::string& dir);

/// Index ranges of each student's records within dataset.records.
std::map<std::string, std::pair<std::size_t, std::size_t>> student_ranges(
    const EmaDataset& dataset);

/// One longitudinal sample per record (labels unassigned; see
/// assign_labels). Samples are ordered as the records are.
std::vector<LongitudinalSample> build_samples(const EmaDataset& dataset,
                                              std::size_t horizon,
                                              double delta_max_days = kDefaultDeltaMaxDays);

/// Labels every sample via map_label against the per-student medians.
void assign_labels(std::vector<LongitudinalSample>& samples,
                   const EmaDataset& dataset,
                   const std::map<std::string, double>& medians);

struct Checkpoint {
    ModelParams params;
    Normalizer normalizer;
    std::string config_digest; // hash of the training configuration
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

} // namespace longema
