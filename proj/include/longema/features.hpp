#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "longema/dataset.hpp"
#include "longema/numerics.hpp"

namespace longema {

/// Number of statistical functionals extracted per sensing channel, in
/// order: mean, max, min, std, median, sum, IQR, mean crossing rate.
inline constexpr std::size_t kFunctionalsPerChannel = 8;

inline constexpr double kDefaultDeltaMaxDays = 7.0;
inline constexpr double kSecondsPerDay = 86400.0;

struct DailyFunctional {
    Vec values;                              // 8F, NaN for missing channels
    std::vector<std::size_t> masked_channels; // channels with zero observed cells
};

/// One assembled longitudinal sample: H+1 daily functionals (h=0 newest),
/// scaled delays, validity mask, covariates, and 3-class label.
struct LongitudinalSample {
    std::vector<Vec> daily;             // H+1 functional vectors, h=0 first
    Vec deltas;                         // scaled to [0,1], NaN where masked
    Vec delta_days;                     // unscaled delays in days, NaN where no record
    std::vector<std::uint8_t> step_mask; // 1 = valid step
    Vec covariates;                     // dow one-hot[7], sleep rating, sleep duration, exam flag
    int label = -1;                     // {0,1,2}, -1 = unassigned
    std::string student_id;
    std::int64_t target_time = 0;
    std::size_t record_index = 0;       // index of the target record within its student

    std::size_t horizon() const { return deltas.size() - 1; }
    std::size_t valid_steps() const {
        std::size_t n = 0;
        for (auto m : step_mask) n += m;
        return n;
    }
};

DailyFunctional daily_functionals(const DaySequence& day);

/// delta in days -> scaled delay in [0,1], or nullopt above delta_max.
std::optional<double> scale_delta(double delta_days,
                                  double delta_max_days = kDefaultDeltaMaxDays);

Vec covariates_for(const EmaRecord& record);

/// Assembles the sample for records[target_index]; records must be one
/// student's reports sorted ascending by timestamp. The label is left
/// unassigned (labeling needs the student median, owned by the data module).
LongitudinalSample build_longitudinal_sample(const std::vector<EmaRecord>& records,
                                             std::size_t target_index,
                                             std::size_t horizon,
                                             double delta_max_days = kDefaultDeltaMaxDays);

struct DeltaHistogram {
    double bin_width_days = 1.0;
    std::vector<std::size_t> counts; // bin i covers [i*w, (i+1)*w)
};

/// Histogram of unscaled valid delays at lags h >= 1.
DeltaHistogram delta_histogram(const std::vector<LongitudinalSample>& samples,
                               double bin_width_days);

void write_delta_histogram_csv(const DeltaHistogram& hist, const std::string& path);

} // namespace longema
