#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "longema/numerics.hpp"

namespace longema {

/// One day-long sensing sequence: T timesteps x F channels with a
/// per-cell missing-value mask (true = observed).
struct DaySequence {
    Matrix values;                      // T x F
    std::vector<std::uint8_t> observed; // T x F, row-major, 1 = observed

    DaySequence() = default;
    DaySequence(std::size_t t, std::size_t f)
        : values(t, f), observed(t * f, 1) {}

    std::size_t steps() const { return values.rows; }
    std::size_t channels() const { return values.cols; }
    bool is_observed(std::size_t t, std::size_t f) const {
        return observed[t * values.cols + f] != 0;
    }
};

/// One self-report with its associated day-long sensing sequence.
struct EmaRecord {
    std::string student_id;
    std::int64_t timestamp = 0; // UTC seconds
    int raw_stress = 0;         // 1..5
    double sleep_rating = 0.0;
    double sleep_duration = 0.0;
    bool exam_period = false;
    DaySequence day; // sensing sequence for the day preceding this report
};

struct EmaDataset {
    std::vector<EmaRecord> records; // sorted by (student_id, timestamp)
};

} // namespace longema
