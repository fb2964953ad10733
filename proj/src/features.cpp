#include "longema/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace longema {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Linear-interpolation percentile over a sorted vector, q in [0,1].
double percentile_sorted(const Vec& sorted, double q) {
    const std::size_t n = sorted.size();
    if (n == 1) return sorted[0];
    const double pos = q * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

int day_of_week(std::int64_t timestamp) {
    // Unix epoch day 0 was a Thursday.
    std::int64_t days = timestamp / 86400;
    if (timestamp < 0 && timestamp % 86400 != 0) --days;
    return static_cast<int>(((days + 4) % 7 + 7) % 7);
}

} // namespace

DailyFunctional daily_functionals(const DaySequence& day) {
    const std::size_t T = day.steps();
    const std::size_t F = day.channels();
    if (T < 1)
        throw ContractViolationError("daily_functionals: empty day sequence");

    DailyFunctional out;
    out.values.assign(kFunctionalsPerChannel * F, kNaN);

    Vec channel;
    channel.reserve(T);
    for (std::size_t f = 0; f < F; ++f) {
        channel.clear();
        for (std::size_t t = 0; t < T; ++t)
            if (day.is_observed(t, f)) channel.push_back(day.values(t, f));

        if (channel.empty()) {
            out.masked_channels.push_back(f);
            continue;
        }

        const std::size_t n = channel.size();
        double sum = 0.0, mx = channel[0], mn = channel[0];
        for (double v : channel) {
            sum += v;
            mx = std::max(mx, v);
            mn = std::min(mn, v);
        }
        const double mean = sum / static_cast<double>(n);

        double var = 0.0;
        for (double v : channel) var += (v - mean) * (v - mean);
        var /= static_cast<double>(n); // population variance

        Vec sorted = channel;
        std::sort(sorted.begin(), sorted.end());
        const double median = (n % 2 == 1)
                                  ? sorted[n / 2]
                                  : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
        const double iqr = percentile_sorted(sorted, 0.75) - percentile_sorted(sorted, 0.25);

        // Crossings of the channel mean: adjacent unmasked pairs whose
        // centered values have strictly opposite signs. Exact zeros do
        // not cross.
        double mcr = 0.0;
        if (n >= 2) {
            std::size_t crossings = 0;
            for (std::size_t i = 0; i + 1 < n; ++i)
                if ((channel[i] - mean) * (channel[i + 1] - mean) < 0.0) ++crossings;
            mcr = static_cast<double>(crossings) / static_cast<double>(n - 1);
        }

        double* block = out.values.data() + kFunctionalsPerChannel * f;
        block[0] = mean;
        block[1] = mx;
        block[2] = mn;
        block[3] = std::sqrt(var);
        block[4] = median;
        block[5] = sum;
        block[6] = iqr;
        block[7] = mcr;
    }
    return out;
}

std::optional<double> scale_delta(double delta_days, double delta_max_days) {
    if (delta_days < 0.0)
        throw OrderingViolationError("scale_delta: negative delay");
    if (delta_days > delta_max_days) return std::nullopt;
    return delta_days / delta_max_days;
}

Vec covariates_for(const EmaRecord& record) {
    Vec c(10, 0.0);
    c[static_cast<std::size_t>(day_of_week(record.timestamp))] = 1.0;
    c[7] = record.sleep_rating;
    c[8] = record.sleep_duration;
    c[9] = record.exam_period ? 1.0 : 0.0;
    return c;
}

LongitudinalSample build_longitudinal_sample(const std::vector<EmaRecord>& records,
                                             std::size_t target_index,
                                             std::size_t horizon,
                                             double delta_max_days) {
    if (target_index >= records.size())
        throw ContractViolationError("build_longitudinal_sample: target_index out of range");
    const EmaRecord& target = records[target_index];

    LongitudinalSample s;
    s.student_id = target.student_id;
    s.target_time = target.timestamp;
    s.record_index = target_index;
    s.covariates = covariates_for(target);
    s.daily.assign(horizon + 1, Vec());
    s.deltas.assign(horizon + 1, kNaN);
    s.delta_days.assign(horizon + 1, kNaN);
    s.step_mask.assign(horizon + 1, 0);

    for (std::size_t h = 0; h <= horizon; ++h) {
        if (h > target_index) break; // insufficient history stays masked
        const EmaRecord& rec = records[target_index - h];
        if (rec.timestamp > target.timestamp)
            throw OrderingViolationError("build_longitudinal_sample: records not sorted ascending");
        const double dd =
            static_cast<double>(target.timestamp - rec.timestamp) / kSecondsPerDay;
        s.delta_days[h] = dd;
        if (auto scaled = scale_delta(dd, delta_max_days)) {
            s.deltas[h] = *scaled;
            s.step_mask[h] = 1;
            s.daily[h] = daily_functionals(rec.day).values;
        }
    }
    return s;
}

DeltaHistogram delta_histogram(const std::vector<LongitudinalSample>& samples,
                               double bin_width_days) {
    if (bin_width_days <= 0.0)
        throw ContractViolationError("delta_histogram: bin width must be positive");
    DeltaHistogram hist;
    hist.bin_width_days = bin_width_days;
    for (const auto& s : samples) {
        for (std::size_t h = 1; h < s.deltas.size(); ++h) {
            if (!s.step_mask[h]) continue;
            const auto bin = static_cast<std::size_t>(s.delta_days[h] / bin_width_days);
            if (bin >= hist.counts.size()) hist.counts.resize(bin + 1, 0);
            ++hist.counts[bin];
        }
    }
    return hist;
}

void write_delta_histogram_csv(const DeltaHistogram& hist, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out << "bin_start_days,bin_end_days,count\n";
    for (std::size_t i = 0; i < hist.counts.size(); ++i)
        out << i * hist.bin_width_days << ',' << (i + 1) * hist.bin_width_days << ','
            << hist.counts[i] << '\n';
}

} // namespace longema
