#include "longema/trends.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace longema {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double regressor_value(TrendClass c, double h) {
    switch (c) {
        case TrendClass::Linear: return h;
        case TrendClass::Convex: return h * h;
        case TrendClass::Concave: return std::sqrt(h);
    }
    return h;
}

double percentile_sorted(const Vec& sorted, double q) {
    const std::size_t n = sorted.size();
    if (n == 1) return sorted[0];
    const double pos = q * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, n - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

} // namespace

std::string to_string(TrendClass c) {
    switch (c) {
        case TrendClass::Linear: return "linear";
        case TrendClass::Convex: return "convex";
        case TrendClass::Concave: return "concave";
    }
    return "unknown";
}

TrendFit classify_trend(const Vec& delta_days,
                        const std::vector<std::uint8_t>& step_mask,
                        bool include_h0) {
    Vec lags, delays;
    for (std::size_t h = include_h0 ? 0 : 1; h < delta_days.size(); ++h) {
        if (!step_mask[h]) continue;
        lags.push_back(static_cast<double>(h));
        delays.push_back(delta_days[h]);
    }
    if (lags.size() < 3)
        throw InsufficientDataError("classify_trend: fewer than 3 valid steps");

    TrendFit out;
    Vec regressor(lags.size());
    double best = std::numeric_limits<double>::infinity();
    for (int c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < lags.size(); ++i)
            regressor[i] = regressor_value(static_cast<TrendClass>(c), lags[i]);
        out.fits[static_cast<std::size_t>(c)] = solve_least_squares(regressor, delays);
        const double rss = out.fits[static_cast<std::size_t>(c)].residual_ss;
        if (rss < best) { // ties keep the earlier class: linear -> convex -> concave
            best = rss;
            out.cls = static_cast<TrendClass>(c);
        }
    }
    return out;
}

TrendFit classify_trend(const LongitudinalSample& sample, bool include_h0) {
    return classify_trend(sample.delta_days, sample.step_mask, include_h0);
}

TrendDistribution trend_distribution(const std::vector<LongitudinalSample>& samples,
                                     bool include_h0) {
    if (samples.empty())
        throw InsufficientDataError("trend_distribution: empty dataset");
    std::size_t horizon = 0;
    for (const auto& s : samples) horizon = std::max(horizon, s.horizon());

    TrendDistribution dist;
    for (auto& curve : dist.mean_fitted) curve.assign(horizon + 1, 0.0);

    std::vector<Vec> per_lag(horizon + 1);
    for (const auto& s : samples) {
        for (std::size_t h = 0; h < s.delta_days.size(); ++h)
            if (s.step_mask[h]) per_lag[h].push_back(s.delta_days[h]);
        TrendFit fit;
        try {
            fit = classify_trend(s, include_h0);
        } catch (const InsufficientDataError&) {
            continue;
        }
        const auto c = static_cast<std::size_t>(fit.cls);
        ++dist.counts[c];
        const auto& best = fit.fits[c];
        for (std::size_t h = 0; h <= horizon; ++h)
            dist.mean_fitted[c][h] +=
                best.alpha * regressor_value(fit.cls, static_cast<double>(h)) + best.beta;
    }
    for (std::size_t c = 0; c < 3; ++c)
        if (dist.counts[c] > 0)
            for (auto& v : dist.mean_fitted[c]) v /= static_cast<double>(dist.counts[c]);
        else
            dist.mean_fitted[c].assign(horizon + 1, kNaN);

    dist.q1.assign(horizon + 1, kNaN);
    dist.median.assign(horizon + 1, kNaN);
    dist.q3.assign(horizon + 1, kNaN);
    dist.min.assign(horizon + 1, kNaN);
    dist.max.assign(horizon + 1, kNaN);
    for (std::size_t h = 0; h <= horizon; ++h) {
        if (per_lag[h].empty()) continue;
        std::sort(per_lag[h].begin(), per_lag[h].end());
        dist.q1[h] = percentile_sorted(per_lag[h], 0.25);
        dist.median[h] = percentile_sorted(per_lag[h], 0.5);
        dist.q3[h] = percentile_sorted(per_lag[h], 0.75);
        dist.min[h] = per_lag[h].front();
        dist.max[h] = per_lag[h].back();
    }
    return dist;
}

void write_trend_distribution_csv(const TrendDistribution& dist, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out << "class,count,h,mean_fitted,q1,median,q3,min,max\n";
    const std::size_t H = dist.median.size() - 1;
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t h = 0; h <= H; ++h)
            out << to_string(static_cast<TrendClass>(c)) << ',' << dist.counts[c] << ','
                << h << ',' << dist.mean_fitted[c][h] << ',' << dist.q1[h] << ','
                << dist.median[h] << ',' << dist.q3[h] << ',' << dist.min[h] << ','
                << dist.max[h] << '\n';
    }

} // namespace longema
