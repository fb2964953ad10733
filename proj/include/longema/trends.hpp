#pragma once

#include <array>
#include <string>
#include <vector>

#include "longema/features.hpp"
#include "longema/numerics.hpp"

namespace longema {

enum class TrendClass : int { Linear = 0, Convex = 1, Concave = 2 };

std::string to_string(TrendClass c);

struct TrendFit {
    TrendClass cls = TrendClass::Linear;
    std::array<LeastSquaresFit, 3> fits; // indexed by TrendClass
};

/// Fits the unscaled delays of a sample's valid steps against the lag
/// index via h, h^2 and sqrt(h), picking the class with minimal residual.
/// Ties resolve linear -> convex -> concave. include_h0 keeps the target
/// position (delta = 0) in the fit.
TrendFit classify_trend(const Vec& delta_days,
                        const std::vector<std::uint8_t>& step_mask,
                        bool include_h0 = true);

TrendFit classify_trend(const LongitudinalSample& sample, bool include_h0 = true);

struct TrendDistribution {
    std::array<std::size_t, 3> counts{};
    // Per class, the fitted curve averaged over member samples, sampled at h=0..H.
    std::array<Vec, 3> mean_fitted;
    // Per lag h, quartile stats of delta_days over all samples with that lag valid.
    Vec q1, median, q3, min, max;
};

TrendDistribution trend_distribution(const std::vector<LongitudinalSample>& samples,
                                     bool include_h0 = true);

void write_trend_distribution_csv(const TrendDistribution& dist, const std::string& path);

} // namespace longema
