#include "longema/numerics.hpp"

#include <cmath>
#include <string>

namespace longema {

LeastSquaresFit solve_least_squares(const Vec& regressor, const Vec& targets) {
    const std::size_t n = regressor.size();
    if (n < 2 || targets.size() != n)
        throw ContractViolationError("solve_least_squares: need n >= 2 and matching lengths");

    double sx = 0.0, sxx = 0.0, sy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += regressor[i];
        sxx += regressor[i] * regressor[i];
        sy += targets[i];
        sxy += regressor[i] * targets[i];
    }
    const double nn = static_cast<double>(n);
    const double det = nn * sxx - sx * sx;
    // det = n^2 * variance(regressor); constant regressor => rank deficient.
    const double scale = std::max(1.0, sxx);
    if (std::abs(det) <= 1e-12 * nn * scale)
        throw DegenerateFitError("solve_least_squares: regressor column is constant (rank-deficient basis)");

    LeastSquaresFit fit;
    fit.alpha = (nn * sxy - sx * sy) / det;
    fit.beta = (sxx * sy - sx * sxy) / det;
    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = targets[i] - (fit.alpha * regressor[i] + fit.beta);
        rss += r * r;
    }
    fit.residual_ss = std::max(0.0, rss);
    return fit;
}

void adam_step(Vec& params, const Vec& grads, AdamState& state, double lr,
               double weight_decay) {
    const std::size_t n = params.size();
    if (grads.size() != n || state.first_moment.size() != n ||
        state.second_moment.size() != n)
        throw ContractViolationError("adam_step: length mismatch between params, grads, and moments");

    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);

    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(grads[i]))
            throw NumericFaultError("adam_step: non-finite gradient at index " + std::to_string(i));
        const double g = grads[i] + weight_decay * params[i];
        state.first_moment[i] = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * g;
        state.second_moment[i] = state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * g * g;
        const double mhat = state.first_moment[i] / bc1;
        const double vhat = state.second_moment[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
}

Vec finite_diff_gradient(const std::function<double(const Vec&)>& f,
                         const Vec& x, double h) {
    Vec grad(x.size(), 0.0);
    Vec probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + h;
        const double fp = f(probe);
        probe[i] = x[i] - h;
        const double fm = f(probe);
        probe[i] = x[i];
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericFaultError("finite_diff_gradient: non-finite evaluation at index " + std::to_string(i));
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

double cosine_similarity(const Vec& u, const Vec& v) {
    if (u.size() != v.size() || u.empty())
        throw ContractViolationError("cosine_similarity: length mismatch");
    double uv = 0.0, uu = 0.0, vv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        uv += u[i] * v[i];
        uu += u[i] * u[i];
        vv += v[i] * v[i];
    }
    if (uu == 0.0 || vv == 0.0)
        throw DegenerateInputError("cosine_similarity: zero-norm input");
    return uv / (std::sqrt(uu) * std::sqrt(vv));
}

} // namespace longema
