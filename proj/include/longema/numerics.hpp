#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "longema/errors.hpp"

namespace longema {

using Vec = std::vector<double>;

/// Dense row-major matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

struct LeastSquaresFit {
    double alpha = 0.0;
    double beta = 0.0;
    double residual_ss = 0.0;
};

/// Fits targets ~ alpha * regressor + beta by closed-form 2x2 normal
/// equations. Throws DegenerateFitError when the regressor column is
/// (numerically) constant.
LeastSquaresFit solve_least_squares(const Vec& regressor, const Vec& targets);

struct AdamState {
    Vec first_moment;
    Vec second_moment;
    long step_count = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    explicit AdamState(std::size_t n = 0)
        : first_moment(n, 0.0), second_moment(n, 0.0) {}
};

/// One bias-corrected Adam update, in place. Weight decay is coupled
/// (added to the gradient as wd * param before the moment updates).
void adam_step(Vec& params, const Vec& grads, AdamState& state, double lr,
               double weight_decay);

/// Central-difference gradient estimate of a scalar function.
Vec finite_diff_gradient(const std::function<double(const Vec&)>& f,
                         const Vec& x, double h);

double cosine_similarity(const Vec& u, const Vec& v);

} // namespace longema
