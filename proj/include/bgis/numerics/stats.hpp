#pragma once

#include <vector>

#include "bgis/numerics/tensor.hpp"

namespace bgis::numerics {

// log sum_i exp(v[i]) with the usual max shift; -inf for an empty input
// is a contract violation here, so it throws instead.
double log_sum_exp(const std::vector<double>& v);
double log_sum_exp(const double* v, std::size_t n);

// Log density of an isotropic Gaussian N(mean, var * I) evaluated at x.
// mean may be a single row broadcast against x.
double gaussian_log_density(const Tensor& x, const Tensor& mean, double var);

// Row-wise version: x is [R, C], mean is [R, C] or [C]; returns [R].
Tensor gaussian_log_density_rows(const Tensor& x, const Tensor& mean, double var);

// Same quantity restricted to a known linear subspace of dimension
// `effective_dim` containing both x and mean (used for zero-CoG data, where
// the density lives on the CoG-free subspace).
double gaussian_log_density_subspace(const Tensor& x, const Tensor& mean, double var,
                                     std::size_t effective_dim);

Tensor gaussian_log_density_rows_subspace(const Tensor& x, const Tensor& mean, double var,
                                          std::size_t effective_dim);

// Running mean/variance accumulator (Welford).
struct RunningMoments {
    std::size_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        ++n;
        const double d = x - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (x - mean);
    }
    double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
    double std_error() const;
};

}  // namespace bgis::numerics
