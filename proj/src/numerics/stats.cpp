#include "bgis/numerics/stats.hpp"

#include <algorithm>
#include <cmath>

namespace bgis::numerics {

namespace {
constexpr double LOG_TWO_PI = 1.8378770664093454835606594728112;
}

double log_sum_exp(const double* v, std::size_t n) {
    if (n == 0) throw DomainError("log_sum_exp of empty input");
    double m = v[0];
    for (std::size_t i = 1; i < n; ++i) m = std::max(m, v[i]);
    if (!std::isfinite(m)) {
        // All -inf stays -inf; a NaN or +inf input propagates.
        return m;
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += std::exp(v[i] - m);
    return m + std::log(acc);
}

double log_sum_exp(const std::vector<double>& v) { return log_sum_exp(v.data(), v.size()); }

double gaussian_log_density(const Tensor& x, const Tensor& mean, double var) {
    if (var <= 0.0) throw DomainError("gaussian_log_density with var <= 0");
    if (x.size() != mean.size()) {
        throw ShapeError("gaussian_log_density: " + x.shape_str() + " vs " + mean.shape_str());
    }
    const std::size_t d = x.size();
    double sq = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double dlt = x[i] - mean[i];
        sq += dlt * dlt;
    }
    return -0.5 * static_cast<double>(d) * (LOG_TWO_PI + std::log(var)) - 0.5 * sq / var;
}

Tensor gaussian_log_density_rows(const Tensor& x, const Tensor& mean, double var) {
    if (var <= 0.0) throw DomainError("gaussian_log_density_rows with var <= 0");
    const std::size_t r = x.rows(), c = x.cols();
    const bool broadcast_mean = (mean.rows() == 1);
    if (mean.cols() != c || (!broadcast_mean && mean.rows() != r)) {
        throw ShapeError("gaussian_log_density_rows: " + x.shape_str() + " vs " + mean.shape_str());
    }
    Tensor out({r});
    const double norm = -0.5 * static_cast<double>(c) * (LOG_TWO_PI + std::log(var));
    for (std::size_t i = 0; i < r; ++i) {
        const double* px = x.data() + i * c;
        const double* pm = mean.data() + (broadcast_mean ? 0 : i * c);
        double sq = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            const double d = px[j] - pm[j];
            sq += d * d;
        }
        out[i] = norm - 0.5 * sq / var;
    }
    return out;
}

double gaussian_log_density_subspace(const Tensor& x, const Tensor& mean, double var,
                                     std::size_t effective_dim) {
    if (var <= 0.0) throw DomainError("gaussian_log_density_subspace with var <= 0");
    if (x.size() != mean.size()) {
        throw ShapeError("gaussian_log_density_subspace: " + x.shape_str() + " vs " +
                         mean.shape_str());
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - mean[i];
        sq += d * d;
    }
    return -0.5 * static_cast<double>(effective_dim) * (LOG_TWO_PI + std::log(var)) -
           0.5 * sq / var;
}

Tensor gaussian_log_density_rows_subspace(const Tensor& x, const Tensor& mean, double var,
                                          std::size_t effective_dim) {
    Tensor out = gaussian_log_density_rows(x, mean, var);
    // Swap the full-dimension normaliser for the subspace one.
    const double fix =
        0.5 * (static_cast<double>(x.cols()) - static_cast<double>(effective_dim)) *
        (LOG_TWO_PI + std::log(var));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += fix;
    return out;
}

double RunningMoments::std_error() const {
    return n > 1 ? std::sqrt(variance() / static_cast<double>(n)) : 0.0;
}

}  // namespace bgis::numerics
