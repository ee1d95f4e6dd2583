#include "bgis/targets/gmm.hpp"

#include <cmath>

#include "bgis/numerics/stats.hpp"

namespace bgis::targets {

namespace {
constexpr double LOG_TWO_PI = 1.8378770664093454835606594728112;
// Substream purpose id for drawing mixture layouts (see RandomStream docs).
constexpr std::uint32_t LAYOUT_PURPOSE = 0xA110;
}  // namespace

GmmTarget::GmmTarget(std::vector<double> weights, Tensor means, double component_variance)
    : weights_(std::move(weights)), means_(std::move(means)), var_(component_variance) {
    if (weights_.empty()) throw ConfigError("mixture needs at least one component");
    if (means_.rank() != 2 || means_.shape()[0] != weights_.size()) {
        throw ShapeError("means " + means_.shape_str() + " vs " + std::to_string(weights_.size()) +
                         " weights");
    }
    if (var_ <= 0.0) throw ConfigError("component variance must be positive");
    double wsum = 0.0;
    for (double w : weights_) {
        if (w <= 0.0) throw ConfigError("mixture weights must be positive");
        wsum += w;
    }
    if (std::fabs(wsum - 1.0) > 1e-12) {
        for (double& w : weights_) w /= wsum;
    }
    if (!means_.all_finite()) throw ConfigError("mixture means must be finite");
    dim_ = means_.shape()[1];
    log_weights_.reserve(weights_.size());
    for (double w : weights_) log_weights_.push_back(std::log(w));
}

GmmTarget GmmTarget::random_layout(std::size_t k, std::size_t d, double box, std::uint64_t seed,
                                   double component_variance) {
    RandomStream rng = RandomStream::for_sample(seed, 0, LAYOUT_PURPOSE);
    Tensor means({k, d});
    for (std::size_t i = 0; i < means.size(); ++i) means[i] = (2.0 * rng.uniform() - 1.0) * box;
    return GmmTarget(std::vector<double>(k, 1.0 / static_cast<double>(k)), std::move(means),
                     component_variance);
}

std::string GmmTarget::name() const {
    return "gmm" + std::to_string(weights_.size()) + "_" + std::to_string(dim_) + "d";
}

double GmmTarget::log_responsibilities(const double* x, double var,
                                       std::vector<double>& logr) const {
    const std::size_t k = weights_.size();
    logr.resize(k);
    const double norm = -0.5 * static_cast<double>(dim_) * (LOG_TWO_PI + std::log(var));
    for (std::size_t j = 0; j < k; ++j) {
        const double* mu = means_.data() + j * dim_;
        double sq = 0.0;
        for (std::size_t i = 0; i < dim_; ++i) {
            const double d = x[i] - mu[i];
            sq += d * d;
        }
        logr[j] = log_weights_[j] + norm - 0.5 * sq / var;
    }
    const double lse = numerics::log_sum_exp(logr.data(), k);
    for (std::size_t j = 0; j < k; ++j) logr[j] -= lse;
    return lse;
}

Tensor GmmTarget::noised_log_density_rows(const Tensor& x, double t) const {
    if (x.cols() != dim_) throw ShapeError("density: " + x.shape_str() + " vs dim " + std::to_string(dim_));
    const double var = var_ + t * t;
    const std::size_t r = x.rows();
    Tensor out({r});
    std::vector<double> logr;
    for (std::size_t i = 0; i < r; ++i) {
        out[i] = log_responsibilities(x.data() + i * dim_, var, logr);
    }
    return out;
}

Tensor GmmTarget::unnorm_log_density_rows(const Tensor& x) const {
    return noised_log_density_rows(x, 0.0);
}

Tensor GmmTarget::sample_exact(std::size_t n, RandomStream& rng) const {
    Tensor out({n, dim_});
    const double sd = std::sqrt(var_);
    const std::size_t k = weights_.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double u = rng.uniform();
        double acc = 0.0;
        std::size_t comp = k - 1;
        for (std::size_t j = 0; j < k; ++j) {
            acc += weights_[j];
            if (u < acc) {
                comp = j;
                break;
            }
        }
        const double* mu = means_.data() + comp * dim_;
        double* row = out.data() + i * dim_;
        for (std::size_t d = 0; d < dim_; ++d) row[d] = mu[d] + sd * rng.normal();
    }
    return out;
}

Tensor GmmTarget::analytic_noised_score(const Tensor& x, double t) const {
    if (t < 0.0) throw DomainError("analytic_noised_score with t < 0");
    if (x.cols() != dim_) throw ShapeError("score: " + x.shape_str() + " vs dim " + std::to_string(dim_));
    const double var = var_ + t * t;
    const std::size_t r = x.rows(), k = weights_.size();
    Tensor out({r, dim_});
    std::vector<double> logr;
    for (std::size_t i = 0; i < r; ++i) {
        const double* xi = x.data() + i * dim_;
        log_responsibilities(xi, var, logr);
        double* oi = out.data() + i * dim_;
        for (std::size_t j = 0; j < k; ++j) {
            const double rj = std::exp(logr[j]);
            const double* mu = means_.data() + j * dim_;
            for (std::size_t d = 0; d < dim_; ++d) oi[d] += rj * (mu[d] - xi[d]);
        }
        for (std::size_t d = 0; d < dim_; ++d) oi[d] /= var;
    }
    return out;
}

Tensor GmmTarget::analytic_denoise(const Tensor& x, double t) const {
    // Posterior mean under the noised mixture: responsibilities at variance
    // v + t^2; per-component posterior mean (v*x + t^2*mu)/(v + t^2).
    if (t < 0.0) throw DomainError("analytic_denoise with t < 0");
    const Tensor score = analytic_noised_score(x, t);
    Tensor out = x;
    const double t2 = t * t;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += t2 * score[i];
    return out;
}

std::vector<std::size_t> GmmTarget::nearest_component(const Tensor& x) const {
    const std::size_t r = x.rows(), k = weights_.size();
    std::vector<std::size_t> idx(r);
    for (std::size_t i = 0; i < r; ++i) {
        const double* xi = x.data() + i * dim_;
        double best = 0.0;
        std::size_t arg = 0;
        for (std::size_t j = 0; j < k; ++j) {
            const double* mu = means_.data() + j * dim_;
            double sq = 0.0;
            for (std::size_t d = 0; d < dim_; ++d) {
                const double dd = xi[d] - mu[d];
                sq += dd * dd;
            }
            if (j == 0 || sq < best) {
                best = sq;
                arg = j;
            }
        }
        idx[i] = arg;
    }
    return idx;
}

}  // namespace bgis::targets
