#pragma once

#include <vector>

#include "bgis/targets/target.hpp"

namespace bgis::targets {

// Isotropic Gaussian mixture with shared component variance.  The
// normaliser is known, so unnorm_log_density_rows returns the exact
// (normalized) mixture log-density and log_normalizer() is 0.
//
// Everything needed from the mixture analytically — the t-noised score,
// the posterior-mean denoiser, the exact flow map between noise levels —
// follows from the standard fact that convolving with N(0, t^2 I)
// inflates the component variance to v + t^2.
class GmmTarget : public Target {
public:
    GmmTarget(std::vector<double> weights, Tensor means, double component_variance);

    // The default benchmark family: k equal-weight components, means drawn
    // uniformly from [-box, box]^d by the given seed, unit variance.
    static GmmTarget random_layout(std::size_t k, std::size_t d, double box, std::uint64_t seed,
                                   double component_variance = 1.0);

    std::string name() const override;
    std::size_t dim() const override { return dim_; }

    Tensor unnorm_log_density_rows(const Tensor& x) const override;

    bool has_exact_sampler() const override { return true; }
    Tensor sample_exact(std::size_t n, RandomStream& rng) const override;

    bool has_analytic_score() const override { return true; }
    Tensor analytic_noised_score(const Tensor& x, double t) const override;
    Tensor analytic_denoise(const Tensor& x, double t) const override;

    bool has_log_normalizer() const override { return true; }
    double log_normalizer() const override { return 0.0; }

    // Mixture log-density with every component variance inflated by t^2.
    Tensor noised_log_density_rows(const Tensor& x, double t) const;

    std::size_t components() const { return weights_.size(); }
    const std::vector<double>& weights() const { return weights_; }
    const Tensor& means() const { return means_; }
    double component_variance() const { return var_; }

    // Index of the nearest mean per row (mode-assignment histograms).
    std::vector<std::size_t> nearest_component(const Tensor& x) const;

private:
    // Log responsibilities under variance `var` at x (one row), written
    // into `logr`; returns their log-sum (the mixture log-density).
    double log_responsibilities(const double* x, double var, std::vector<double>& logr) const;

    std::vector<double> weights_;
    std::vector<double> log_weights_;
    Tensor means_;  // [K, d]
    double var_;
    std::size_t dim_;
};

}  // namespace bgis::targets
