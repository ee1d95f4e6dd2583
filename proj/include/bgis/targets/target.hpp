#pragma once

#include <cstddef>
#include <memory>
#include <string>

#include "bgis/errors.hpp"
#include "bgis/geometry.hpp"
#include "bgis/numerics/random.hpp"
#include "bgis/numerics/tensor.hpp"

namespace bgis::targets {

using numerics::RandomStream;
using numerics::Tensor;

using bgis::Geometry;
using bgis::project_zero_cog;

// Boltzmann-style target distribution.  Evaluation is pure; objects are
// immutable after construction.
class Target {
public:
    virtual ~Target() = default;

    virtual std::string name() const = 0;
    virtual std::size_t dim() const = 0;
    virtual Geometry geometry() const { return {}; }
    std::size_t effective_dim() const { return geometry().effective_dim(dim()); }

    // Log of the (possibly unnormalized) density; [R, d] -> [R].
    virtual Tensor unnorm_log_density_rows(const Tensor& x) const = 0;
    double unnorm_log_density(const Tensor& x) const;

    virtual bool has_exact_sampler() const { return false; }
    virtual Tensor sample_exact(std::size_t n, RandomStream& rng) const;

    // Exact score of the t-noised density (data convolved with N(0, t^2 I)),
    // available only for analytically tractable targets.
    virtual bool has_analytic_score() const { return false; }
    virtual Tensor analytic_noised_score(const Tensor& x, double t) const;

    // Exact posterior mean E[x_0 | x_t = x]; same availability as the score.
    virtual Tensor analytic_denoise(const Tensor& x, double t) const;

    // log Z when known (lets integral estimates be compared in absolute terms).
    virtual bool has_log_normalizer() const { return false; }
    virtual double log_normalizer() const;
};

// Scalar observables phi(x) whose expectations the sampler estimates.
class TestFunction {
public:
    enum class Tag { LogL2Norm, LogL1Norm, CosL2Norm };

    explicit TestFunction(Tag tag) : tag_(tag) {}
    static TestFunction parse(const std::string& name);

    Tag tag() const { return tag_; }
    std::string name() const;

    // phi for a single configuration (flat tensor).
    double operator()(const Tensor& x) const;
    // phi row-wise: [R, d] -> [R].
    Tensor eval_rows(const Tensor& x) const;

private:
    Tag tag_;
};

}  // namespace bgis::targets
