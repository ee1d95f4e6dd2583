#pragma once

#include "bgis/models/denoiser.hpp"
#include "bgis/models/trajectory.hpp"
#include "bgis/targets/gmm.hpp"

namespace bgis::models {

// Closed-form posterior-mean denoiser of a Gaussian mixture: the exact
// teacher/oracle that trained networks are measured against.
class AnalyticGmmDenoiser : public Denoiser {
public:
    explicit AnalyticGmmDenoiser(targets::GmmTarget gmm) : gmm_(std::move(gmm)) {}

    std::size_t dim() const override { return gmm_.dim(); }
    Tensor denoise(const Tensor& x, double t) const override {
        return gmm_.analytic_denoise(x, t);
    }
    const targets::GmmTarget& gmm() const { return gmm_; }

private:
    targets::GmmTarget gmm_;
};

// Exact flow map of a single isotropic Gaussian N(mean, v I): noised
// marginals stay Gaussian, and the probability-flow ODE transports
//   x(s) = mean + (x(t) - mean) * sqrt((v + s^2) / (v + t^2)).
// Doubles as the exact trajectory model in closed-form tests.
class GaussianFlowModel : public TrajectoryModel {
public:
    GaussianFlowModel(Tensor mean, double variance);

    std::size_t dim() const override { return mean_.size(); }
    Tensor traverse(const Tensor& x, double t, double s) const override;

    bool supports_tape() const override { return true; }
    std::vector<Var> bind(Tape&) const override { return {}; }
    Var traverse_on(Tape& tape, const std::vector<Var>& params, Var x, Var t,
                    Var s) const override;

    const Tensor& mean() const { return mean_; }
    double variance() const { return var_; }

private:
    Tensor mean_;  // [d]
    double var_;
};

}  // namespace bgis::models
