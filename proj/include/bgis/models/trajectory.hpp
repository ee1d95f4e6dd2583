#pragma once

#include <memory>

#include "bgis/models/denoiser.hpp"

namespace bgis::models {

// f(x, t -> s): estimate of the probability-flow ODE solution at time s
// started from (x, t).  s may be smaller or larger than t.
class TrajectoryModel {
public:
    virtual ~TrajectoryModel() = default;

    virtual std::size_t dim() const = 0;
    virtual Geometry geometry() const { return {}; }

    virtual Tensor traverse(const Tensor& x, double t, double s) const = 0;

    // Tape-capable models additionally rebuild traverse() as graph ops so
    // objectives can differentiate through states and endpoint times.
    // `bind` copies whatever the graph needs onto the tape (as constants);
    // t and s are [1,1] or per-row [B,1] Vars.
    virtual bool supports_tape() const { return false; }
    virtual std::vector<Var> bind(Tape& tape) const;
    virtual Var traverse_on(Tape& tape, const std::vector<Var>& params, Var x, Var t,
                            Var s) const;
};

// Consistency-style trajectory network
//   G(x, t, s) = (s/t) x + (1 - s/t) g(x, t, s),
// with g the residual-preconditioned core conditioned on both endpoints.
// The anchoring G(x, t, t) = x holds structurally, and g(x, t, t) plays the
// role of a denoiser (it is what the auxiliary score-matching loss trains).
class BctmModel : public TrajectoryModel {
public:
    BctmModel(std::unique_ptr<Core> core, double sigma_data, Geometry geo = {});

    std::size_t dim() const override { return core_->x_dim(); }
    Geometry geometry() const override { return geo_; }
    double sigma_data() const { return sigma_data_; }

    Tensor traverse(const Tensor& x, double t, double s) const override;
    bool supports_tape() const override { return true; }
    std::vector<Var> bind(Tape& tape) const override { return core_->bind(tape, false); }
    Var traverse_on(Tape& tape, const std::vector<Var>& params, Var x, Var t,
                    Var s) const override;

    // g(x, t, t): the model's built-in denoiser at time t.
    Tensor anchor_denoise(const Tensor& x, double t) const;
    Var anchor_denoise_on(Tape& tape, const std::vector<Var>& params, Var x, Var t) const;

    Core& core() { return *core_; }
    const Core& core() const { return *core_; }

private:
    std::unique_ptr<Core> core_;
    double sigma_data_;
    Geometry geo_;
};

BctmModel make_mlp_trajectory(std::size_t dim, const std::vector<std::size_t>& hidden,
                              double sigma_data, std::uint64_t seed);
BctmModel make_egnn_trajectory(const Geometry& geo, std::size_t hidden, std::size_t layers,
                               double sigma_data, std::uint64_t seed);

}  // namespace bgis::models
