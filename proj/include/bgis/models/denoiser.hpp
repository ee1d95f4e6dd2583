#pragma once

#include <functional>
#include <memory>

#include "bgis/geometry.hpp"
#include "bgis/models/core.hpp"

namespace bgis::models {

// D(x, t) ~= E[x_0 | x_t = x].  The score of the noised density follows as
// (D(x,t) - x) / t^2 and the probability-flow ODE as dx/dt = (x - D)/t.
class Denoiser {
public:
    virtual ~Denoiser() = default;

    virtual std::size_t dim() const = 0;
    virtual Geometry geometry() const { return {}; }

    // Batched denoising at a shared time t > 0.
    virtual Tensor denoise(const Tensor& x, double t) const = 0;

    // Score of the t-noised density, via the denoiser identity.
    Tensor score(const Tensor& x, double t) const;
};

// Batched score field; time is the shared noise scale of the batch.
using ScoreFn = std::function<Tensor(const Tensor& x, double t)>;

ScoreFn score_from_denoiser(const Denoiser& d);

// Residual-preconditioned denoiser around a raw core:
//   D(x,t) = c_skip(t) x + c_out(t) F(c_in(t) x, features(t) [, features(s)]).
// The tape overload is the training entry point; the plain overload runs
// chunked inference with constant parameters.
Var preconditioned_denoise_on(Tape& tape, const Core& core, const std::vector<Var>& params, Var x,
                              Var t, Var s, double sigma_data);

// Trainable denoiser: a core plus frozen data scale and geometry.
class NetDenoiser : public Denoiser {
public:
    NetDenoiser(std::unique_ptr<Core> core, double sigma_data, Geometry geo = {});

    std::size_t dim() const override { return core_->x_dim(); }
    Geometry geometry() const override { return geo_; }
    double sigma_data() const { return sigma_data_; }

    Tensor denoise(const Tensor& x, double t) const override;
    Var denoise_on(Tape& tape, const std::vector<Var>& params, Var x, Var t) const;

    Core& core() { return *core_; }
    const Core& core() const { return *core_; }

private:
    std::unique_ptr<Core> core_;
    double sigma_data_;
    Geometry geo_;
};

// Fresh fully-connected denoiser with He-initialized hidden stack and a
// zero read-out (so D(x, t) = c_skip(t) x exactly at initialization).
NetDenoiser make_mlp_denoiser(std::size_t dim, const std::vector<std::size_t>& hidden,
                              double sigma_data, std::uint64_t seed);

// Fresh equivariant denoiser for particle systems.
NetDenoiser make_egnn_denoiser(const Geometry& geo, std::size_t hidden, std::size_t layers,
                               double sigma_data, std::uint64_t seed);

// sqrt(mean coordinate variance) of a sample batch; the data scale frozen
// into checkpoints.
double estimate_sigma_data(const Tensor& samples);

}  // namespace bgis::models
