#pragma once

#include <string>
#include <vector>

#include "bgis/targets/target.hpp"

namespace bgis::targets {

struct McmcConfig {
    std::size_t chains = 64;
    std::size_t burn_in = 2000;      // adaptation happens here
    std::size_t thinning = 10;
    double initial_step = 0.3;
    double target_accept = 0.4;
    std::uint64_t seed = 0;
};

struct McmcDiagnostics {
    double acceptance_rate = 0.0;
    double final_step = 0.0;
    bool warning = false;
    std::string message;
};

// Four-particle planar double-well: pairwise energy
//   E(x) = sum_{i<j} a*(d_ij - d0) + b*(d_ij - d0)^2 + c*(d_ij - d0)^4
// at temperature tau, defined on the zero-CoG subspace (densities are
// evaluated after projection; the ambient dimension stays 8).
class Dw4Target : public Target {
public:
    Dw4Target(double a, double b, double c, double d0, double tau, std::size_t n_particles = 4,
              std::size_t space_dim = 2);

    // The standard convention from the Boltzmann-generator literature.
    static Dw4Target standard() { return Dw4Target(0.0, -4.0, 0.9, 4.0, 1.0); }

    std::string name() const override { return "dw4"; }
    std::size_t dim() const override { return particles_ * space_dim_; }
    Geometry geometry() const override { return Geometry{particles_, space_dim_, true}; }

    Tensor unnorm_log_density_rows(const Tensor& x) const override;

    double energy(const double* x) const;  // one already-projected configuration

    // Metropolis-Hastings reference sampler in the zero-CoG subspace.
    // Isotropic Gaussian proposals; the step size adapts during burn-in
    // toward config.target_accept. Chains start from perturbed rest
    // configurations and are interleaved into the output reservoir.
    Tensor mcmc_reference(std::size_t n, const McmcConfig& config, McmcDiagnostics* diag) const;

    double pair_a() const { return a_; }
    double pair_b() const { return b_; }
    double pair_c() const { return c_; }
    double rest_distance() const { return d0_; }
    double temperature() const { return tau_; }

private:
    double a_, b_, c_, d0_, tau_;
    std::size_t particles_, space_dim_;
};

}  // namespace bgis::targets
