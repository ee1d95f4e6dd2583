#include "bgis/targets/dw4.hpp"

#include <algorithm>
#include <cmath>

namespace bgis::targets {

Dw4Target::Dw4Target(double a, double b, double c, double d0, double tau, std::size_t n_particles,
                     std::size_t space_dim)
    : a_(a), b_(b), c_(c), d0_(d0), tau_(tau), particles_(n_particles), space_dim_(space_dim) {
    if (tau_ <= 0.0) throw ConfigError("temperature must be positive");
    if (particles_ < 2) throw ConfigError("need at least two particles");
}

double Dw4Target::energy(const double* x) const {
    double e = 0.0;
    for (std::size_t i = 0; i < particles_; ++i) {
        for (std::size_t j = i + 1; j < particles_; ++j) {
            double sq = 0.0;
            for (std::size_t k = 0; k < space_dim_; ++k) {
                const double d = x[i * space_dim_ + k] - x[j * space_dim_ + k];
                sq += d * d;
            }
            const double u = std::sqrt(sq) - d0_;
            const double u2 = u * u;
            e += a_ * u + b_ * u2 + c_ * u2 * u2;
        }
    }
    return e;
}

Tensor Dw4Target::unnorm_log_density_rows(const Tensor& x) const {
    if (x.cols() != dim()) {
        throw ShapeError("dw4 density: " + x.shape_str() + " vs dim " + std::to_string(dim()));
    }
    // The density lives on the zero-CoG subspace; project first so ambient
    // CoG components contribute nothing.
    const Tensor proj = project_zero_cog(x, particles_, space_dim_);
    const std::size_t r = proj.rows();
    Tensor out({r});
    for (std::size_t i = 0; i < r; ++i) {
        out[i] = -energy(proj.data() + i * dim()) / tau_;
    }
    return out;
}

Tensor Dw4Target::mcmc_reference(std::size_t n, const McmcConfig& config,
                                 McmcDiagnostics* diag) const {
    if (n < 1) throw ConfigError("mcmc_reference needs n >= 1");
    const std::size_t d = dim();
    const std::size_t chains = std::max<std::size_t>(1, config.chains);

    // Rest configuration: a square of side d0 (4 pairs at d0); chains start
    // from independently perturbed copies.
    std::vector<double> rest(d, 0.0);
    if (particles_ == 4 && space_dim_ == 2) {
        const double h = d0_ / 2.0;
        const double xy[8] = {-h, -h, h, -h, h, h, -h, h};
        std::copy(xy, xy + 8, rest.begin());
    }

    struct Chain {
        std::vector<double> x;
        double logp = 0.0;
        RandomStream rng;
    };

    auto project_state = [&](std::vector<double>& x) {
        for (std::size_t k = 0; k < space_dim_; ++k) {
            double m = 0.0;
            for (std::size_t p = 0; p < particles_; ++p) m += x[p * space_dim_ + k];
            m /= static_cast<double>(particles_);
            for (std::size_t p = 0; p < particles_; ++p) x[p * space_dim_ + k] -= m;
        }
    };

    std::vector<Chain> cs(chains);
    for (std::size_t c = 0; c < chains; ++c) {
        cs[c].rng = RandomStream::for_sample(config.seed, c, 0x3C3C);
        cs[c].x = rest;
        for (double& v : cs[c].x) v += 0.1 * cs[c].rng.normal();
        project_state(cs[c].x);
        cs[c].logp = -energy(cs[c].x.data()) / tau_;
    }

    double step = config.initial_step;
    std::vector<double> prop(d);

    // One Metropolis sweep over all chains; returns accepted count.
    auto sweep = [&](double step_size) {
        std::size_t accepted = 0;
        for (Chain& ch : cs) {
            for (std::size_t i = 0; i < d; ++i) prop[i] = ch.x[i] + step_size * ch.rng.normal();
            project_state(prop);
            const double logp_new = -energy(prop.data()) / tau_;
            const double log_alpha = logp_new - ch.logp;
            if (log_alpha >= 0.0 || std::log(1.0 - ch.rng.uniform() + 1e-300) < log_alpha) {
                ch.x = prop;
                ch.logp = logp_new;
                ++accepted;
            }
        }
        return accepted;
    };

    // Burn-in with step adaptation toward the target acceptance rate.
    const std::size_t adapt_window = 50;
    std::size_t window_accepts = 0;
    for (std::size_t it = 0; it < config.burn_in; ++it) {
        window_accepts += sweep(step);
        if ((it + 1) % adapt_window == 0) {
            const double rate =
                static_cast<double>(window_accepts) / static_cast<double>(adapt_window * chains);
            step *= std::exp(rate - config.target_accept);
            step = std::clamp(step, 1e-4, 10.0);
            window_accepts = 0;
        }
    }

    // Sampling phase: fixed step, round-robin collection with thinning.
    Tensor out({n, d});
    std::size_t collected = 0;
    std::size_t accepts = 0, attempts = 0;
    while (collected < n) {
        for (std::size_t s = 0; s < std::max<std::size_t>(1, config.thinning); ++s) {
            accepts += sweep(step);
            attempts += chains;
        }
        for (std::size_t c = 0; c < chains && collected < n; ++c) {
            out.set_row(collected++, cs[c].x.data(), d);
        }
    }

    const double rate = attempts ? static_cast<double>(accepts) / static_cast<double>(attempts) : 0.0;
    if (diag) {
        diag->acceptance_rate = rate;
        diag->final_step = step;
        diag->warning = rate < 0.1 || rate > 0.9;
        diag->message = diag->warning
                            ? "acceptance rate " + std::to_string(rate) + " outside [0.1, 0.9]"
                            : "";
    }
    return out;
}

}  // namespace bgis::targets
