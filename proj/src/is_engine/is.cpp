#include "bgis/is_engine/is.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include "bgis/conventions.hpp"
#include "bgis/errors.hpp"
#include "bgis/numerics/stats.hpp"

namespace bgis::is_engine {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t fnv1a(std::uint64_t h, const double* v, std::size_t n) {
    constexpr std::uint64_t prime = 1099511628211ull;
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &v[i], sizeof bits);
        for (int b = 0; b < 8; ++b) {
            h ^= (bits >> (8 * b)) & 0xffu;
            h *= prime;
        }
    }
    return h;
}

std::uint64_t hash_times(const std::vector<double>& v, std::uint64_t h) {
    h = fnv1a(h, nullptr, 0);
    const double n = static_cast<double>(v.size());
    h = fnv1a(h, &n, 1);
    return fnv1a(h, v.data(), v.size());
}

Tensor projected_normal(RandomStream& rng, std::size_t rows, std::size_t cols,
                        const Geometry& geo) {
    Tensor z({rows, cols});
    rng.fill_normal(z);
    return apply_geometry(z, geo);
}

void add_rows(std::vector<double>& acc, const Tensor& rows, double sign) {
    if (acc.size() != rows.size()) throw ContractError("row accumulator length mismatch");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += sign * rows[i];
}

// Normalized weights from log weights; the shared entry point for the
// estimators, so degenerate ensembles fail the same way everywhere.
std::vector<double> normalized_weights(const WeightedEnsemble& ensemble) {
    const std::vector<double>& lw = ensemble.log_weights;
    if (lw.empty()) throw DegenerateError("ensemble has no samples");
    if (ensemble.samples.rows() != lw.size()) {
        throw ContractError("ensemble samples/log_weights lengths disagree");
    }
    bool any_finite = false;
    for (double v : lw) {
        if (std::isnan(v) || v == kInf) throw ContractError("non-finite importance log-weight");
        any_finite = any_finite || v > -kInf;
    }
    if (!any_finite) throw DegenerateError("all importance weights vanished");

    const double lse = numerics::log_sum_exp(lw);
    std::vector<double> w(lw.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(lw[i] - lse);
    return w;
}

}  // namespace

TimeGrid::TimeGrid(std::vector<double> levels, std::vector<double> tar, std::vector<double> prop)
    : t(std::move(levels)), t_tar(std::move(tar)), t_prop(std::move(prop)) {
    if (t.size() < 2) throw GridError("grid needs at least two levels", 0);
    const std::size_t N = t.size() - 1;
    if (t_tar.size() != N || t_prop.size() != N) {
        throw GridError("grid needs one target and one proposal time per step", 0);
    }
    for (double v : t) {
        if (!(v > 0.0)) throw GridError("grid levels must be positive", 0);
    }
    for (std::size_t i = 1; i <= N; ++i) {
        if (!(t[i] > t[i - 1])) throw GridError("grid levels must increase strictly", i);
    }
    if (t.back() != conventions::T_MAX) {
        throw GridError(
            "grid must end at the prior time T = " + std::to_string(conventions::T_MAX), N);
    }
    if (t_prop.front() != conventions::T_MIN) {
        throw GridError(
            "grid must anchor t_prop[0] at eps = " + std::to_string(conventions::T_MIN), 1);
    }
    for (std::size_t n = 1; n <= N; ++n) {
        if (!(t_prop[n - 1] > 0.0) || !(t_prop[n - 1] < t[n - 1])) {
            throw GridError(
                "proposal time must sit in (0, t_" + std::to_string(n - 1) + ")", n);
        }
        if (!(t_tar[n - 1] >= t[n - 1]) || !(t_tar[n - 1] < t[n])) {
            throw GridError("target time must sit in [t_" + std::to_string(n - 1) +
                                ", t_" + std::to_string(n) + ")",
                            n);
        }
        if (!(proposal_variance(n) > 0.0)) {
            throw GridError("proposal kernel variance is not positive", n);
        }
        if (!(target_variance(n) > 0.0)) {
            throw GridError("target kernel variance is not positive", n);
        }
    }
}

double TimeGrid::proposal_variance(std::size_t n) const {
    if (n == 0 || n > steps()) throw ContractError("proposal_variance: step out of range");
    return t[n - 1] * t[n - 1] - t_prop[n - 1] * t_prop[n - 1];
}

double TimeGrid::target_variance(std::size_t n) const {
    if (n == 0 || n > steps()) throw ContractError("target_variance: step out of range");
    return t[n] * t[n] - t_tar[n - 1] * t_tar[n - 1];
}

std::uint64_t TimeGrid::fingerprint() const {
    std::uint64_t h = 1469598103934665603ull;  // FNV offset basis
    h = hash_times(t, h);
    h = hash_times(t_tar, h);
    h = hash_times(t_prop, h);
    return h;
}

WeightedEnsemble baseline_ddpm_is(const Denoiser& model, const Target& target,
                                  const sampling::Schedule& schedule, double eta, std::size_t K,
                                  RandomStream& rng, bool record_trajectory) {
    if (eta == 0.0) {
        throw DegenerateError(
            "baseline_ddpm_is: eta = 0 makes the proposal a point mass with no density");
    }
    if (eta < 0.0 || eta > 1.0) throw DomainError("baseline_ddpm_is needs eta in (0, 1]");
    if (K == 0) throw ConfigError("baseline_ddpm_is: K must be positive");
    if (schedule.times.size() < 2) throw ConfigError("baseline_ddpm_is: schedule too short");
    if (target.dim() != model.dim()) {
        throw ShapeError("baseline_ddpm_is: target dim " + std::to_string(target.dim()) +
                         " vs model dim " + std::to_string(model.dim()));
    }

    const std::size_t d = model.dim();
    const Geometry geo = model.geometry();
    const std::size_t m = geo.effective_dim(d);
    const std::vector<double>& ts = schedule.times;
    const std::size_t N = ts.size() - 1;
    const double T = ts.back();

    // Identical chain (and identical draws) to ancestral_sample with
    // recording on; the densities of every kernel actually sampled are
    // accumulated as the chain descends.
    Tensor x = projected_normal(rng, K, d, geo);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] *= T;

    std::vector<double> log_w(K, 0.0);
    add_rows(log_w,
             numerics::gaussian_log_density_rows_subspace(x, Tensor::full({d}, 0.0), T * T, m),
             -1.0);

    WeightedEnsemble ens;
    if (record_trajectory) {
        ens.traj_times.assign(ts.begin(), ts.end());
        ens.trajectories.resize(N + 1);
        ens.trajectories[N] = x;
    }
    for (std::size_t i = N; i > 0; --i) {
        const double t_n = ts[i];
        const double t_prev = ts[i - 1];
        const auto [shrink, sigma] = sampling::ddim_coeffs(t_n, t_prev, eta);

        const Tensor x0_hat = model.denoise(x, t_n);
        Tensor mean({K, d});
        for (std::size_t j = 0; j < mean.size(); ++j) {
            mean[j] = shrink * x[j] + (1.0 - shrink) * x0_hat[j];
        }
        const Tensor z = projected_normal(rng, K, d, geo);
        const Tensor x_prev = numerics::axpy(sigma, z, mean);

        add_rows(log_w,
                 numerics::gaussian_log_density_rows_subspace(x_prev, mean, sigma * sigma, m),
                 -1.0);
        add_rows(log_w,
                 numerics::gaussian_log_density_rows_subspace(
                     x, x_prev, t_n * t_n - t_prev * t_prev, m),
                 1.0);

        x = x_prev;
        if (record_trajectory) ens.trajectories[i - 1] = x;
    }
    add_rows(log_w, target.unnorm_log_density_rows(x), 1.0);

    ens.samples = std::move(x);
    ens.log_weights = std::move(log_w);
    ens.nfe = N;
    ens.seed = rng.seed();
    ens.grid_hash = hash_times(ts, 1469598103934665603ull);
    return ens;
}

WeightedEnsemble proposal_rollout(const TrajectoryModel& model, const TimeGrid& grid,
                                  std::size_t K, RandomStream& rng) {
    const std::size_t N = grid.steps();
    if (N == 0) throw GridError("proposal_rollout: uninitialized grid", 0);
    if (K == 0) throw ConfigError("proposal_rollout: K must be positive");

    const std::size_t d = model.dim();
    const Geometry geo = model.geometry();
    const std::size_t m = geo.effective_dim(d);
    const double T = grid.t.back();

    Tensor x = projected_normal(rng, K, d, geo);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] *= T;

    std::vector<double> log_w(K, 0.0);
    add_rows(log_w,
             numerics::gaussian_log_density_rows_subspace(x, Tensor::full({d}, 0.0), T * T, m),
             -1.0);

    WeightedEnsemble ens;
    ens.traj_times = grid.t;
    ens.trajectories.resize(N + 1);
    ens.trajectories[N] = x;
    for (std::size_t n = N; n > 0; --n) {
        const Tensor mean = model.traverse(x, grid.t[n], grid.t_prop[n - 1]);
        const double var = grid.proposal_variance(n);
        const Tensor z = projected_normal(rng, K, d, geo);
        x = numerics::axpy(std::sqrt(var), z, mean);

        add_rows(log_w, numerics::gaussian_log_density_rows_subspace(x, mean, var, m), -1.0);
        ens.trajectories[n - 1] = x;
    }

    ens.samples = x;
    ens.log_weights = std::move(log_w);
    ens.nfe = N;
    ens.seed = rng.seed();
    ens.grid_hash = grid.fingerprint();
    return ens;
}

Tensor proposal_log_density_rows(const TrajectoryModel& model, const std::vector<Tensor>& states,
                                 const TimeGrid& grid) {
    const std::size_t N = grid.steps();
    if (N == 0) throw GridError("proposal_log_density_rows: uninitialized grid", 0);
    if (states.size() != N + 1) {
        throw ContractError("proposal_log_density_rows: expected " + std::to_string(N + 1) +
                            " trajectory slots, got " + std::to_string(states.size()));
    }
    const std::size_t d = model.dim();
    const std::size_t K = states.front().rows();
    for (const Tensor& s : states) {
        if (s.empty() || s.rows() != K || s.cols() != d) {
            throw ContractError("proposal_log_density_rows: trajectory slot missing or misshapen");
        }
    }
    const std::size_t m = model.geometry().effective_dim(d);
    const double T = grid.t.back();

    Tensor total = numerics::gaussian_log_density_rows_subspace(states[N], Tensor::full({d}, 0.0),
                                                                T * T, m);
    for (std::size_t n = N; n > 0; --n) {
        const Tensor mean = model.traverse(states[n], grid.t[n], grid.t_prop[n - 1]);
        const Tensor term = numerics::gaussian_log_density_rows_subspace(
            states[n - 1], mean, grid.proposal_variance(n), m);
        for (std::size_t k = 0; k < K; ++k) total[k] += term[k];
    }
    return total;
}

std::vector<Tensor> target_rollout(const TrajectoryModel& model, const Tensor& x0,
                                   const TimeGrid& grid, RandomStream& rng) {
    const std::size_t N = grid.steps();
    if (N == 0) throw GridError("target_rollout: uninitialized grid", 0);
    if (x0.empty() || x0.cols() != model.dim()) {
        throw ShapeError("target_rollout: x0 is " + x0.shape_str() + " for model dim " +
                         std::to_string(model.dim()));
    }
    const std::size_t K = x0.rows();
    const std::size_t d = x0.cols();
    const Geometry geo = model.geometry();

    std::vector<Tensor> states(N + 1);
    states[0] = x0;
    for (std::size_t n = 1; n <= N; ++n) {
        const Tensor mean = model.traverse(states[n - 1], grid.t[n - 1], grid.t_tar[n - 1]);
        const Tensor z = projected_normal(rng, K, d, geo);
        states[n] = numerics::axpy(std::sqrt(grid.target_variance(n)), z, mean);
    }
    return states;
}

Tensor target_log_density_rows(const TrajectoryModel& model, const std::vector<Tensor>& states,
                               const Target& target, const TimeGrid& grid) {
    const std::size_t N = grid.steps();
    if (N == 0) throw GridError("target_log_density_rows: uninitialized grid", 0);
    if (states.size() != N + 1) {
        throw ContractError("target_log_density_rows: expected " + std::to_string(N + 1) +
                            " trajectory slots, got " + std::to_string(states.size()));
    }
    const std::size_t d = model.dim();
    const std::size_t K = states.front().rows();
    for (const Tensor& s : states) {
        if (s.empty() || s.rows() != K || s.cols() != d) {
            throw ContractError("target_log_density_rows: trajectory slot missing or misshapen");
        }
    }
    const std::size_t m = model.geometry().effective_dim(d);

    Tensor total = target.unnorm_log_density_rows(states.front());
    for (std::size_t n = 1; n <= N; ++n) {
        const Tensor mean = model.traverse(states[n - 1], grid.t[n - 1], grid.t_tar[n - 1]);
        const Tensor term = numerics::gaussian_log_density_rows_subspace(
            states[n], mean, grid.target_variance(n), m);
        for (std::size_t k = 0; k < K; ++k) total[k] += term[k];
    }
    return total;
}

double target_log_density(const TrajectoryModel& model, const Tensor& trajectory,
                          const Target& target, const TimeGrid& grid) {
    const std::size_t N = grid.steps();
    if (trajectory.rows() != N + 1 || trajectory.cols() != model.dim()) {
        throw ContractError("target_log_density: trajectory must hold one state per grid level");
    }
    std::vector<Tensor> states(N + 1);
    for (std::size_t n = 0; n <= N; ++n) {
        Tensor row({1, trajectory.cols()});
        for (std::size_t c = 0; c < trajectory.cols(); ++c) row[c] = trajectory.at(n, c);
        states[n] = std::move(row);
    }
    return target_log_density_rows(model, states, target, grid)[0];
}

WeightedEnsemble bctm_is(const TrajectoryModel& model, const Target& target, const TimeGrid& grid,
                         std::size_t K, RandomStream& rng, bool record_trajectory) {
    if (target.dim() != model.dim()) {
        throw ShapeError("bctm_is: target dim " + std::to_string(target.dim()) + " vs model dim " +
                         std::to_string(model.dim()));
    }
    WeightedEnsemble ens = proposal_rollout(model, grid, K, rng);
    const Tensor tls = target_log_density_rows(model, ens.trajectories, target, grid);
    for (std::size_t k = 0; k < ens.log_weights.size(); ++k) ens.log_weights[k] += tls[k];
    ens.nfe = 2 * grid.steps();
    if (!record_trajectory) {
        ens.trajectories.clear();
        ens.traj_times.clear();
    }
    return ens;
}

SnisResult snis_estimate(const WeightedEnsemble& ensemble, const TestFunction& phi) {
    const std::vector<double> w = normalized_weights(ensemble);
    const Tensor values = phi.eval_rows(ensemble.samples);

    SnisResult res;
    for (std::size_t k = 0; k < w.size(); ++k) res.estimate += w[k] * values[k];
    double var = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
        const double dev = values[k] - res.estimate;
        var += w[k] * w[k] * dev * dev;
    }
    res.std_error = std::sqrt(var);
    return res;
}

double ess(const WeightedEnsemble& ensemble) {
    const std::vector<double> w = normalized_weights(ensemble);
    double sum_sq = 0.0;
    for (double v : w) sum_sq += v * v;
    return 1.0 / sum_sq;
}

void write_ensemble_csv(const std::string& path, const WeightedEnsemble& ensemble,
                        const std::vector<std::pair<std::string, std::string>>& metadata) {
    if (ensemble.samples.rows() != ensemble.log_weights.size()) {
        throw ContractError("write_ensemble_csv: samples/log_weights lengths disagree");
    }
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open for writing: " + path);

    char buf[48];
    out << "# nfe=" << ensemble.nfe << '\n';
    out << "# seed=" << ensemble.seed << '\n';
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(ensemble.grid_hash));
    out << "# grid_hash=" << buf << '\n';
    for (const auto& [key, value] : metadata) out << "# " << key << "=" << value << '\n';

    for (std::size_t c = 0; c < ensemble.samples.cols(); ++c) out << 'x' << c << ',';
    out << "log_weight\n";
    for (std::size_t r = 0; r < ensemble.samples.rows(); ++r) {
        for (std::size_t c = 0; c < ensemble.samples.cols(); ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", ensemble.samples.at(r, c));
            out << buf << ',';
        }
        std::snprintf(buf, sizeof buf, "%.17g", ensemble.log_weights[r]);
        out << buf << '\n';
    }
    if (!out) throw ConfigError("failed while writing: " + path);
}

}  // namespace bgis::is_engine
