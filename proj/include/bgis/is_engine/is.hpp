#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bgis/models/denoiser.hpp"
#include "bgis/models/trajectory.hpp"
#include "bgis/sampling/sample.hpp"
#include "bgis/targets/target.hpp"

namespace bgis::is_engine {

using models::Denoiser;
using models::TrajectoryModel;
using numerics::RandomStream;
using numerics::Tensor;
using targets::Target;
using targets::TestFunction;

// Interleaved times for the alternating ODE-SDE construction.  The chain
// lives on levels t_0 < ... < t_N; between adjacent levels the proposal
// hops down through t_prop[n-1] (deterministic traverse, then noise up to
// t_{n-1}) and the target hops up through t_tar[n-1] (traverse, then noise
// up to t_n).  Both intermediate times stay inside fixed windows so every
// Gaussian kernel keeps strictly positive variance.
struct TimeGrid {
    std::vector<double> t;       // N+1 levels; t.back() is the prior time T
    std::vector<double> t_tar;   // N entries, t[n-1] <= t_tar[n-1] < t[n]
    std::vector<double> t_prop;  // N entries, t_prop[n-1] < t[n-1]; t_prop[0] = eps

    TimeGrid() = default;
    // Validates every structural invariant; throws GridError.
    TimeGrid(std::vector<double> levels, std::vector<double> tar, std::vector<double> prop);

    std::size_t steps() const { return t_tar.size(); }

    // Kernel variances of step n (1-based, n in [1, steps()]).
    double proposal_variance(std::size_t n) const;
    double target_variance(std::size_t n) const;

    // Order- and value-sensitive hash of all three arrays, for manifests.
    std::uint64_t fingerprint() const;
};

// Terminal samples with their (unnormalized) importance log-weights and
// optional per-level chain states.
struct WeightedEnsemble {
    Tensor samples;                    // [K, d] at the lowest level
    std::vector<double> log_weights;   // K entries
    std::vector<double> traj_times;    // ascending level labels, when recorded
    std::vector<Tensor> trajectories;  // trajectories[n] is [K, d] at traj_times[n]
    std::size_t nfe = 0;               // network calls per sample
    std::uint64_t seed = 0;            // seed of the generating stream
    std::uint64_t grid_hash = 0;       // fingerprint of the schedule or grid

    std::size_t size() const { return log_weights.size(); }
};

// Ancestral-chain importance sampling: runs the DDIM-family chain down a
// schedule and scores each trajectory by
//   log pi(x_{t_0}) + sum_n log q(x_{t_n} | x_{t_{n-1}})
//     - log N(x_{t_N}; 0, T^2 I) - sum_n log p(x_{t_{n-1}} | x_{t_n}),
// with q the forward noising kernel and p the reverse kernel actually
// sampled.  One denoiser call per step per batch.  eta = 0 is rejected:
// the proposal degenerates to a point mass and the weights are undefined.
WeightedEnsemble baseline_ddpm_is(const Denoiser& model, const Target& target,
                                  const sampling::Schedule& schedule, double eta, std::size_t K,
                                  RandomStream& rng, bool record_trajectory = false);

// Proposal side of the alternating construction: x_{t_N} ~ N(0, T^2 I),
// then for n = N..1 traverse to t_prop[n-1] and noise up to t_{n-1}.
// log_weights holds MINUS the joint proposal log-density (prior included),
// so completing the weight only needs the target side added.  Chain states
// are always recorded (the target side rereads them); NFE = N.
WeightedEnsemble proposal_rollout(const TrajectoryModel& model, const TimeGrid& grid,
                                  std::size_t K, RandomStream& rng);

// Joint proposal log-density of already-sampled paths: prior at the top
// level plus every downward kernel, evaluated on the given states (same
// layout as target_log_density_rows).  On states produced by
// proposal_rollout this equals minus its log_weights entry for entry.
Tensor proposal_log_density_rows(const TrajectoryModel& model, const std::vector<Tensor>& states,
                                 const TimeGrid& grid);

// Samples M paths from the target construction: `x0` rows sit at the
// bottom level, then each upward kernel (traverse to t_tar[n-1], noise up
// to t[n]) in turn.  Returns states[0..N] aligned with grid.t.
std::vector<Tensor> target_rollout(const TrajectoryModel& model, const Tensor& x0,
                                   const TimeGrid& grid, RandomStream& rng);

// Target side: log pi_bar(x_{t_0}) + sum_n log q(x_{t_n} | x_{t_{n-1}})
// where q's mean is the traverse of x_{t_{n-1}} forward to t_tar[n-1].
// states[n] is [K, d] at grid.t[n]; one batched traverse per level.
Tensor target_log_density_rows(const TrajectoryModel& model, const std::vector<Tensor>& states,
                               const Target& target, const TimeGrid& grid);

// Single-trajectory convenience: row n of `trajectory` is the state at
// grid.t[n].
double target_log_density(const TrajectoryModel& model, const Tensor& trajectory,
                          const Target& target, const TimeGrid& grid);

// Full alternating-design importance sampler: proposal_rollout, then
// per-sample log-weight = target side - proposal side.  NFE = 2N traverse
// calls per sample.  Trajectories are dropped unless requested.
WeightedEnsemble bctm_is(const TrajectoryModel& model, const Target& target, const TimeGrid& grid,
                         std::size_t K, RandomStream& rng, bool record_trajectory = false);

struct SnisResult {
    double estimate = 0.0;
    double std_error = 0.0;
};

// Self-normalized estimate of E[phi] with the delta-method standard error
//   se^2 = sum_k wbar_k^2 (phi_k - estimate)^2.
// Weights are normalized in log space; all-(-inf) ensembles are degenerate.
SnisResult snis_estimate(const WeightedEnsemble& ensemble, const TestFunction& phi);

// Effective sample size 1 / sum_k wbar_k^2, in [1, K].
double ess(const WeightedEnsemble& ensemble);

// CSV export: "# key=value" metadata (nfe, seed, grid hash, then caller
// extras), a header row x0,...,log_weight, one row per sample.
void write_ensemble_csv(const std::string& path, const WeightedEnsemble& ensemble,
                        const std::vector<std::pair<std::string, std::string>>& metadata = {});

}  // namespace bgis::is_engine
