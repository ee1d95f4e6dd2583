#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "bgis/is_engine/is.hpp"
#include "bgis/models/trajectory.hpp"
#include "bgis/numerics/random.hpp"
#include "bgis/numerics/tape.hpp"
#include "bgis/targets/target.hpp"

namespace bgis::schedule_opt {

using is_engine::TimeGrid;
using models::TrajectoryModel;
using numerics::RandomStream;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;
using targets::Target;

// --- grid parameterization --------------------------------------------------

// Unconstrained time-grid parameters; sigmoid maps every raw value into
// (0, 1) strictly.  raw_mu places the levels by the descending recursion
// t_n = mu_n (t_{n+1} - eps) + eps; raw_eta places each target time inside
// its step, t_tar = t_n + eta_n (t_{n+1} - t_n).  Proposal times are
// derived: the Matched rule equates proposal and target kernel variances
// wherever the interval allows (clamping at eps otherwise) and then pulls
// the bottom level down to rebalance the first step; the Explicit rule
// instead places them by sigmoid(raw_gamma) between eps and the step's
// lower level and leaves the bottom level on the mu recursion.
struct ScheduleParams {
    enum class ProposalRule { Matched, Explicit };

    std::vector<double> raw_mu;
    std::vector<double> raw_eta;
    std::vector<double> raw_gamma;  // Explicit rule only; N-1 entries
    ProposalRule rule = ProposalRule::Matched;

    // All raw values equal: raw = 0 gives the halving grid mu = eta = 1/2.
    static ScheduleParams uniform(std::size_t steps, double raw = 0.0);

    std::size_t steps() const { return raw_mu.size(); }
};

double sigmoid(double x);

// Maps parameters to a concrete grid of N steps on [eps, T].  The engine's
// grids live on the conventions' interval, so eps and T must equal T_MIN
// and T_MAX; other values are rejected up front rather than failing the
// TimeGrid invariants downstream.
TimeGrid build_time_grid(const ScheduleParams& params, double eps, double T, std::size_t N);

// Grid that makes bctm_is exact on a single isotropic Gaussian N(mu, v I)
// under its closed-form flow model: choosing the target times so that
//   (v + t_tar^2)(v + t_{n-1}^2) = (v + t_prop^2)(v + t_n^2)
// equates every adjacent-level two-point joint of proposal and target, so
// the log-weights telescope to two boundary terms of order t_0^4/v^2 and
// v^2/T^4.  Levels are log-spaced on [t0, T_MAX]; t_prop[0] is pinned to
// T_MIN and t_prop[n-1] = t_{n-1}^2/t_n above.  Needs t0 in (T_MIN, T_MAX)
// and a step ratio large enough that the matched target time stays above
// its level (violations fail the TimeGrid invariants).
TimeGrid gaussian_exact_grid(std::size_t N, double v, double t0);

// --- target draws -------------------------------------------------------------

// Source of bottom-level samples for objective estimation.
class SampleSource {
public:
    virtual ~SampleSource() = default;
    virtual std::size_t dim() const = 0;
    virtual Tensor sample(std::size_t n, RandomStream& rng) const = 0;
};

// Draws through Target::sample_exact.
class ExactSampleSource : public SampleSource {
public:
    explicit ExactSampleSource(const Target& target);
    std::size_t dim() const override { return target_->dim(); }
    Tensor sample(std::size_t n, RandomStream& rng) const override;

private:
    const Target* target_;
};

// Resamples rows of a fixed bank with replacement (MCMC reservoirs).
class ReservoirSampleSource : public SampleSource {
public:
    explicit ReservoirSampleSource(Tensor bank);
    std::size_t dim() const override { return bank_.cols(); }
    Tensor sample(std::size_t n, RandomStream& rng) const override;
    std::size_t size() const { return bank_.rows(); }

private:
    Tensor bank_;
};

// --- forward KL objective -------------------------------------------------------

// log(target joint) - log(proposal joint), one value per path, on paths
// rolled forward from the given bottom-level samples with the given
// per-step standard normals (noise[n-1] drives the step up to level n; it
// is projected to the model's geometry here).  Estimates the forward KL
// between the constructions up to the target's log-normalizer.
Tensor forward_kl_paths(const TrajectoryModel& model, const Target& target, const TimeGrid& grid,
                        const Tensor& x0, const std::vector<Tensor>& noise);

// Monte Carlo estimate over M fresh paths.
double forward_kl_objective(const TrajectoryModel& model, const Target& target,
                            const SampleSource& source, const TimeGrid& grid, std::size_t M,
                            RandomStream& rng);

// Tape rebuild of build_time_grid (Matched rule) from raw parameters
// [1, 2N]: mu block then eta block.  Values equal build_time_grid's output
// on the unpacked parameters; the max/min clamps follow whichever branch
// the values select, so gradients are the active branch's.
struct TimeGridVars {
    std::vector<Var> t;       // N+1 levels, ascending
    std::vector<Var> t_tar;   // N
    std::vector<Var> t_prop;  // N
};
TimeGridVars build_time_grid_on(Tape& tape, Var raw, double eps, double T, std::size_t N);

// Reparameterized objective: equals mean(forward_kl_paths) on the path
// that (x0, noise) induce through the raw parameters' grid, with gradients
// flowing into `raw` through kernel variances, traverse endpoint times,
// and the sampled states.  `net` must come from model.bind(tape).
Var forward_kl_on(Tape& tape, const TrajectoryModel& model, const std::vector<Var>& net,
                  const Target& target, Var raw, const Tensor& x0,
                  const std::vector<Tensor>& noise, double eps, double T);

// --- tuning -----------------------------------------------------------------------

struct TuneConfig {
    std::size_t steps = 500;
    std::size_t paths = 256;  // M per step
    double lr = 5e-2;
    double grad_clip = 25.0;
    std::uint64_t seed = 0;
};

struct TuneReport {
    // Objective recorded at the parameters each step saw, before its update;
    // entry 0 is the starting parameters' value.
    std::vector<double> objective;
    double best_objective = std::numeric_limits<double>::quiet_NaN();
    std::size_t best_step = 0;
};

// Adam on (raw_mu, raw_eta) against the reparameterized forward KL, fresh
// paths each step.  Returns the best-seen parameters, so the result never
// records worse than params0; zero steps return params0 unchanged.
// Deterministic given cfg.seed.  Matched rule only.
ScheduleParams tune_grid(const ScheduleParams& params0, const TrajectoryModel& model,
                         const Target& target, const SampleSource& source, const TuneConfig& cfg,
                         TuneReport* report = nullptr);

// --- persistence --------------------------------------------------------------------

struct TunedGrid {
    ScheduleParams params;
    TimeGrid grid;
    std::vector<double> trace;  // objective per tuning step
};

// JSON round-trip: raw parameters, mapped times, objective trace, and the
// grid fingerprint (verified on load).
void save_tuned_grid(const std::string& path, const TunedGrid& tuned);
TunedGrid load_tuned_grid(const std::string& path);

}  // namespace bgis::schedule_opt
