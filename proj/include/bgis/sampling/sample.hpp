#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bgis/conventions.hpp"
#include "bgis/geometry.hpp"
#include "bgis/models/denoiser.hpp"
#include "bgis/models/trajectory.hpp"

namespace bgis::sampling {

using models::Denoiser;
using models::TrajectoryModel;
using numerics::RandomStream;
using numerics::Tensor;

// How a schedule's times came to be; carried along for provenance in
// exports and manifests.
enum class ScheduleRule { LogSpace, RhoPower, Explicit };

const char* schedule_rule_name(ScheduleRule rule);

// Ordered times t_0 < t_1 < ... < t_N covering the sampler's noise range
// (t_0 the smallest time reached, t_N the prior time).
struct Schedule {
    std::vector<double> times;
    ScheduleRule rule = ScheduleRule::Explicit;

    Schedule() = default;
    Schedule(std::vector<double> ts, ScheduleRule r);  // validates ordering

    std::size_t steps() const { return times.empty() ? 0 : times.size() - 1; }
    double eps() const { return times.front(); }
    double horizon() const { return times.back(); }
};

// t_i = eps * (T/eps)^(i/N) for i = 0..N: even spacing in log time.
Schedule log_schedule(std::size_t N, double eps = conventions::T_MIN,
                      double T = conventions::T_MAX);

// Forward (noising) kernel: x + sqrt(t_to^2 - t_from^2) z with z standard
// normal, projected to the zero-CoG subspace when the geometry lives there.
Tensor forward_noise(const Tensor& x, double t_from, double t_to, RandomStream& rng,
                     const Geometry& geo = {});

// Coefficients of one reverse step t_n -> t_prev of the DDIM family:
//   x' = shrink * x + (1 - shrink) * D(x, t_n) + sigma * z,
//   sigma  = eta * sqrt((t_n^2 - t_prev^2) t_prev^2 / t_n^2),
//   shrink = sqrt((t_prev^2 - sigma^2)/t_n^2).
struct DdimCoeffs {
    double shrink = 0.0;
    double sigma = 0.0;
};

DdimCoeffs ddim_coeffs(double t_n, double t_prev, double eta);

// One reverse step of the DDIM family (coefficients above).  eta = 1 is the
// ancestral (DDPM) kernel; eta = 0 is deterministic and coincides with the
// explicit Euler step of the probability-flow ODE.
Tensor ddim_step(const Denoiser& model, const Tensor& x, double t_n, double t_prev, double eta,
                 RandomStream& rng);

struct AncestralResult {
    Tensor samples;             // [K, dim] at the schedule's smallest time
    std::vector<double> times;  // labels for `states`, strictly decreasing
    std::vector<Tensor> states; // chain states incl. the prior draw (when recorded)
};

// K chains: draw x ~ N(0, T^2 I) at the schedule's top time (projected for
// particle systems), then iterate ddim_step down the schedule.
AncestralResult ancestral_sample(const Denoiser& model, const Schedule& schedule, double eta,
                                 std::size_t K, RandomStream& rng,
                                 bool record_trajectory = false);

struct MultistepResult {
    Tensor samples;       // [K, dim]
    std::size_t nfe = 0;  // trajectory-model calls per chain
};

// Consistency-style few-step sampling: hop to the floor time, re-noise to
// the next anchor, hop again.  `times` is strictly decreasing within
// [floor, T]; NFE equals times.size().
MultistepResult cm_multistep_sample(const TrajectoryModel& model, const std::vector<double>& times,
                                    std::size_t K, RandomStream& rng,
                                    double floor_time = conventions::T_MIN);

// CSV export: "# key=value" metadata lines, a header row x0,x1,..., then
// one row per sample at full precision.
void write_samples_csv(const std::string& path, const Tensor& samples,
                       const std::vector<std::pair<std::string, std::string>>& metadata);

}  // namespace bgis::sampling
