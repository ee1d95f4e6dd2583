#pragma once

#include <limits>
#include <string>
#include <vector>

#include "bgis/models/denoiser.hpp"
#include "bgis/models/trajectory.hpp"

namespace bgis::training {

using models::Denoiser;
using models::NetDenoiser;
using models::BctmModel;
using models::ScoreFn;
using numerics::RandomStream;
using numerics::Tensor;

// --- probability-flow ODE solver -------------------------------------------

// One Heun (second-order) step of dx/dt = -t * score(x, t) from t to u:
// Euler predictor plus trapezoidal corrector.
Tensor heun_step(const ScoreFn& score, const Tensor& x, double t, double u);

// Multi-step integration t -> s with geometric substeps, each moving
// |ln(t_next/t_cur)| <= max_log_step.  Works in both time directions.
Tensor solve_pf_ode(const ScoreFn& score, const Tensor& x, double t, double s,
                    double max_log_step = 0.25);

// --- reports -----------------------------------------------------------------

struct TrainStep {
    std::size_t iter = 0;
    double loss = 0.0;
    double grad_norm = 0.0;  // pre-clip global gradient norm
    double eval_loss = 0.0;  // NaN when this row carried no evaluation
};

// A zero-iteration run returns a default report (empty history, NaN losses)
// and leaves the model untouched.
struct TrainReport {
    std::vector<TrainStep> history;
    double best_eval = std::numeric_limits<double>::quiet_NaN();
    std::size_t best_iter = 0;
    double final_train_loss = std::numeric_limits<double>::quiet_NaN();
    double seconds = 0.0;

    void write_csv(const std::string& path) const;
};

// --- denoising score matching ---------------------------------------------

struct DsmConfig {
    std::size_t iters = 6000;
    std::size_t batch = 256;
    double lr = 1e-3;
    double lr_final_frac = 0.05;  // linear decay target, as a fraction of lr
    double ema_mu = 0.999;
    double grad_clip = 10.0;
    std::size_t eval_every = 250;
    std::size_t eval_batch = 1024;
    // Fraction of time draws taken log-uniform on [eps, T] instead of the
    // log-normal training distribution, so the integration range up to T
    // stays covered regardless of the data scale.
    double uniform_time_frac = 0.2;
    std::uint64_t seed = 0;
};

// Trains D_theta by weighted denoising score matching on `data` (one sample
// per row).  The model is left holding the best-evaluation EMA parameters.
TrainReport train_dsm(NetDenoiser& model, const Tensor& data, const DsmConfig& cfg);

// --- trajectory distillation --------------------------------------------------

struct DistillConfig {
    std::size_t iters = 4000;
    std::size_t batch = 256;
    double lr = 3e-4;
    double lr_final_frac = 0.05;   // linear decay target, as a fraction of lr
    double ema_mu = 0.999;         // teacher momentum
    double lambda_ctm = 1.0;
    double lambda_dsm = 1.0;
    // Auxiliary intermediate-consistency weight: compares the teacher's and
    // student's time-s states in sd * c_in(s) units (relative error on the
    // state scale at s).  The endpoint loss alone under-penalises hops
    // toward large s (the final transport to eps compresses their errors),
    // which is exactly where the reverse-direction traverses live.
    double lambda_mid = 1.0;
    double grad_clip = 10.0;
    double solver_max_log_step = 0.25;
    // Endpoint-pair shaping: all draws stay inside the sampler's time range,
    // these knobs only tilt where the training signal concentrates.
    double endpoint_frac = 0.15;  // force t = T this often
    double s_eps_frac = 0.25;     // force s = eps this often
    // For denoising pairs (s < t) the solver cut sits at
    // ln u = ln s + (ln t - ln s) * U^u_bias_pow; powers > 1 lengthen the
    // solver leg, which supervises the student directly instead of through
    // the still-untrained teacher hops.  Noising pairs (s > t) take the
    // solver straight from t to s and use no cut.
    double u_bias_pow = 2.0;
    // Cap on |ln(t/u)| per iteration, bounding worst-case solver cost.  The
    // default clears the full time range, so it only binds when lowered.
    double max_solver_span = 11.0;
    // Endpoint pairs drawn per batch (each supervises batch/time_groups
    // rows); more groups cover the (t, s) plane faster at equal FLOPs.
    std::size_t time_groups = 8;
    std::size_t eval_every = 250;
    std::size_t eval_batch = 512;
    std::uint64_t seed = 0;
};

// Distills the teacher score field into a bidirectional trajectory model:
// soft consistency matching (solver hop t->u, EMA-teacher hops u->s->eps,
// against online hops t->s->eps; noising pairs s > t replace the first two
// legs with a direct solver integration t->s) plus the anchor denoising
// loss on g(x_t, t, t).  Endpoint pairs are drawn with s != t, covering
// both time directions.  The student is left holding the best-evaluation
// EMA weights.
TrainReport distill_bctm(BctmModel& student, const ScoreFn& teacher_score, const Tensor& data,
                         const DistillConfig& cfg);

}  // namespace bgis::training
