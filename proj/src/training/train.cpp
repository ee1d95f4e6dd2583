#include "bgis/training/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <utility>

#include "bgis/conventions.hpp"
#include "bgis/errors.hpp"
#include "bgis/geometry.hpp"
#include "bgis/numerics/adam.hpp"

namespace bgis::training {

namespace {

using models::ema_update;
using numerics::AdamState;
using numerics::adam_step;
using numerics::axpy;
using numerics::clip_global_norm;
using numerics::Tape;
using numerics::Var;

constexpr double NO_EVAL = std::numeric_limits<double>::quiet_NaN();
// Endpoint pairs closer than this in log-time carry almost no signal.
constexpr double MIN_LOG_SEP = 0.05;

double elapsed_seconds(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

// Linear learning-rate decay from lr to lr * final_frac across the run.
double decayed_lr(double lr, double final_frac, std::size_t it, std::size_t iters) {
    if (iters <= 1) return lr;
    const double progress = static_cast<double>(it) / static_cast<double>(iters - 1);
    return lr * (1.0 - (1.0 - final_frac) * progress);
}

Tensor gather_rows(const Tensor& data, RandomStream& rng, std::size_t n) {
    const std::size_t d = data.cols();
    Tensor out({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t idx = rng.uniform_index(data.rows());
        out.set_row(i, data.data() + idx * d, d);
    }
    return out;
}

// Standard normal noise, restricted to the zero-CoG subspace when the
// geometry lives there (the forward process never leaves that subspace).
Tensor draw_noise(RandomStream& rng, std::size_t rows, std::size_t cols, const Geometry& geo) {
    Tensor z({rows, cols});
    rng.fill_normal(z);
    return apply_geometry(z, geo);
}

std::vector<Tensor> snapshot_params(const std::vector<const Tensor*>& params) {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const Tensor* p : params) out.push_back(*p);
    return out;
}

void load_params(const std::vector<Tensor>& src, std::vector<Tensor*> dst) {
    if (src.size() != dst.size()) throw ContractError("parameter snapshot size mismatch");
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = src[i];
}

// Bias-corrected EMA of the online parameters (Adam-style): the raw
// accumulator starts at zero and is divided by 1 - mu^step when
// materialized, so short runs are not anchored at the initialization.
class EmaTracker {
public:
    // Seeds the accumulator with the initial parameters so the EMA is
    // well-defined (and equal to them) before the first training step.
    explicit EmaTracker(const std::vector<const Tensor*>& params, double mu) : mu_(mu) {
        raw_.reserve(params.size());
        for (const Tensor* p : params) raw_.push_back(Tensor::zeros_like(*p));
        update(params);
    }

    void update(const std::vector<const Tensor*>& online) {
        std::vector<Tensor*> dst;
        dst.reserve(raw_.size());
        for (Tensor& t : raw_) dst.push_back(&t);
        ema_update(dst, online, mu_);
        ++steps_;
    }

    void materialize(std::vector<Tensor*> dst) const {
        if (steps_ == 0) throw ContractError("EMA materialized before any update");
        const double corr = 1.0 / (1.0 - std::pow(mu_, static_cast<double>(steps_)));
        for (std::size_t i = 0; i < raw_.size(); ++i) {
            *dst[i] = raw_[i];
            for (std::size_t j = 0; j < dst[i]->size(); ++j) (*dst[i])[j] *= corr;
        }
    }

private:
    double mu_;
    std::size_t steps_ = 0;
    std::vector<Tensor> raw_;
};

// Backward pass bookkeeping shared by both trainers: clip + Adam step.
// Returns the pre-clip global gradient norm.
double apply_gradients(Tape& tape, const std::vector<Var>& param_vars,
                       std::vector<Tensor*> params, AdamState& opt, double grad_clip) {
    std::vector<Tensor> grads;
    grads.reserve(param_vars.size());
    for (Var p : param_vars) grads.push_back(tape.grad(p));
    const double norm = clip_global_norm(grads, grad_clip);
    std::vector<const Tensor*> gp;
    gp.reserve(grads.size());
    for (const Tensor& g : grads) gp.push_back(&g);
    adam_step(opt, params, gp);
    return norm;
}

}  // namespace

// --- probability-flow ODE solver -------------------------------------------

Tensor heun_step(const ScoreFn& score, const Tensor& x, double t, double u) {
    if (t <= 0.0 || u <= 0.0) throw DomainError("heun_step with non-positive time");
    if (t == u) return x;
    const double h = u - t;
    const Tensor d1 = score(x, t);  // dx/dt = -t * score
    const Tensor x_pred = axpy(-h * t, d1, x);
    const Tensor d2 = score(x_pred, u);
    Tensor out = axpy(-0.5 * h * t, d1, x);
    return axpy(-0.5 * h * u, d2, out);
}

Tensor solve_pf_ode(const ScoreFn& score, const Tensor& x, double t, double s,
                    double max_log_step) {
    if (t <= 0.0 || s <= 0.0) throw DomainError("solve_pf_ode with non-positive time");
    if (max_log_step <= 0.0) throw DomainError("solve_pf_ode needs a positive step cap");
    if (t == s) return x;
    const double span = std::fabs(std::log(s / t));
    const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(span / max_log_step)));
    const double ratio = std::pow(s / t, 1.0 / static_cast<double>(n));
    Tensor cur = x;
    double tc = t;
    for (std::size_t k = 0; k < n; ++k) {
        const double tn = (k + 1 == n) ? s : tc * ratio;
        cur = heun_step(score, cur, tc, tn);
        tc = tn;
    }
    return cur;
}

// --- reports -----------------------------------------------------------------

void TrainReport::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    out << "iter,loss,grad_norm,eval_loss\n";
    char buf[96];
    for (const TrainStep& st : history) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,", st.iter, st.loss, st.grad_norm);
        out << buf;
        if (std::isfinite(st.eval_loss)) {
            std::snprintf(buf, sizeof buf, "%.17g", st.eval_loss);
            out << buf;
        }
        out << '\n';
    }
    if (!out) throw ConfigError("failed while writing: " + path);
}

// --- denoising score matching ---------------------------------------------

TrainReport train_dsm(NetDenoiser& model, const Tensor& data, const DsmConfig& cfg) {
    if (data.rows() < 2) throw DomainError("train_dsm needs at least two data rows");
    if (data.cols() != model.dim()) {
        throw ShapeError("train_dsm: data " + data.shape_str() + " vs model dim " +
                         std::to_string(model.dim()));
    }
    if (cfg.batch == 0 || cfg.eval_every == 0 || cfg.eval_batch == 0) {
        throw ConfigError("train_dsm: batch and eval sizes must be positive");
    }
    if (cfg.lr <= 0.0 || cfg.grad_clip <= 0.0) throw ConfigError("train_dsm: lr and grad_clip must be positive");
    if (cfg.lr_final_frac <= 0.0 || cfg.lr_final_frac > 1.0) {
        throw ConfigError("train_dsm: lr_final_frac outside (0, 1]");
    }
    if (cfg.ema_mu < 0.0 || cfg.ema_mu >= 1.0) throw ConfigError("train_dsm: ema_mu outside [0, 1)");
    if (cfg.uniform_time_frac < 0.0 || cfg.uniform_time_frac > 1.0) {
        throw ConfigError("train_dsm: uniform_time_frac outside [0, 1]");
    }
    if (cfg.iters == 0) return TrainReport{};  // zero work requested: model untouched

    const std::size_t d = model.dim();
    const double sd = model.sigma_data();
    const Geometry geo = model.geometry();
    const double log_eps = std::log(conventions::T_MIN);
    const double log_T = std::log(conventions::T_MAX);
    // The log-normal time location is calibrated for unit-scale data; shift
    // it by the frozen data scale so the relative noise distribution matches.
    const double logt_mean = conventions::TRAIN_LOGT_MEAN + std::log(sd / conventions::SIGMA_DATA);

    NetDenoiser ema_model(model.core().clone(), sd, geo);
    EmaTracker ema_tracker(std::as_const(model.core()).params(), cfg.ema_mu);
    AdamState opt;
    opt.lr = cfg.lr;
    opt.init(model.core().params());

    RandomStream rng(cfg.seed, 0x05B1D5);

    // Fixed evaluation fixture: a held-draw batch noised at a deterministic
    // log-spaced set of times, scored with the current EMA weights.
    const std::size_t n_eval_times = 8;
    const std::size_t block = std::max<std::size_t>(1, cfg.eval_batch / n_eval_times);
    const std::size_t eval_rows = block * n_eval_times;
    RandomStream erng(cfg.seed, 0x05E7D5);
    const Tensor eval_x0 = gather_rows(data, erng, eval_rows);
    const Tensor eval_z = draw_noise(erng, eval_rows, d, geo);
    std::vector<double> eval_times(n_eval_times);
    for (std::size_t j = 0; j < n_eval_times; ++j) {
        eval_times[j] = std::exp(log_eps + (static_cast<double>(j) + 0.5) /
                                               static_cast<double>(n_eval_times) * (log_T - log_eps));
    }

    auto eval_loss = [&]() {
        double total = 0.0;
        for (std::size_t j = 0; j < n_eval_times; ++j) {
            const double t = eval_times[j];
            Tensor xt({block, d});
            for (std::size_t i = 0; i < block; ++i) {
                const std::size_t r = j * block + i;
                for (std::size_t c = 0; c < d; ++c) {
                    xt.at(i, c) = eval_x0.at(r, c) + t * eval_z.at(r, c);
                }
            }
            const Tensor dhat = ema_model.denoise(xt, t);
            double block_sq = 0.0;
            for (std::size_t i = 0; i < block; ++i) {
                for (std::size_t c = 0; c < d; ++c) {
                    const double diff = dhat.at(i, c) - eval_x0.at(j * block + i, c);
                    block_sq += diff * diff;
                }
            }
            total += conventions::dsm_weight(t, sd) * block_sq;
        }
        return total / static_cast<double>(eval_rows);
    };

    TrainReport rep;
    rep.history.reserve(cfg.iters);
    std::vector<Tensor> best;
    double best_eval = std::numeric_limits<double>::infinity();
    std::size_t best_iter = 0;
    const auto started = std::chrono::steady_clock::now();

    for (std::size_t it = 0; it < cfg.iters; ++it) {
        opt.lr = decayed_lr(cfg.lr, cfg.lr_final_frac, it, cfg.iters);
        const Tensor x0 = gather_rows(data, rng, cfg.batch);
        const Tensor z = draw_noise(rng, cfg.batch, d, geo);
        Tensor tcol({cfg.batch, 1});
        Tensor w({cfg.batch, 1});
        Tensor xt({cfg.batch, d});
        for (std::size_t i = 0; i < cfg.batch; ++i) {
            double lt = (rng.uniform() < cfg.uniform_time_frac)
                            ? log_eps + rng.uniform() * (log_T - log_eps)
                            : logt_mean + conventions::TRAIN_LOGT_STD * rng.normal();
            lt = std::clamp(lt, log_eps, log_T);
            const double t = std::exp(lt);
            tcol[i] = t;
            w[i] = conventions::dsm_weight(t, sd);
            for (std::size_t c = 0; c < d; ++c) xt.at(i, c) = x0.at(i, c) + t * z.at(i, c);
        }

        Tape tape;
        const std::vector<Var> pv = model.core().bind(tape, /*trainable=*/true);
        const Var vx = tape.constant(std::move(xt));
        const Var vt = tape.constant(tcol);
        const Var dhat = model.denoise_on(tape, pv, vx, vt);
        const Var per_row = tape.row_sum(tape.square(tape.sub(dhat, tape.constant(x0))));
        const Var loss = tape.mean_all(tape.mul(per_row, tape.constant(w)));
        const double lval = tape.value(loss).item();
        if (!std::isfinite(lval)) throw TrainingError("dsm loss is not finite", it);
        tape.backward(loss);
        const double gnorm = apply_gradients(tape, pv, model.core().params(), opt, cfg.grad_clip);
        ema_tracker.update(std::as_const(model.core()).params());

        TrainStep row{it, lval, gnorm, NO_EVAL};
        if ((it + 1) % cfg.eval_every == 0 || it + 1 == cfg.iters) {
            ema_tracker.materialize(ema_model.core().params());
            const double ev = eval_loss();
            if (!std::isfinite(ev)) throw TrainingError("dsm eval loss is not finite", it);
            row.eval_loss = ev;
            if (ev < best_eval) {
                best_eval = ev;
                best_iter = it + 1;
                best = snapshot_params(std::as_const(ema_model.core()).params());
            }
        }
        rep.history.push_back(row);
    }

    load_params(best, model.core().params());
    rep.best_eval = best_eval;
    rep.best_iter = best_iter;
    rep.final_train_loss = rep.history.back().loss;
    rep.seconds = elapsed_seconds(started);
    return rep;
}

// --- trajectory distillation --------------------------------------------------

TrainReport distill_bctm(BctmModel& student, const ScoreFn& teacher_score, const Tensor& data,
                         const DistillConfig& cfg) {
    if (data.rows() < 2) throw DomainError("distill_bctm needs at least two data rows");
    if (data.cols() != student.dim()) {
        throw ShapeError("distill_bctm: data " + data.shape_str() + " vs model dim " +
                         std::to_string(student.dim()));
    }
    if (cfg.batch == 0 || cfg.eval_every == 0 || cfg.eval_batch == 0) {
        throw ConfigError("distill_bctm: batch and eval sizes must be positive");
    }
    if (cfg.lr <= 0.0 || cfg.grad_clip <= 0.0) {
        throw ConfigError("distill_bctm: lr and grad_clip must be positive");
    }
    if (cfg.lr_final_frac <= 0.0 || cfg.lr_final_frac > 1.0) {
        throw ConfigError("distill_bctm: lr_final_frac outside (0, 1]");
    }
    if (cfg.ema_mu < 0.0 || cfg.ema_mu >= 1.0) throw ConfigError("distill_bctm: ema_mu outside [0, 1)");
    if (cfg.lambda_ctm < 0.0 || cfg.lambda_dsm < 0.0 || cfg.lambda_mid < 0.0 ||
        cfg.lambda_ctm + cfg.lambda_dsm + cfg.lambda_mid <= 0.0) {
        throw ConfigError("distill_bctm: loss weights must be non-negative and not all zero");
    }
    if (cfg.solver_max_log_step <= 0.0) throw ConfigError("distill_bctm: solver step cap must be positive");
    if (cfg.endpoint_frac < 0.0 || cfg.endpoint_frac > 1.0) {
        throw ConfigError("distill_bctm: endpoint_frac outside [0, 1]");
    }
    if (cfg.s_eps_frac < 0.0 || cfg.s_eps_frac > 1.0) {
        throw ConfigError("distill_bctm: s_eps_frac outside [0, 1]");
    }
    if (cfg.u_bias_pow <= 0.0) throw ConfigError("distill_bctm: u_bias_pow must be positive");
    if (cfg.max_solver_span <= 0.0) throw ConfigError("distill_bctm: max_solver_span must be positive");
    if (cfg.time_groups == 0) throw ConfigError("distill_bctm: time_groups must be positive");
    if (cfg.iters == 0) return TrainReport{};  // zero work requested: model untouched

    const std::size_t d = student.dim();
    const double sd = student.sigma_data();
    const Geometry geo = student.geometry();
    const double eps = conventions::T_MIN;
    const double T = conventions::T_MAX;
    const double log_eps = std::log(eps);
    const double log_T = std::log(T);

    BctmModel ema(student.core().clone(), sd, geo);
    EmaTracker ema_tracker(std::as_const(student.core()).params(), cfg.ema_mu);
    AdamState opt;
    opt.lr = cfg.lr;
    opt.init(student.core().params());

    RandomStream rng(cfg.seed, 0xD157);

    // Fixed evaluation fixture: teacher-ODE endpoints for a handful of
    // representative hops (both directions), solved once up front; evals then
    // just measure the EMA student's traverse error against them.
    const std::vector<std::pair<double, double>> eval_hops = {
        {T, eps}, {T, 0.5}, {4.0, eps}, {1.0, 0.05}, {0.02, 1.0}, {0.5, T}};
    const std::size_t rows_per = std::max<std::size_t>(1, cfg.eval_batch / eval_hops.size());
    RandomStream erng(cfg.seed, 0xD15E);
    std::vector<Tensor> eval_xt, eval_target;
    std::vector<double> eval_scale;  // mean squared target norm, per hop
    for (const auto& [ht, hs] : eval_hops) {
        const Tensor x0 = gather_rows(data, erng, rows_per);
        const Tensor z = draw_noise(erng, rows_per, d, geo);
        Tensor xt = axpy(ht, z, x0);
        Tensor target = solve_pf_ode(teacher_score, xt, ht, hs, cfg.solver_max_log_step);
        eval_scale.push_back(
            std::max(numerics::squared_norm(target) / static_cast<double>(rows_per), 1e-12));
        eval_target.push_back(std::move(target));
        eval_xt.push_back(std::move(xt));
    }

    // Relative traverse error against the pre-solved teacher endpoints, so
    // hops toward the prior time (large state norms) do not drown the rest.
    auto eval_loss = [&]() {
        double total = 0.0;
        for (std::size_t k = 0; k < eval_hops.size(); ++k) {
            const Tensor got = ema.traverse(eval_xt[k], eval_hops[k].first, eval_hops[k].second);
            double sq = 0.0;
            for (std::size_t i = 0; i < got.size(); ++i) {
                const double diff = got[i] - eval_target[k][i];
                sq += diff * diff;
            }
            total += sq / (static_cast<double>(rows_per) * eval_scale[k]);
        }
        return total / static_cast<double>(eval_hops.size());
    };

    TrainReport rep;
    rep.history.reserve(cfg.iters);
    std::vector<Tensor> best;
    double best_eval = std::numeric_limits<double>::infinity();
    std::size_t best_iter = 0;
    const auto started = std::chrono::steady_clock::now();

    const std::size_t groups = std::min(cfg.time_groups, cfg.batch);
    // With both consistency weights off the objective is plain denoising on
    // the anchor field; skip the teacher machinery entirely.
    const bool need_teacher = cfg.lambda_ctm > 0.0 || cfg.lambda_mid > 0.0;

    for (std::size_t it = 0; it < cfg.iters; ++it) {
        opt.lr = decayed_lr(cfg.lr, cfg.lr_final_frac, it, cfg.iters);

        const Tensor x0 = gather_rows(data, rng, cfg.batch);
        const Tensor z = draw_noise(rng, cfg.batch, d, geo);
        if (need_teacher) ema_tracker.materialize(ema.core().params());

        // Each group of rows gets its own endpoint pair (t -> s), either
        // direction, plus a solver cut u between them.  t sits at the prior
        // time a fixed fraction of the draws so the hop the sampler leans on
        // hardest stays covered; s pins to eps likewise.
        Tensor tcol({cfg.batch, 1});
        Tensor scol({cfg.batch, 1});
        Tensor cin_s({cfg.batch, 1});  // c_in(s): per-row scale for the mid term
        Tensor xt({cfg.batch, d});
        Tensor xs_teacher({cfg.batch, d});
        Tensor target({cfg.batch, d});
        for (std::size_t g = 0; need_teacher && g < groups; ++g) {
            const std::size_t r0 = g * cfg.batch / groups;
            const std::size_t r1 = (g + 1) * cfg.batch / groups;
            const std::size_t rows = r1 - r0;

            const double t = (rng.uniform() < cfg.endpoint_frac)
                                 ? T
                                 : std::exp(log_eps + rng.uniform() * (log_T - log_eps));
            double s = t;
            if (rng.uniform() < cfg.s_eps_frac && std::log(t / eps) >= MIN_LOG_SEP) {
                s = eps;
            } else {
                for (int tries = 0; std::fabs(std::log(s / t)) < MIN_LOG_SEP; ++tries) {
                    if (tries > 1000) {
                        throw ContractError("distill_bctm could not draw endpoint times");
                    }
                    s = std::exp(log_eps + rng.uniform() * (log_T - log_eps));
                }
            }
            Tensor gx({rows, d});
            for (std::size_t i = 0; i < rows; ++i) {
                tcol[r0 + i] = t;
                scol[r0 + i] = s;
                // sd * c_in(s) = sd / sqrt(sd^2 + s^2): the mid residual in
                // fraction-of-state-scale units, times sd so the term lives
                // on the same scale as the endpoint and anchor losses.
                cin_s[r0 + i] = sd * conventions::c_in(s, sd);
                for (std::size_t c = 0; c < d; ++c) {
                    gx.at(i, c) = x0.at(r0 + i, c) + t * z.at(r0 + i, c);
                }
            }

            // Teacher estimate of the time-s state.  Denoising pairs take an
            // exact solver hop t -> u and an EMA hop u -> s; noising pairs
            // integrate the solver straight through (there is no shorter
            // trusted leg in that direction).  No gradients here.
            Tensor gs;
            if (s < t) {
                double u = std::exp(std::log(s) +
                                    (std::log(t) - std::log(s)) * std::pow(rng.uniform(), cfg.u_bias_pow));
                // Keep the exact leg affordable: pull u back toward t if the
                // hop exceeds the span cap (the EMA hop covers the remainder).
                if (std::log(t / u) > cfg.max_solver_span) u = t * std::exp(-cfg.max_solver_span);
                const Tensor gu = solve_pf_ode(teacher_score, gx, t, u, cfg.solver_max_log_step);
                gs = ema.traverse(gu, u, s);
            } else {
                gs = solve_pf_ode(teacher_score, gx, t, s, cfg.solver_max_log_step);
            }
            const Tensor gtarget = ema.traverse(gs, s, eps);
            for (std::size_t i = 0; i < rows; ++i) {
                xt.set_row(r0 + i, gx.data() + i * d, d);
                xs_teacher.set_row(r0 + i, gs.data() + i * d, d);
                target.set_row(r0 + i, gtarget.data() + i * d, d);
            }
        }

        // The anchor (denoising) term uses its own per-row times and noise so
        // g(x, t, t) is supervised across the whole range every iteration.
        const Tensor z_dsm = draw_noise(rng, cfg.batch, d, geo);
        Tensor t_dsm({cfg.batch, 1});
        Tensor xt_dsm({cfg.batch, d});
        for (std::size_t i = 0; i < cfg.batch; ++i) {
            const double ti = std::exp(log_eps + rng.uniform() * (log_T - log_eps));
            t_dsm[i] = ti;
            for (std::size_t c = 0; c < d; ++c) xt_dsm.at(i, c) = x0.at(i, c) + ti * z_dsm.at(i, c);
        }

        Tape tape;
        const std::vector<Var> pv = student.core().bind(tape, /*trainable=*/true);
        const Var anchor =
            student.anchor_denoise_on(tape, pv, tape.constant(xt_dsm), tape.constant(t_dsm));
        const Var dsm_sq = tape.sum_all(tape.square(tape.sub(anchor, tape.constant(x0))));
        const double scale = 1.0 / static_cast<double>(cfg.batch);
        Var loss = tape.mul_const(dsm_sq, cfg.lambda_dsm * scale);
        if (need_teacher) {
            const Var vx = tape.constant(xt);
            const Var vt = tape.constant(tcol);
            const Var vs = tape.constant(scol);
            const Var veps = tape.constant(Tensor::full({cfg.batch, 1}, eps));
            const Var hop1 = student.traverse_on(tape, pv, vx, vt, vs);
            const Var hop2 = student.traverse_on(tape, pv, hop1, vs, veps);
            const Var ctm_sq = tape.sum_all(tape.square(tape.sub(hop2, tape.constant(target))));
            const Var mid_sq = tape.sum_all(tape.square(
                tape.mul(tape.sub(hop1, tape.constant(xs_teacher)), tape.constant(cin_s))));
            loss = tape.add(loss, tape.add(tape.mul_const(ctm_sq, cfg.lambda_ctm * scale),
                                           tape.mul_const(mid_sq, cfg.lambda_mid * scale)));
        }
        const double lval = tape.value(loss).item();
        if (!std::isfinite(lval)) throw TrainingError("distillation loss is not finite", it);
        tape.backward(loss);
        const double gnorm = apply_gradients(tape, pv, student.core().params(), opt, cfg.grad_clip);
        ema_tracker.update(std::as_const(student.core()).params());

        TrainStep row{it, lval, gnorm, NO_EVAL};
        if ((it + 1) % cfg.eval_every == 0 || it + 1 == cfg.iters) {
            ema_tracker.materialize(ema.core().params());
            const double ev = eval_loss();
            if (!std::isfinite(ev)) throw TrainingError("distillation eval loss is not finite", it);
            row.eval_loss = ev;
            if (ev < best_eval) {
                best_eval = ev;
                best_iter = it + 1;
                best = snapshot_params(std::as_const(ema.core()).params());
            }
        }
        rep.history.push_back(row);
    }

    load_params(best, student.core().params());
    rep.best_eval = best_eval;
    rep.best_iter = best_iter;
    rep.final_train_loss = rep.history.back().loss;
    rep.seconds = elapsed_seconds(started);
    return rep;
}

}  // namespace bgis::training
