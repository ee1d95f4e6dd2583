#include "bgis/schedule_opt/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <utility>

#include "json.hpp"

#include "bgis/conventions.hpp"
#include "bgis/errors.hpp"
#include "bgis/numerics/adam.hpp"

namespace bgis::schedule_opt {

namespace {

constexpr double PI = 3.14159265358979323846;

Tensor row_tensor(const Tensor& flat) {
    return Tensor({1, flat.size()},
                  std::vector<double>(flat.data(), flat.data() + flat.size()));
}

std::string hash_hex(std::uint64_t h) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// Per-row Gaussian log-density with a Var variance shared across rows; the
// normalizer counts only the effective subspace dimensions.
Var gaussian_rows_on(Tape& tape, Var x, Var mean, Var var, double m_eff) {
    Var quad = tape.div(tape.row_sum(tape.square(tape.sub(x, mean))), tape.mul_const(var, 2.0));
    Var norm = tape.mul_const(tape.log(tape.mul_const(var, 2.0 * PI)), -0.5 * m_eff);
    return tape.sub(norm, quad);  // [1,1] - [M,1] broadcast
}

}  // namespace

ScheduleParams ScheduleParams::uniform(std::size_t steps, double raw) {
    ScheduleParams p;
    p.raw_mu.assign(steps, raw);
    p.raw_eta.assign(steps, raw);
    return p;
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

TimeGrid build_time_grid(const ScheduleParams& params, double eps, double T, std::size_t N) {
    if (N == 0) throw ConfigError("build_time_grid: N must be at least 1");
    if (params.raw_mu.size() != N || params.raw_eta.size() != N) {
        throw ConfigError("build_time_grid: parameters hold " +
                          std::to_string(params.raw_mu.size()) + " mu / " +
                          std::to_string(params.raw_eta.size()) + " eta values for N=" +
                          std::to_string(N));
    }
    const bool explicit_rule = params.rule == ScheduleParams::ProposalRule::Explicit;
    if (explicit_rule && params.raw_gamma.size() != N - 1) {
        throw ConfigError("build_time_grid: the explicit rule needs N-1 gamma values, got " +
                          std::to_string(params.raw_gamma.size()));
    }
    if (eps != conventions::T_MIN || T != conventions::T_MAX) {
        throw ConfigError("build_time_grid: grids live on [T_MIN, T_MAX]");
    }

    // Levels by the descending recursion, then target times inside each step.
    std::vector<double> t(N + 1);
    t[N] = T;
    for (std::size_t n = N; n-- > 0;) {
        t[n] = sigmoid(params.raw_mu[n]) * (t[n + 1] - eps) + eps;
    }
    std::vector<double> tar(N);
    for (std::size_t n = 0; n < N; ++n) {
        tar[n] = (t[n + 1] - t[n]) * sigmoid(params.raw_eta[n]) + t[n];
    }

    std::vector<double> prop(N);
    prop[0] = eps;
    if (explicit_rule) {
        for (std::size_t n = 1; n < N; ++n) {
            prop[n] = sigmoid(params.raw_gamma[n - 1]) * (t[n] - eps) + eps;
        }
    } else {
        // Proposal variance equals target variance wherever the interval
        // allows; the bottom level moves to rebalance the first step, capped
        // into [eps, t_tar[0]].
        for (std::size_t n = 1; n < N; ++n) {
            prop[n] = std::sqrt(
                std::max(t[n] * t[n] + tar[n] * tar[n] - t[n + 1] * t[n + 1], eps * eps));
        }
        t[0] = std::min(std::sqrt(std::max(t[1] * t[1] - tar[0] * tar[0] + eps * eps, eps * eps)),
                        tar[0]);
    }
    return TimeGrid(std::move(t), std::move(tar), std::move(prop));
}

TimeGrid gaussian_exact_grid(std::size_t N, double v, double t0) {
    if (N == 0) throw ConfigError("gaussian_exact_grid: N must be at least 1");
    if (!(v > 0.0)) throw DomainError("gaussian_exact_grid: variance must be positive");
    if (!(t0 > conventions::T_MIN) || !(t0 < conventions::T_MAX)) {
        throw DomainError("gaussian_exact_grid: t0 must lie inside (T_MIN, T_MAX)");
    }

    std::vector<double> t(N + 1);
    for (std::size_t n = 0; n <= N; ++n) {
        t[n] = t0 * std::pow(conventions::T_MAX / t0,
                             static_cast<double>(n) / static_cast<double>(N));
    }
    t.front() = t0;
    t.back() = conventions::T_MAX;

    std::vector<double> tar(N), prop(N);
    for (std::size_t n = 1; n <= N; ++n) {
        prop[n - 1] = (n == 1) ? conventions::T_MIN : t[n - 1] * t[n - 1] / t[n];
        const double p2 = prop[n - 1] * prop[n - 1];
        tar[n - 1] =
            std::sqrt((v + p2) * (v + t[n] * t[n]) / (v + t[n - 1] * t[n - 1]) - v);
    }
    return TimeGrid(std::move(t), std::move(tar), std::move(prop));
}

ExactSampleSource::ExactSampleSource(const Target& target) : target_(&target) {
    if (!target.has_exact_sampler()) {
        throw CapabilityError("sample source needs a target with an exact sampler");
    }
}

Tensor ExactSampleSource::sample(std::size_t n, RandomStream& rng) const {
    return target_->sample_exact(n, rng);
}

ReservoirSampleSource::ReservoirSampleSource(Tensor bank) : bank_(std::move(bank)) {
    if (bank_.empty()) throw ConfigError("reservoir sample bank is empty");
}

Tensor ReservoirSampleSource::sample(std::size_t n, RandomStream& rng) const {
    const std::size_t d = bank_.cols();
    Tensor out({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = static_cast<std::size_t>(rng.uniform_index(bank_.rows()));
        out.set_row(i, bank_.data() + j * d, d);
    }
    return out;
}

Tensor forward_kl_paths(const TrajectoryModel& model, const Target& target, const TimeGrid& grid,
                        const Tensor& x0, const std::vector<Tensor>& noise) {
    const std::size_t N = grid.steps();
    if (N == 0) throw GridError("forward_kl_paths: uninitialized grid", 0);
    const std::size_t d = model.dim();
    if (target.dim() != d) {
        throw ShapeError("forward_kl_paths: target dim " + std::to_string(target.dim()) +
                         " vs model dim " + std::to_string(d));
    }
    if (x0.empty() || x0.cols() != d) {
        throw ShapeError("forward_kl_paths: x0 is " + x0.shape_str() + " for dim " +
                         std::to_string(d));
    }
    if (noise.size() != N) {
        throw ContractError("forward_kl_paths: need one noise slab per step, got " +
                            std::to_string(noise.size()) + " for N=" + std::to_string(N));
    }
    const std::size_t M = x0.rows();
    const Geometry geo = model.geometry();

    std::vector<Tensor> states(N + 1);
    states[0] = x0;
    for (std::size_t n = 1; n <= N; ++n) {
        const Tensor& z = noise[n - 1];
        if (z.rows() != M || z.cols() != d) {
            throw ContractError("forward_kl_paths: noise slab " + std::to_string(n - 1) +
                                " is misshapen");
        }
        const Tensor zp = apply_geometry(z, geo);
        const Tensor mean = model.traverse(states[n - 1], grid.t[n - 1], grid.t_tar[n - 1]);
        states[n] = numerics::axpy(std::sqrt(grid.target_variance(n)), zp, mean);
    }

    const Tensor tgt = is_engine::target_log_density_rows(model, states, target, grid);
    const Tensor prop = is_engine::proposal_log_density_rows(model, states, grid);
    Tensor out({M});
    for (std::size_t k = 0; k < M; ++k) out[k] = tgt[k] - prop[k];
    return out;
}

double forward_kl_objective(const TrajectoryModel& model, const Target& target,
                            const SampleSource& source, const TimeGrid& grid, std::size_t M,
                            RandomStream& rng) {
    if (M == 0) throw ConfigError("forward_kl_objective: M must be positive");
    if (source.dim() != model.dim()) {
        throw ShapeError("forward_kl_objective: source dim " + std::to_string(source.dim()) +
                         " vs model dim " + std::to_string(model.dim()));
    }
    const Tensor x0 = source.sample(M, rng);
    std::vector<Tensor> noise;
    noise.reserve(grid.steps());
    for (std::size_t n = 0; n < grid.steps(); ++n) {
        Tensor z({M, model.dim()});
        rng.fill_normal(z);
        noise.push_back(std::move(z));
    }
    const Tensor vals = forward_kl_paths(model, target, grid, x0, noise);
    double acc = 0.0;
    for (std::size_t k = 0; k < M; ++k) acc += vals[k];
    return acc / static_cast<double>(M);
}

TimeGridVars build_time_grid_on(Tape& tape, Var raw, double eps, double T, std::size_t N) {
    if (N == 0) throw ConfigError("build_time_grid_on: N must be at least 1");
    if (tape.value(raw).size() != 2 * N) {
        throw ShapeError("build_time_grid_on: raw holds " +
                         std::to_string(tape.value(raw).size()) + " values for N=" +
                         std::to_string(N));
    }
    if (eps != conventions::T_MIN || T != conventions::T_MAX) {
        throw ConfigError("build_time_grid_on: grids live on [T_MIN, T_MAX]");
    }
    const double e2 = eps * eps;
    auto val = [&tape](Var v) { return tape.value(v).item(); };

    TimeGridVars g;
    g.t.resize(N + 1);
    g.t_tar.resize(N);
    g.t_prop.resize(N);

    g.t[N] = tape.constant_scalar(T);
    for (std::size_t n = N; n-- > 0;) {
        Var mu = tape.sigmoid(tape.slice_cols(raw, n, 1));
        g.t[n] = tape.add_const(tape.mul(mu, tape.add_const(g.t[n + 1], -eps)), eps);
    }
    for (std::size_t n = 0; n < N; ++n) {
        Var eta = tape.sigmoid(tape.slice_cols(raw, N + n, 1));
        g.t_tar[n] = tape.add(tape.mul(eta, tape.sub(g.t[n + 1], g.t[n])), g.t[n]);
    }

    g.t_prop[0] = tape.constant_scalar(eps);
    for (std::size_t n = 1; n < N; ++n) {
        Var c = tape.sub(tape.add(tape.square(g.t[n]), tape.square(g.t_tar[n])),
                         tape.square(g.t[n + 1]));
        g.t_prop[n] = (val(c) >= e2) ? tape.sqrt(c) : tape.constant_scalar(eps);
    }
    Var c0 = tape.add_const(tape.sub(tape.square(g.t[1]), tape.square(g.t_tar[0])), e2);
    Var a = (val(c0) >= e2) ? tape.sqrt(c0) : tape.constant_scalar(eps);
    g.t[0] = (val(a) <= val(g.t_tar[0])) ? a : g.t_tar[0];
    return g;
}

Var forward_kl_on(Tape& tape, const TrajectoryModel& model, const std::vector<Var>& net,
                  const Target& target, Var raw, const Tensor& x0,
                  const std::vector<Tensor>& noise, double eps, double T) {
    if (!model.supports_tape()) {
        throw CapabilityError("forward_kl_on needs a tape-capable trajectory model");
    }
    const std::size_t d = model.dim();
    if (target.dim() != d) {
        throw ShapeError("forward_kl_on: target dim " + std::to_string(target.dim()) +
                         " vs model dim " + std::to_string(d));
    }
    if (x0.empty() || x0.cols() != d) {
        throw ShapeError("forward_kl_on: x0 is " + x0.shape_str() + " for dim " +
                         std::to_string(d));
    }
    const std::size_t N = noise.size();
    if (N == 0) throw ConfigError("forward_kl_on: need one noise slab per step");
    const std::size_t M = x0.rows();
    const Geometry geo = model.geometry();
    const double m_eff = static_cast<double>(geo.effective_dim(d));

    TimeGridVars g = build_time_grid_on(tape, raw, eps, T, N);

    // pi_bar at the bottom level is parameter-free data.
    const Tensor lp = target.unnorm_log_density_rows(x0);
    Var acc = tape.constant(Tensor({M, 1}, std::vector<double>(lp.data(), lp.data() + M)));

    Var x = tape.constant(x0);
    for (std::size_t n = 1; n <= N; ++n) {
        const Tensor& z = noise[n - 1];
        if (z.rows() != M || z.cols() != d) {
            throw ContractError("forward_kl_on: noise slab " + std::to_string(n - 1) +
                                " is misshapen");
        }
        Var tvar = tape.sub(tape.square(g.t[n]), tape.square(g.t_tar[n - 1]));
        Var mean_tar = model.traverse_on(tape, net, x, g.t[n - 1], g.t_tar[n - 1]);
        Var zc = tape.constant(apply_geometry(z, geo));
        Var x_next = tape.add(mean_tar, tape.mul(zc, tape.sqrt(tvar)));
        acc = tape.add(acc, gaussian_rows_on(tape, x_next, mean_tar, tvar, m_eff));

        Var pvar = tape.sub(tape.square(g.t[n - 1]), tape.square(g.t_prop[n - 1]));
        Var mean_prop = model.traverse_on(tape, net, x_next, g.t[n], g.t_prop[n - 1]);
        acc = tape.sub(acc, gaussian_rows_on(tape, x, mean_prop, pvar, m_eff));
        x = x_next;
    }
    Var prior_var = tape.constant_scalar(T * T);
    Var origin = tape.constant(Tensor::full({1, d}, 0.0));
    acc = tape.sub(acc, gaussian_rows_on(tape, x, origin, prior_var, m_eff));
    return tape.mean_all(acc);
}

ScheduleParams tune_grid(const ScheduleParams& params0, const TrajectoryModel& model,
                         const Target& target, const SampleSource& source, const TuneConfig& cfg,
                         TuneReport* report) {
    const std::size_t N = params0.steps();
    if (N == 0) throw ConfigError("tune_grid: empty parameter set");
    if (params0.rule != ScheduleParams::ProposalRule::Matched) {
        throw ConfigError("tune_grid: only the variance-matched rule is tunable");
    }
    if (params0.raw_eta.size() != N) throw ConfigError("tune_grid: mu/eta sizes differ");
    if (!model.supports_tape()) throw CapabilityError("tune_grid needs a tape-capable model");
    if (source.dim() != model.dim() || target.dim() != model.dim()) {
        throw ShapeError("tune_grid: dimension mismatch between model, target, and source");
    }
    if (cfg.paths == 0) throw ConfigError("tune_grid: paths must be positive");
    // Fail fast when the starting point itself is degenerate.
    build_time_grid(params0, conventions::T_MIN, conventions::T_MAX, N);

    Tensor raw({1, 2 * N});
    for (std::size_t n = 0; n < N; ++n) {
        raw[n] = params0.raw_mu[n];
        raw[N + n] = params0.raw_eta[n];
    }

    numerics::AdamState opt;
    opt.lr = cfg.lr;
    std::vector<Tensor*> pview{&raw};
    opt.init(pview);

    RandomStream rng(cfg.seed, 0x677264);
    const std::size_t d = model.dim();

    double best = std::numeric_limits<double>::infinity();
    Tensor best_raw = raw;
    std::size_t best_step = 0;

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        const Tensor x0 = source.sample(cfg.paths, rng);
        std::vector<Tensor> noise;
        noise.reserve(N);
        for (std::size_t n = 0; n < N; ++n) {
            Tensor z({cfg.paths, d});
            rng.fill_normal(z);
            noise.push_back(std::move(z));
        }

        Tape tape;
        const std::vector<Var> net = model.bind(tape);
        const Var raw_var = tape.leaf(raw, true);
        Var obj;
        try {
            obj = forward_kl_on(tape, model, net, target, raw_var, x0, noise, conventions::T_MIN,
                                conventions::T_MAX);
        } catch (const Error& e) {
            throw TrainingError(std::string("forward-KL evaluation failed: ") + e.what(), step);
        }
        const double value = tape.value(obj).item();
        if (!std::isfinite(value)) {
            throw TrainingError("forward-KL objective is not finite", step);
        }
        if (report) report->objective.push_back(value);
        if (value < best) {
            best = value;
            best_raw = raw;
            best_step = step;
        }

        tape.backward(obj);
        std::vector<Tensor> grads{tape.grad(raw_var)};
        clip_global_norm(grads, cfg.grad_clip);
        std::vector<const Tensor*> gp{&grads.front()};
        adam_step(opt, pview, gp);
    }

    if (report) {
        report->best_objective = best;
        report->best_step = best_step;
    }
    ScheduleParams out = params0;
    if (std::isfinite(best)) {
        for (std::size_t n = 0; n < N; ++n) {
            out.raw_mu[n] = best_raw[n];
            out.raw_eta[n] = best_raw[N + n];
        }
    }
    return out;
}

void save_tuned_grid(const std::string& path, const TunedGrid& tuned) {
    nlohmann::json j;
    j["raw_mu"] = tuned.params.raw_mu;
    j["raw_eta"] = tuned.params.raw_eta;
    if (!tuned.params.raw_gamma.empty()) j["raw_gamma"] = tuned.params.raw_gamma;
    j["rule"] =
        tuned.params.rule == ScheduleParams::ProposalRule::Matched ? "matched" : "explicit";
    j["t"] = tuned.grid.t;
    j["t_tar"] = tuned.grid.t_tar;
    j["t_prop"] = tuned.grid.t_prop;
    j["grid_hash"] = hash_hex(tuned.grid.fingerprint());
    j["objective_trace"] = tuned.trace;

    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    out << j.dump(2) << "\n";
    if (!out) throw ConfigError("failed writing " + path);
}

TunedGrid load_tuned_grid(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError("malformed grid file " + path + ": " + e.what());
    }
    try {
        ScheduleParams p;
        p.raw_mu = j.at("raw_mu").get<std::vector<double>>();
        p.raw_eta = j.at("raw_eta").get<std::vector<double>>();
        if (j.contains("raw_gamma")) p.raw_gamma = j.at("raw_gamma").get<std::vector<double>>();
        p.rule = j.at("rule").get<std::string>() == "explicit"
                     ? ScheduleParams::ProposalRule::Explicit
                     : ScheduleParams::ProposalRule::Matched;
        TimeGrid grid(j.at("t").get<std::vector<double>>(),
                      j.at("t_tar").get<std::vector<double>>(),
                      j.at("t_prop").get<std::vector<double>>());
        if (j.contains("grid_hash") &&
            j.at("grid_hash").get<std::string>() != hash_hex(grid.fingerprint())) {
            throw ConfigError("grid fingerprint mismatch in " + path);
        }
        std::vector<double> trace;
        if (j.contains("objective_trace")) {
            trace = j.at("objective_trace").get<std::vector<double>>();
        }
        return TunedGrid{std::move(p), std::move(grid), std::move(trace)};
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed grid file " + path + ": " + e.what());
    }
}

}  // namespace bgis::schedule_opt
