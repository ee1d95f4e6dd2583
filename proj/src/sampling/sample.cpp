#include "bgis/sampling/sample.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "bgis/errors.hpp"

namespace bgis::sampling {

namespace {

Tensor projected_normal(RandomStream& rng, std::size_t rows, std::size_t cols,
                        const Geometry& geo) {
    Tensor z({rows, cols});
    rng.fill_normal(z);
    return apply_geometry(z, geo);
}

}  // namespace

const char* schedule_rule_name(ScheduleRule rule) {
    switch (rule) {
        case ScheduleRule::LogSpace: return "log-space";
        case ScheduleRule::RhoPower: return "rho-power";
        case ScheduleRule::Explicit: return "explicit";
    }
    throw ContractError("unknown schedule rule");
}

Schedule::Schedule(std::vector<double> ts, ScheduleRule r) : times(std::move(ts)), rule(r) {
    if (times.size() < 2) throw ConfigError("schedule needs at least two times");
    if (times.front() <= 0.0) throw DomainError("schedule times must be positive");
    for (std::size_t i = 1; i < times.size(); ++i) {
        if (!(times[i] > times[i - 1])) {
            throw DomainError("schedule times must increase strictly");
        }
    }
}

Schedule log_schedule(std::size_t N, double eps, double T) {
    if (N == 0) throw ConfigError("log_schedule: N = 0 is degenerate");
    if (!(eps > 0.0) || !(T > eps)) throw DomainError("log_schedule needs 0 < eps < T");
    std::vector<double> ts(N + 1);
    const double ratio = std::log(T / eps);
    for (std::size_t i = 0; i <= N; ++i) {
        ts[i] = eps * std::exp(ratio * static_cast<double>(i) / static_cast<double>(N));
    }
    ts.front() = eps;  // pin endpoints against rounding
    ts.back() = T;
    return Schedule(std::move(ts), ScheduleRule::LogSpace);
}

Tensor forward_noise(const Tensor& x, double t_from, double t_to, RandomStream& rng,
                     const Geometry& geo) {
    if (t_from < 0.0 || !(t_to > t_from)) {
        throw DomainError("forward_noise needs t_to > t_from >= 0");
    }
    const double sigma = std::sqrt(t_to * t_to - t_from * t_from);
    const Tensor z = projected_normal(rng, x.rows(), x.cols(), geo);
    return numerics::axpy(sigma, z, x);
}

DdimCoeffs ddim_coeffs(double t_n, double t_prev, double eta) {
    if (!(t_prev > 0.0) || !(t_n > t_prev)) {
        throw DomainError("ddim_coeffs needs 0 < t_prev < t_n");
    }
    if (eta < 0.0 || eta > 1.0) throw DomainError("ddim_coeffs needs eta in [0, 1]");

    const double sigma =
        eta * std::sqrt((t_n * t_n - t_prev * t_prev) * (t_prev * t_prev) / (t_n * t_n));
    const double gap = t_prev * t_prev - sigma * sigma;
    if (gap < 0.0) throw ContractError("ddim_coeffs: noise exceeds the step variance");
    return DdimCoeffs{std::sqrt(gap / (t_n * t_n)), sigma};
}

Tensor ddim_step(const Denoiser& model, const Tensor& x, double t_n, double t_prev, double eta,
                 RandomStream& rng) {
    if (x.cols() != model.dim()) {
        throw ShapeError("ddim_step: x " + x.shape_str() + " vs model dim " +
                         std::to_string(model.dim()));
    }
    const auto [shrink, sigma] = ddim_coeffs(t_n, t_prev, eta);

    const Tensor x0_hat = model.denoise(x, t_n);
    Tensor out({x.rows(), x.cols()});
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = shrink * x[i] + (1.0 - shrink) * x0_hat[i];
    }
    if (sigma > 0.0) {
        const Tensor z = projected_normal(rng, x.rows(), x.cols(), model.geometry());
        out = numerics::axpy(sigma, z, out);
    }
    return out;
}

AncestralResult ancestral_sample(const Denoiser& model, const Schedule& schedule, double eta,
                                 std::size_t K, RandomStream& rng, bool record_trajectory) {
    if (schedule.times.size() < 2) throw ConfigError("ancestral_sample: schedule too short");
    if (K == 0) throw ConfigError("ancestral_sample: K must be positive");

    const std::size_t d = model.dim();
    const Geometry geo = model.geometry();
    const double T = schedule.horizon();

    Tensor x = projected_normal(rng, K, d, geo);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] *= T;

    AncestralResult res;
    if (record_trajectory) {
        res.times.push_back(T);
        res.states.push_back(x);
    }
    for (std::size_t i = schedule.times.size() - 1; i > 0; --i) {
        x = ddim_step(model, x, schedule.times[i], schedule.times[i - 1], eta, rng);
        if (record_trajectory) {
            res.times.push_back(schedule.times[i - 1]);
            res.states.push_back(x);
        }
    }
    res.samples = std::move(x);
    return res;
}

MultistepResult cm_multistep_sample(const TrajectoryModel& model, const std::vector<double>& times,
                                    std::size_t K, RandomStream& rng, double floor_time) {
    if (times.empty()) throw ConfigError("cm_multistep_sample: no anchor times");
    if (K == 0) throw ConfigError("cm_multistep_sample: K must be positive");
    if (!(floor_time > 0.0)) throw DomainError("cm_multistep_sample: floor time must be positive");
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (!(times[i] >= floor_time)) {
            throw DomainError("cm_multistep_sample: anchors must sit above the floor time");
        }
        if (i > 0 && !(times[i] < times[i - 1])) {
            throw DomainError("cm_multistep_sample: anchors must decrease strictly");
        }
    }

    const std::size_t d = model.dim();
    const Geometry geo = model.geometry();

    Tensor x = projected_normal(rng, K, d, geo);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] *= times.front();

    Tensor x0 = model.traverse(x, times.front(), floor_time);
    for (std::size_t k = 1; k < times.size(); ++k) {
        x = forward_noise(x0, floor_time, times[k], rng, geo);
        x0 = model.traverse(x, times[k], floor_time);
    }
    return MultistepResult{std::move(x0), times.size()};
}

void write_samples_csv(const std::string& path, const Tensor& samples,
                       const std::vector<std::pair<std::string, std::string>>& metadata) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    for (const auto& [key, value] : metadata) out << "# " << key << "=" << value << '\n';
    for (std::size_t c = 0; c < samples.cols(); ++c) {
        out << (c ? ",x" : "x") << c;
    }
    out << '\n';
    char buf[32];
    for (std::size_t r = 0; r < samples.rows(); ++r) {
        for (std::size_t c = 0; c < samples.cols(); ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", samples.at(r, c));
            out << (c ? "," : "") << buf;
        }
        out << '\n';
    }
    if (!out) throw ConfigError("failed while writing: " + path);
}

}  // namespace bgis::sampling
