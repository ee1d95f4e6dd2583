#include "bgis/models/denoiser.hpp"

#include <cmath>

#include "bgis/models/egnn.hpp"
#include "bgis/models/features.hpp"

namespace bgis::models {

namespace {
// Inference chunk size: bounds per-tape memory while keeping matmuls fat.
constexpr std::size_t INFER_CHUNK = 2048;
}  // namespace

Tensor Denoiser::score(const Tensor& x, double t) const {
    if (t <= 0.0) throw DomainError("score at non-positive time");
    Tensor d = denoise(x, t);
    const double inv = 1.0 / (t * t);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = (d[i] - x[i]) * inv;
    return d;
}

ScoreFn score_from_denoiser(const Denoiser& d) {
    return [&d](const Tensor& x, double t) { return d.score(x, t); };
}

Var preconditioned_denoise_on(Tape& tape, const Core& core, const std::vector<Var>& params, Var x,
                              Var t, Var s, double sigma_data) {
    const double s2 = sigma_data * sigma_data;
    Var t2 = tape.square(t);
    Var den = tape.add_const(t2, s2);                    // sigma_d^2 + t^2
    Var inv_sqrt_den = tape.pow_const(den, -0.5);
    Var c_in = inv_sqrt_den;
    Var c_skip = tape.div(tape.constant_scalar(s2), den);
    Var c_out = tape.mul(tape.mul_const(t, sigma_data), inv_sqrt_den);

    Var xin = tape.mul(x, c_in);
    Var tfeat = time_features_on(tape, t);
    Var sfeat;
    if (core.conditions_on_s()) {
        if (!s.valid()) throw ContractError("s-conditioned core called without s");
        sfeat = time_features_on(tape, s);
    }
    Var f = core.forward_on(tape, params, xin, tfeat, sfeat);
    return tape.add(tape.mul(x, c_skip), tape.mul(f, c_out));
}

NetDenoiser::NetDenoiser(std::unique_ptr<Core> core, double sigma_data, Geometry geo)
    : core_(std::move(core)), sigma_data_(sigma_data), geo_(geo) {
    if (!core_) throw ContractError("NetDenoiser without a core");
    if (core_->conditions_on_s()) {
        throw ConfigError("denoiser core must condition on t only");
    }
    if (sigma_data_ <= 0.0) throw ConfigError("sigma_data must be positive");
}

Var NetDenoiser::denoise_on(Tape& tape, const std::vector<Var>& params, Var x, Var t) const {
    return preconditioned_denoise_on(tape, *core_, params, x, t, Var{}, sigma_data_);
}

Tensor NetDenoiser::denoise(const Tensor& x, double t) const {
    if (t <= 0.0) throw DomainError("denoise at non-positive time");
    const std::size_t rows = x.rows(), d = x.cols();
    if (d != dim()) throw ShapeError("denoise: " + x.shape_str() + " vs dim " + std::to_string(dim()));
    Tensor out({rows, d});
    for (std::size_t start = 0; start < rows; start += INFER_CHUNK) {
        const std::size_t b = std::min(INFER_CHUNK, rows - start);
        Tensor chunk({b, d},
                     std::vector<double>(x.data() + start * d, x.data() + (start + b) * d));
        Tape tape;
        std::vector<Var> params = core_->bind(tape, /*trainable=*/false);
        Var vx = tape.constant(std::move(chunk));
        Var vt = tape.constant(Tensor({1, 1}, {t}));
        Var vd = denoise_on(tape, params, vx, vt);
        const Tensor& res = tape.value(vd);
        for (std::size_t i = 0; i < b; ++i) out.set_row(start + i, res.data() + i * d, d);
    }
    return out;
}

NetDenoiser make_mlp_denoiser(std::size_t dim, const std::vector<std::size_t>& hidden,
                              double sigma_data, std::uint64_t seed) {
    auto core = std::make_unique<MlpCore>(dim, hidden, /*cond_s=*/false);
    RandomStream rng = RandomStream::for_sample(seed, 0, 0x1717);
    core->init_params(rng);
    return NetDenoiser(std::move(core), sigma_data);
}

NetDenoiser make_egnn_denoiser(const Geometry& geo, std::size_t hidden, std::size_t layers,
                               double sigma_data, std::uint64_t seed) {
    auto core = std::make_unique<EgnnCore>(geo, hidden, layers, /*cond_s=*/false);
    RandomStream rng = RandomStream::for_sample(seed, 0, 0x1718);
    core->init_params(rng);
    return NetDenoiser(std::move(core), sigma_data, geo);
}

double estimate_sigma_data(const Tensor& samples) {
    if (samples.rows() < 2) throw DomainError("estimate_sigma_data needs at least two samples");
    const std::size_t n = samples.rows(), d = samples.cols();
    double total = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += samples.at(i, j);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double dd = samples.at(i, j) - mean;
            var += dd * dd;
        }
        total += var / static_cast<double>(n - 1);
    }
    return std::sqrt(total / static_cast<double>(d));
}

}  // namespace bgis::models
