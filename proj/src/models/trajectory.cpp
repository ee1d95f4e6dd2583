#include "bgis/models/trajectory.hpp"

#include <cmath>

#include "bgis/models/egnn.hpp"
#include "bgis/models/features.hpp"

namespace bgis::models {

namespace {
constexpr std::size_t INFER_CHUNK = 2048;
}

std::vector<Var> TrajectoryModel::bind(Tape&) const {
    throw CapabilityError("trajectory model does not support tape evaluation");
}

Var TrajectoryModel::traverse_on(Tape&, const std::vector<Var>&, Var, Var, Var) const {
    throw CapabilityError("trajectory model does not support tape evaluation");
}

BctmModel::BctmModel(std::unique_ptr<Core> core, double sigma_data, Geometry geo)
    : core_(std::move(core)), sigma_data_(sigma_data), geo_(geo) {
    if (!core_) throw ContractError("BctmModel without a core");
    if (!core_->conditions_on_s()) {
        throw ConfigError("trajectory core must condition on both endpoints");
    }
    if (sigma_data_ <= 0.0) throw ConfigError("sigma_data must be positive");
}

Var BctmModel::anchor_denoise_on(Tape& tape, const std::vector<Var>& params, Var x, Var t) const {
    return preconditioned_denoise_on(tape, *core_, params, x, t, t, sigma_data_);
}

Var BctmModel::traverse_on(Tape& tape, const std::vector<Var>& params, Var x, Var t, Var s) const {
    Var g = preconditioned_denoise_on(tape, *core_, params, x, t, s, sigma_data_);
    Var ratio = tape.div(s, t);                                   // [B,1] or [1,1]
    Var one_minus = tape.add_const(tape.neg(ratio), 1.0);
    return tape.add(tape.mul(x, ratio), tape.mul(g, one_minus));
}

namespace {

Tensor run_chunked(const BctmModel& model, const Core& core, const Tensor& x, double t, double s,
                   bool anchor) {
    const std::size_t rows = x.rows(), d = x.cols();
    if (d != model.dim()) {
        throw ShapeError("traverse: " + x.shape_str() + " vs dim " + std::to_string(model.dim()));
    }
    Tensor out({rows, d});
    for (std::size_t start = 0; start < rows; start += INFER_CHUNK) {
        const std::size_t b = std::min(INFER_CHUNK, rows - start);
        Tensor chunk({b, d},
                     std::vector<double>(x.data() + start * d, x.data() + (start + b) * d));
        Tape tape;
        std::vector<Var> params = core.bind(tape, /*trainable=*/false);
        Var vx = tape.constant(std::move(chunk));
        Var vt = tape.constant(Tensor({1, 1}, {t}));
        Var res = anchor ? model.anchor_denoise_on(tape, params, vx, vt)
                         : model.traverse_on(tape, params, vx, vt,
                                             tape.constant(Tensor({1, 1}, {s})));
        const Tensor& rv = tape.value(res);
        for (std::size_t i = 0; i < b; ++i) out.set_row(start + i, rv.data() + i * d, d);
    }
    return out;
}

}  // namespace

Tensor BctmModel::traverse(const Tensor& x, double t, double s) const {
    if (t <= 0.0 || s <= 0.0) throw DomainError("traverse with non-positive endpoint time");
    return run_chunked(*this, *core_, x, t, s, /*anchor=*/false);
}

Tensor BctmModel::anchor_denoise(const Tensor& x, double t) const {
    if (t <= 0.0) throw DomainError("anchor_denoise at non-positive time");
    return run_chunked(*this, *core_, x, t, t, /*anchor=*/true);
}

BctmModel make_mlp_trajectory(std::size_t dim, const std::vector<std::size_t>& hidden,
                              double sigma_data, std::uint64_t seed) {
    auto core = std::make_unique<MlpCore>(dim, hidden, /*cond_s=*/true);
    RandomStream rng = RandomStream::for_sample(seed, 0, 0x7247);
    core->init_params(rng);
    return BctmModel(std::move(core), sigma_data);
}

BctmModel make_egnn_trajectory(const Geometry& geo, std::size_t hidden, std::size_t layers,
                               double sigma_data, std::uint64_t seed) {
    auto core = std::make_unique<EgnnCore>(geo, hidden, layers, /*cond_s=*/true);
    RandomStream rng = RandomStream::for_sample(seed, 0, 0x7248);
    core->init_params(rng);
    return BctmModel(std::move(core), sigma_data, geo);
}

}  // namespace bgis::models
