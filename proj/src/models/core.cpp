#include "bgis/models/core.hpp"

#include <cmath>

#include "bgis/models/features.hpp"

namespace bgis::models {

std::vector<const Tensor*> Core::params() const {
    std::vector<Tensor*> mut = const_cast<Core*>(this)->params();
    return std::vector<const Tensor*>(mut.begin(), mut.end());
}

std::size_t Core::param_count() const {
    std::size_t n = 0;
    for (const Tensor* p : params()) n += p->size();
    return n;
}

std::vector<Var> Core::bind(Tape& tape, bool trainable) const {
    std::vector<Var> vars;
    for (const Tensor* p : params()) vars.push_back(tape.leaf(*p, trainable));
    return vars;
}

MlpCore::MlpCore(std::size_t x_dim, std::vector<std::size_t> hidden, bool cond_s)
    : x_dim_(x_dim), hidden_(std::move(hidden)), cond_s_(cond_s) {
    if (x_dim_ == 0) throw ConfigError("MlpCore with zero input dim");
    if (hidden_.empty()) throw ConfigError("MlpCore needs at least one hidden layer");
    const std::size_t feat = TIME_FEATURE_DIM * (cond_s_ ? 2 : 1);
    std::size_t in = x_dim_ + feat;
    for (std::size_t h : hidden_) {
        weights_.push_back(Tensor({in, h}));
        biases_.push_back(Tensor({h}));
        in = h;
    }
    weights_.push_back(Tensor({in, x_dim_}));
    biases_.push_back(Tensor({x_dim_}));
}

void MlpCore::init_params(RandomStream& rng) {
    // He-style fan-in init for the hidden stack, zero read-out.
    for (std::size_t l = 0; l + 1 < weights_.size(); ++l) {
        Tensor& w = weights_[l];
        const double scale = std::sqrt(2.0 / static_cast<double>(w.shape()[0]));
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = scale * rng.normal();
        biases_[l].fill(0.0);
    }
    weights_.back().fill(0.0);
    biases_.back().fill(0.0);
}

std::vector<Tensor*> MlpCore::params() {
    std::vector<Tensor*> out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        out.push_back(&weights_[l]);
        out.push_back(&biases_[l]);
    }
    return out;
}

Var MlpCore::forward_on(Tape& tape, const std::vector<Var>& params, Var x, Var tfeat,
                        Var sfeat) const {
    if (params.size() != 2 * weights_.size()) {
        throw ContractError("MlpCore::forward_on with wrong parameter binding");
    }
    const std::size_t rows = tape.value(x).rows();
    std::vector<Var> inputs{x, rows_like(tape, tfeat, rows)};
    if (cond_s_) {
        if (!sfeat.valid()) throw ContractError("s-conditioned core needs s features");
        inputs.push_back(rows_like(tape, sfeat, rows));
    } else if (sfeat.valid()) {
        throw ContractError("core does not condition on s");
    }
    Var h = tape.concat_cols(inputs);
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        h = tape.add(tape.matmul(h, params[2 * l]), params[2 * l + 1]);
        if (l + 1 < weights_.size()) h = tape.silu(h);
    }
    return h;
}

nlohmann::json MlpCore::arch_json() const {
    return nlohmann::json{{"type", "mlp"}, {"x_dim", x_dim_}, {"hidden", hidden_},
                          {"cond_s", cond_s_}};
}

std::unique_ptr<Core> MlpCore::clone() const { return std::make_unique<MlpCore>(*this); }

void copy_params(const std::vector<const Tensor*>& src, std::vector<Tensor*> dst) {
    if (src.size() != dst.size()) throw ContractError("copy_params count mismatch");
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = *src[i];
}

void ema_update(std::vector<Tensor*> ema, const std::vector<const Tensor*>& online, double mu) {
    if (ema.size() != online.size()) throw ContractError("ema_update count mismatch");
    for (std::size_t i = 0; i < ema.size(); ++i) {
        Tensor& e = *ema[i];
        const Tensor& o = *online[i];
        for (std::size_t k = 0; k < e.size(); ++k) e[k] = mu * e[k] + (1.0 - mu) * o[k];
    }
}

}  // namespace bgis::models
