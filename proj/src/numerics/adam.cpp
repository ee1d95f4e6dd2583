#include "bgis/numerics/adam.hpp"

#include <cmath>

namespace bgis::numerics {

void AdamState::init(const std::vector<Tensor*>& params) {
    m.clear();
    v.clear();
    m.reserve(params.size());
    v.reserve(params.size());
    for (const Tensor* p : params) {
        m.push_back(Tensor::zeros_like(*p));
        v.push_back(Tensor::zeros_like(*p));
    }
    step = 0;
}

void adam_step(AdamState& state, const std::vector<Tensor*>& params,
               const std::vector<const Tensor*>& grads) {
    if (!state.initialized()) throw ContractError("adam_step before AdamState::init");
    if (params.size() != state.m.size() || grads.size() != params.size()) {
        throw ContractError("adam_step parameter/gradient count mismatch");
    }
    ++state.step;
    const double b1 = state.beta1, b2 = state.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        const Tensor& g = *grads[k];
        Tensor& mk = state.m[k];
        Tensor& vk = state.v[k];
        if (!p.same_shape(mk) || !g.same_shape(p)) {
            throw ShapeError("adam_step shape mismatch at parameter " + std::to_string(k));
        }
        for (std::size_t i = 0; i < p.size(); ++i) {
            mk[i] = b1 * mk[i] + (1.0 - b1) * g[i];
            vk[i] = b2 * vk[i] + (1.0 - b2) * g[i] * g[i];
            const double mhat = mk[i] / bc1;
            const double vhat = vk[i] / bc2;
            p[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
    double sq = 0.0;
    for (const Tensor& g : grads) sq += squared_norm(g);
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (Tensor& g : grads) {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] *= s;
        }
    }
    return norm;
}

}  // namespace bgis::numerics
