#pragma once

#include <vector>

#include "bgis/numerics/tensor.hpp"

namespace bgis::numerics {

// Adam with bias correction.  State tensors mirror the parameter list that
// init() saw; adam_step() asserts the same count/shapes on each call.
struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t step = 0;

    std::vector<Tensor> m;
    std::vector<Tensor> v;

    void init(const std::vector<Tensor*>& params);
    bool initialized() const { return !m.empty(); }
};

// One update in place: p <- p - lr * m_hat / (sqrt(v_hat) + eps).
void adam_step(AdamState& state, const std::vector<Tensor*>& params,
               const std::vector<const Tensor*>& grads);

// Scales grads in place so the global L2 norm is at most `max_norm`;
// returns the pre-clip norm.
double clip_global_norm(std::vector<Tensor>& grads, double max_norm);

}  // namespace bgis::numerics
