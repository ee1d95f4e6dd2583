#include "bgis/models/analytic.hpp"

#include <cmath>

namespace bgis::models {

GaussianFlowModel::GaussianFlowModel(Tensor mean, double variance)
    : mean_(std::move(mean)), var_(variance) {
    if (var_ <= 0.0) throw ConfigError("GaussianFlowModel variance must be positive");
    if (mean_.rank() != 1) throw ShapeError("GaussianFlowModel mean must be a vector");
}

Var GaussianFlowModel::traverse_on(Tape& tape, const std::vector<Var>&, Var x, Var t,
                                   Var s) const {
    const std::size_t d = mean_.size();
    Var mu = tape.constant(
        Tensor({1, d}, std::vector<double>(mean_.data(), mean_.data() + d)));
    Var ratio = tape.sqrt(tape.div(tape.add_const(tape.square(s), var_),
                                   tape.add_const(tape.square(t), var_)));
    return tape.add(mu, tape.mul(tape.sub(x, mu), ratio));
}

Tensor GaussianFlowModel::traverse(const Tensor& x, double t, double s) const {
    if (t < 0.0 || s < 0.0) throw DomainError("traverse with negative time");
    if (x.cols() != mean_.size()) {
        throw ShapeError("traverse: " + x.shape_str() + " vs dim " + std::to_string(mean_.size()));
    }
    if (s == t) return x;
    const double ratio = std::sqrt((var_ + s * s) / (var_ + t * t));
    Tensor out = x;
    const std::size_t r = x.rows(), d = x.cols();
    for (std::size_t i = 0; i < r; ++i) {
        double* row = out.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) {
            row[j] = mean_[j] + (row[j] - mean_[j]) * ratio;
        }
    }
    return out;
}

}  // namespace bgis::models
