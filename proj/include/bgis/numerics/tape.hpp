#pragma once

#include <functional>
#include <vector>

#include "bgis/numerics/tensor.hpp"

namespace bgis::numerics {

// Handle into a Tape.  Vars are only meaningful together with the tape
// that produced them.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Tensor-level reverse-mode autodiff tape.  Operations record their
// backward rule as they execute; backward() replays them in reverse
// creation order, which is a valid topological order by construction.
//
// Broadcasting in binary ops follows the usual convention on (rows, cols):
// a dimension of size 1 stretches to match; gradients sum over stretched
// dimensions.  Rank-0/1 tensors are treated as [1,1] / [1,C].
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // --- leaves -----------------------------------------------------------
    Var leaf(Tensor value, bool requires_grad = true);
    Var constant(Tensor value) { return leaf(std::move(value), false); }
    Var constant_scalar(double v) { return constant(Tensor::scalar(v)); }

    const Tensor& value(Var v) const;
    // Gradient of the last backward() root w.r.t. v.  Zero tensor if v never
    // received an adjoint; throws CapabilityError if v does not require grad.
    const Tensor& grad(Var v);
    bool requires_grad(Var v) const;

    // Root must hold exactly one element.
    void backward(Var root);

    std::size_t size() const { return nodes_.size(); }

    // --- binary (broadcasting) --------------------------------------------
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);

    // --- scalar-constant convenience ----------------------------------------
    Var add_const(Var a, double c);
    Var mul_const(Var a, double c);

    // --- unary ---------------------------------------------------------------
    Var neg(Var a);
    Var exp(Var a);
    Var log(Var a);   // throws DomainError on non-positive input
    Var sqrt(Var a);  // throws DomainError on negative input
    Var tanh(Var a);
    Var sigmoid(Var a);
    Var silu(Var a);
    Var sin(Var a);
    Var cos(Var a);
    Var square(Var a);
    Var pow_const(Var a, double p);

    // --- linear algebra --------------------------------------------------------
    // Strict 2-D product [R,K] x [K,C].
    Var matmul(Var a, Var b);

    // --- reductions / shaping ---------------------------------------------------
    Var sum_all(Var a);   // -> rank-0 scalar
    Var mean_all(Var a);  // -> rank-0 scalar
    Var row_sum(Var a);   // [R,C] -> [R,1]
    Var concat_cols(const std::vector<Var>& parts);
    Var slice_cols(Var a, std::size_t start, std::size_t len);
    Var reshape(Var a, std::vector<std::size_t> shape);
    Var tile_rows(Var a, std::size_t r);  // [1,C] -> [r,C]

    // Subtract the per-particle-coordinate centre of gravity:
    // x is [B, particles*dim]; each dim-block mean over particles is removed.
    // The projection is symmetric and idempotent, so backward applies it too.
    Var project_zero_cog(Var a, std::size_t particles, std::size_t dim);

    // Value copied onto the tape as a non-differentiable constant.
    Var stop_gradient(Var a);

private:
    struct Node {
        Tensor val;
        Tensor grad;  // lazily allocated on first adjoint
        bool needs_grad = false;
        std::function<void()> back;  // empty for leaves
    };

    Var push(Tensor val, bool needs, std::function<void()> back);
    void accumulate(int id, const Tensor& g);
    // Accumulate with broadcast-reduction: g has the broadcasted shape,
    // target node id has the (possibly smaller) original shape.
    void accumulate_bcast(int id, const Tensor& g);
    Node& node(Var v);
    const Tensor& val(int id) const { return nodes_[static_cast<std::size_t>(id)].val; }
    Tensor& grad_ref(int id);

    Var binary_op(Var a, Var b, const char* name, int kind);

    std::vector<Node> nodes_;
};

// Evaluate a scalar tape program f at leaf value x; returns (f(x), df/dx).
std::pair<double, Tensor> grad(const std::function<Var(Tape&, Var)>& f, const Tensor& x);

struct GradCheckReport {
    double max_rel_err = 0.0;  // worst coordinate, relative to scale
    double max_abs_err = 0.0;
    std::size_t coords = 0;
};

// Central finite-difference check of grad(f, x); `rel` errors are measured
// against max(|analytic|, |numeric|, floor) per coordinate.
GradCheckReport check_gradient(const std::function<Var(Tape&, Var)>& f, const Tensor& x,
                               double h = 1e-5, double floor = 1e-6);

}  // namespace bgis::numerics
