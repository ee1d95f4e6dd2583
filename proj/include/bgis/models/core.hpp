#pragma once

#include <memory>
#include <vector>

#include "json.hpp"

#include "bgis/numerics/random.hpp"
#include "bgis/numerics/tape.hpp"

namespace bgis::models {

using numerics::RandomStream;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

// Raw trainable network F(x_scaled, t_features [, s_features]).  Cores know
// nothing about preconditioning or diffusion; wrappers provide that.
class Core {
public:
    virtual ~Core() = default;

    virtual std::size_t x_dim() const = 0;
    virtual bool conditions_on_s() const = 0;

    // Trainable tensors in a stable order (shared with checkpoints).
    virtual std::vector<Tensor*> params() = 0;
    std::vector<const Tensor*> params() const;
    std::size_t param_count() const;

    // Copy parameters onto a tape; trainable leaves require gradients.
    std::vector<Var> bind(Tape& tape, bool trainable) const;

    // x: [B, x_dim] (already input-scaled); tfeat: [B, F]; sfeat valid iff
    // conditions_on_s().  Returns [B, x_dim].
    virtual Var forward_on(Tape& tape, const std::vector<Var>& params, Var x, Var tfeat,
                           Var sfeat) const = 0;

    virtual nlohmann::json arch_json() const = 0;
    virtual std::unique_ptr<Core> clone() const = 0;
};

// Fully-connected core: concat(x, tfeat [, sfeat]) -> hidden layers with
// SiLU -> linear read-out of x_dim.  The read-out starts at zero so the
// wrapped model reproduces its skip path exactly at initialization.
class MlpCore : public Core {
public:
    MlpCore(std::size_t x_dim, std::vector<std::size_t> hidden, bool cond_s);

    void init_params(RandomStream& rng);

    std::size_t x_dim() const override { return x_dim_; }
    bool conditions_on_s() const override { return cond_s_; }
    std::vector<Tensor*> params() override;
    Var forward_on(Tape& tape, const std::vector<Var>& params, Var x, Var tfeat,
                   Var sfeat) const override;
    nlohmann::json arch_json() const override;
    std::unique_ptr<Core> clone() const override;

    const std::vector<std::size_t>& hidden() const { return hidden_; }

private:
    std::size_t x_dim_;
    std::vector<std::size_t> hidden_;
    bool cond_s_;
    std::vector<Tensor> weights_;  // [in, out] per layer
    std::vector<Tensor> biases_;   // [out] per layer
};

// Builds a core from its arch descriptor (parameters zero until loaded).
std::unique_ptr<Core> core_from_json(const nlohmann::json& arch);

// EMA/param-vector helpers shared by training loops.
void copy_params(const std::vector<const Tensor*>& src, std::vector<Tensor*> dst);
void ema_update(std::vector<Tensor*> ema, const std::vector<const Tensor*>& online, double mu);

}  // namespace bgis::models
