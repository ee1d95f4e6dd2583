#pragma once

#include "bgis/geometry.hpp"
#include "bgis/models/core.hpp"

namespace bgis::models {

// E(3)-equivariant core for planar particle systems.  Node features start
// from the time embedding alone; messages are built from squared pairwise
// distances, coordinate updates move along distance-normalized differences,
// and the final displacement is projected back onto the zero-CoG subspace.
// The result is permutation-equivariant, rotation-equivariant, and exactly
// translation-invariant.
class EgnnCore : public Core {
public:
    EgnnCore(Geometry geo, std::size_t hidden, std::size_t layers, bool cond_s);

    void init_params(RandomStream& rng);

    std::size_t x_dim() const override { return geo_.particles * geo_.space_dim; }
    bool conditions_on_s() const override { return cond_s_; }
    const Geometry& geometry() const { return geo_; }
    std::size_t hidden() const { return hidden_; }
    std::size_t layers() const { return layers_; }

    std::vector<Tensor*> params() override;
    Var forward_on(Tape& tape, const std::vector<Var>& params, Var x, Var tfeat,
                   Var sfeat) const override;
    nlohmann::json arch_json() const override;
    std::unique_ptr<Core> clone() const override;

private:
    struct Layer {
        Tensor edge_w1, edge_b1, edge_w2, edge_b2;    // messages from (h_i, h_j, d^2)
        Tensor coord_w1, coord_b1, coord_w2, coord_b2;  // scalar gate per directed pair
        Tensor node_w1, node_b1, node_w2, node_b2;    // node update from (h_i, mean message)
    };

    Geometry geo_;
    std::size_t hidden_;
    std::size_t layers_;
    bool cond_s_;
    Tensor embed_w_, embed_b_;
    std::vector<Layer> layers_params_;
};

}  // namespace bgis::models
