#include "bgis/models/egnn.hpp"

#include <cmath>

#include "bgis/models/features.hpp"

namespace bgis::models {

EgnnCore::EgnnCore(Geometry geo, std::size_t hidden, std::size_t layers, bool cond_s)
    : geo_(geo), hidden_(hidden), layers_(layers), cond_s_(cond_s) {
    if (geo_.particles < 2 || geo_.space_dim == 0) {
        throw ConfigError("EgnnCore needs at least two particles in a positive dimension");
    }
    if (hidden_ == 0 || layers_ == 0) throw ConfigError("EgnnCore with empty architecture");
    const std::size_t feat = TIME_FEATURE_DIM * (cond_s_ ? 2 : 1);
    embed_w_ = Tensor({feat, hidden_});
    embed_b_ = Tensor({hidden_});
    layers_params_.resize(layers_);
    for (Layer& l : layers_params_) {
        l.edge_w1 = Tensor({2 * hidden_ + 1, hidden_});
        l.edge_b1 = Tensor({hidden_});
        l.edge_w2 = Tensor({hidden_, hidden_});
        l.edge_b2 = Tensor({hidden_});
        l.coord_w1 = Tensor({hidden_, hidden_});
        l.coord_b1 = Tensor({hidden_});
        l.coord_w2 = Tensor({hidden_, 1});
        l.coord_b2 = Tensor({1});
        l.node_w1 = Tensor({2 * hidden_, hidden_});
        l.node_b1 = Tensor({hidden_});
        l.node_w2 = Tensor({hidden_, hidden_});
        l.node_b2 = Tensor({hidden_});
    }
}

void EgnnCore::init_params(RandomStream& rng) {
    auto he = [&rng](Tensor& w) {
        const double scale = std::sqrt(2.0 / static_cast<double>(w.shape()[0]));
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = scale * rng.normal();
    };
    he(embed_w_);
    embed_b_.fill(0.0);
    for (Layer& l : layers_params_) {
        he(l.edge_w1);
        he(l.edge_w2);
        he(l.coord_w1);
        he(l.node_w1);
        he(l.node_w2);
        l.edge_b1.fill(0.0);
        l.edge_b2.fill(0.0);
        l.coord_b1.fill(0.0);
        l.node_b1.fill(0.0);
        l.node_b2.fill(0.0);
        // Zero coordinate gates: the displacement starts at exactly zero, so
        // a freshly initialized wrapped model reduces to its skip path.
        l.coord_w2.fill(0.0);
        l.coord_b2.fill(0.0);
    }
}

std::vector<Tensor*> EgnnCore::params() {
    std::vector<Tensor*> out{&embed_w_, &embed_b_};
    for (Layer& l : layers_params_) {
        for (Tensor* t : {&l.edge_w1, &l.edge_b1, &l.edge_w2, &l.edge_b2, &l.coord_w1, &l.coord_b1,
                          &l.coord_w2, &l.coord_b2, &l.node_w1, &l.node_b1, &l.node_w2, &l.node_b2}) {
            out.push_back(t);
        }
    }
    return out;
}

Var EgnnCore::forward_on(Tape& tape, const std::vector<Var>& p, Var x, Var tfeat,
                         Var sfeat) const {
    constexpr std::size_t PER_LAYER = 12;
    if (p.size() != 2 + PER_LAYER * layers_) {
        throw ContractError("EgnnCore::forward_on with wrong parameter binding");
    }
    const std::size_t n = geo_.particles, d = geo_.space_dim;
    const std::size_t rows = tape.value(x).rows();
    if (tape.value(x).cols() != n * d) {
        throw ShapeError("EgnnCore input " + tape.value(x).shape_str());
    }

    // Shared time embedding (every node starts from it).
    std::vector<Var> feats{rows_like(tape, tfeat, rows)};
    if (cond_s_) {
        if (!sfeat.valid()) throw ContractError("s-conditioned EGNN needs s features");
        feats.push_back(rows_like(tape, sfeat, rows));
    }
    Var femb = feats.size() == 1 ? feats[0] : tape.concat_cols(feats);
    Var h0 = tape.silu(tape.add(tape.matmul(femb, p[0]), p[1]));

    std::vector<Var> h(n, h0);
    std::vector<Var> pos(n);
    for (std::size_t i = 0; i < n; ++i) pos[i] = tape.slice_cols(x, i * d, d);

    auto mlp2 = [&tape](Var in, Var w1, Var b1, Var w2, Var b2) {
        Var a = tape.silu(tape.add(tape.matmul(in, w1), b1));
        return tape.add(tape.matmul(a, w2), b2);
    };

    for (std::size_t l = 0; l < layers_; ++l) {
        const std::size_t base = 2 + l * PER_LAYER;
        const Var edge_w1 = p[base + 0], edge_b1 = p[base + 1];
        const Var edge_w2 = p[base + 2], edge_b2 = p[base + 3];
        const Var coord_w1 = p[base + 4], coord_b1 = p[base + 5];
        const Var coord_w2 = p[base + 6], coord_b2 = p[base + 7];
        const Var node_w1 = p[base + 8], node_b1 = p[base + 9];
        const Var node_w2 = p[base + 10], node_b2 = p[base + 11];

        // Directed messages m[i][j] for j != i, plus coordinate deltas.
        std::vector<Var> msg_sum(n), new_pos(n);
        for (std::size_t i = 0; i < n; ++i) {
            Var acc_msg;
            Var acc_delta;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                Var diff = tape.sub(pos[i], pos[j]);
                Var d2 = tape.row_sum(tape.square(diff));
                Var m = mlp2(tape.concat_cols({h[i], h[j], d2}), edge_w1, edge_b1, edge_w2,
                             edge_b2);
                m = tape.silu(m);
                // Distance-normalized coordinate update, smoothed near zero.
                Var dist = tape.sqrt(tape.add_const(d2, 1e-8));
                Var gate = mlp2(m, coord_w1, coord_b1, coord_w2, coord_b2);
                Var unit = tape.div(diff, tape.add_const(dist, 1.0));
                Var delta = tape.mul(unit, gate);
                acc_msg = acc_msg.valid() ? tape.add(acc_msg, m) : m;
                acc_delta = acc_delta.valid() ? tape.add(acc_delta, delta) : delta;
            }
            msg_sum[i] = tape.mul_const(acc_msg, 1.0 / static_cast<double>(n - 1));
            new_pos[i] = tape.add(pos[i], acc_delta);
        }
        for (std::size_t i = 0; i < n; ++i) {
            Var upd = mlp2(tape.concat_cols({h[i], msg_sum[i]}), node_w1, node_b1, node_w2,
                           node_b2);
            h[i] = tape.add(h[i], upd);
            pos[i] = new_pos[i];
        }
    }

    // Output is the accumulated displacement, translation-free.
    Var out = tape.sub(tape.concat_cols(pos), x);
    return tape.project_zero_cog(out, n, d);
}

nlohmann::json EgnnCore::arch_json() const {
    return nlohmann::json{{"type", "egnn"},
                          {"particles", geo_.particles},
                          {"space_dim", geo_.space_dim},
                          {"hidden", hidden_},
                          {"layers", layers_},
                          {"cond_s", cond_s_}};
}

std::unique_ptr<Core> EgnnCore::clone() const { return std::make_unique<EgnnCore>(*this); }

}  // namespace bgis::models
