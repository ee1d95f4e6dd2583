#include "bgis/numerics/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace bgis::numerics {

namespace {

// Row/col view with broadcast strides (stride 0 on a stretched dim).
struct View2 {
    std::size_t r, c, rs, cs;
};

View2 view_of(const Tensor& t) {
    std::size_t r = 1, c = 1;
    if (t.rank() == 1) {
        c = t.shape()[0];
    } else if (t.rank() == 2) {
        r = t.shape()[0];
        c = t.shape()[1];
    } else if (t.rank() > 2) {
        throw ShapeError("tape ops support rank <= 2, got " + t.shape_str());
    }
    return View2{r, c, r == 1 ? 0 : c, c == 1 ? 0 : 1};
}

struct BcPlan {
    View2 a, b;
    std::size_t r, c;
    std::vector<std::size_t> out_shape;
};

BcPlan broadcast_plan(const Tensor& a, const Tensor& b, const char* name) {
    const View2 va = view_of(a), vb = view_of(b);
    const bool rows_ok = va.r == vb.r || va.r == 1 || vb.r == 1;
    const bool cols_ok = va.c == vb.c || va.c == 1 || vb.c == 1;
    if (!rows_ok || !cols_ok) {
        throw ShapeError(std::string(name) + ": incompatible shapes " + a.shape_str() + " vs " +
                         b.shape_str());
    }
    BcPlan p;
    p.a = va;
    p.b = vb;
    p.r = std::max(va.r, vb.r);
    p.c = std::max(va.c, vb.c);
    if (a.rank() == 0 && b.rank() == 0) {
        p.out_shape = {};
    } else if (p.r == 1 && a.rank() <= 1 && b.rank() <= 1) {
        p.out_shape = {p.c};
    } else {
        p.out_shape = {p.r, p.c};
    }
    return p;
}

enum BinaryKind { kAdd = 0, kSub = 1, kMul = 2, kDiv = 3 };

}  // namespace

Var Tape::push(Tensor val, bool needs, std::function<void()> back) {
    nodes_.push_back(Node{std::move(val), Tensor(), needs, std::move(back)});
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Tape::Node& Tape::node(Var v) {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
        throw ContractError("Var does not belong to this tape");
    }
    return nodes_[static_cast<std::size_t>(v.id)];
}

Tensor& Tape::grad_ref(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty() && n.val.size() > 0) n.grad = Tensor::zeros_like(n.val);
    return n.grad;
}

Var Tape::leaf(Tensor value, bool requires_grad) {
    return push(std::move(value), requires_grad, nullptr);
}

const Tensor& Tape::value(Var v) const {
    return const_cast<Tape*>(this)->node(v).val;
}

const Tensor& Tape::grad(Var v) {
    Node& n = node(v);
    if (!n.needs_grad) {
        throw CapabilityError("grad() on a Var that does not require gradients");
    }
    if (n.grad.empty()) n.grad = Tensor::zeros_like(n.val);
    return n.grad;
}

bool Tape::requires_grad(Var v) const {
    return const_cast<Tape*>(this)->node(v).needs_grad;
}

void Tape::backward(Var root) {
    Node& r = node(root);
    if (r.val.size() != 1) {
        throw ShapeError("backward() root must be a scalar, got " + r.val.shape_str());
    }
    if (!r.needs_grad) {
        throw CapabilityError("backward() root does not depend on any differentiable leaf");
    }
    for (Node& n : nodes_) n.grad = Tensor();
    grad_ref(root.id).fill(1.0);
    for (int i = root.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (!n.needs_grad || n.grad.empty() || !n.back) continue;
        n.back();
    }
}

void Tape::accumulate(int id, const Tensor& g) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad) return;
    Tensor& acc = grad_ref(id);
    if (!acc.same_shape(g)) {
        // Same element count, different rank bookkeeping (e.g. [C] vs [1,C]).
        if (acc.size() != g.size()) {
            throw ShapeError("gradient accumulation shape mismatch: " + acc.shape_str() + " vs " +
                             g.shape_str());
        }
    }
    double* pa = acc.data();
    const double* pg = g.data();
    for (std::size_t i = 0; i < acc.size(); ++i) pa[i] += pg[i];
}

void Tape::accumulate_bcast(int id, const Tensor& g) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad) return;
    Tensor& acc = grad_ref(id);
    if (acc.size() == g.size()) {
        accumulate(id, g);
        return;
    }
    const View2 vt = view_of(n.val);
    const View2 vg = view_of(g);
    double* pa = acc.data();
    const double* pg = g.data();
    for (std::size_t i = 0; i < vg.r; ++i) {
        const std::size_t ti = (vt.r == 1) ? 0 : i;
        for (std::size_t j = 0; j < vg.c; ++j) {
            const std::size_t tj = (vt.c == 1) ? 0 : j;
            pa[ti * vt.rs + tj * vt.cs] += pg[i * vg.rs + j * vg.cs];
        }
    }
}

Var Tape::binary_op(Var a, Var b, const char* name, int kind) {
    const Tensor& ta = node(a).val;
    const Tensor& tb = node(b).val;
    const BcPlan p = broadcast_plan(ta, tb, name);
    Tensor out(p.out_shape);
    const double* pa = ta.data();
    const double* pb = tb.data();
    double* po = out.data();
    for (std::size_t i = 0; i < p.r; ++i) {
        for (std::size_t j = 0; j < p.c; ++j) {
            const double x = pa[i * p.a.rs + j * p.a.cs];
            const double y = pb[i * p.b.rs + j * p.b.cs];
            double v = 0.0;
            switch (kind) {
                case kAdd: v = x + y; break;
                case kSub: v = x - y; break;
                case kMul: v = x * y; break;
                case kDiv: v = x / y; break;
            }
            po[i * p.c + j] = v;
        }
    }
    const bool req = node(a).needs_grad || node(b).needs_grad;
    const int ia = a.id, ib = b.id;
    Var outv = push(std::move(out), req, nullptr);
    const int io = outv.id;
    if (req) {
        node(outv).back = [this, ia, ib, io, kind] {
            const Tensor& g = nodes_[static_cast<std::size_t>(io)].grad;
            const Tensor& va = val(ia);
            const Tensor& vb = val(ib);
            switch (kind) {
                case kAdd: {
                    accumulate_bcast(ia, g);
                    accumulate_bcast(ib, g);
                    break;
                }
                case kSub: {
                    accumulate_bcast(ia, g);
                    Tensor ng = g * -1.0;
                    accumulate_bcast(ib, ng);
                    break;
                }
                case kMul: {
                    if (nodes_[static_cast<std::size_t>(ia)].needs_grad) {
                        const BcPlan p2 = broadcast_plan(g, vb, "mul.bwd");
                        Tensor da(p2.out_shape);
                        const double* pg = g.data();
                        const double* pb2 = vb.data();
                        double* pd = da.data();
                        for (std::size_t i = 0; i < p2.r; ++i)
                            for (std::size_t j = 0; j < p2.c; ++j)
                                pd[i * p2.c + j] = pg[i * p2.a.rs + j * p2.a.cs] *
                                                   pb2[i * p2.b.rs + j * p2.b.cs];
                        accumulate_bcast(ia, da);
                    }
                    if (nodes_[static_cast<std::size_t>(ib)].needs_grad) {
                        const BcPlan p2 = broadcast_plan(g, va, "mul.bwd");
                        Tensor db(p2.out_shape);
                        const double* pg = g.data();
                        const double* pa2 = va.data();
                        double* pd = db.data();
                        for (std::size_t i = 0; i < p2.r; ++i)
                            for (std::size_t j = 0; j < p2.c; ++j)
                                pd[i * p2.c + j] = pg[i * p2.a.rs + j * p2.a.cs] *
                                                   pa2[i * p2.b.rs + j * p2.b.cs];
                        accumulate_bcast(ib, db);
                    }
                    break;
                }
                case kDiv: {
                    const Tensor& vo = val(io);
                    if (nodes_[static_cast<std::size_t>(ia)].needs_grad) {
                        const BcPlan p2 = broadcast_plan(g, vb, "div.bwd");
                        Tensor da(p2.out_shape);
                        const double* pg = g.data();
                        const double* pb2 = vb.data();
                        double* pd = da.data();
                        for (std::size_t i = 0; i < p2.r; ++i)
                            for (std::size_t j = 0; j < p2.c; ++j)
                                pd[i * p2.c + j] = pg[i * p2.a.rs + j * p2.a.cs] /
                                                   pb2[i * p2.b.rs + j * p2.b.cs];
                        accumulate_bcast(ia, da);
                    }
                    if (nodes_[static_cast<std::size_t>(ib)].needs_grad) {
                        // d(a/b)/db = -out / b, evaluated at broadcast shape.
                        const BcPlan p2 = broadcast_plan(vo, vb, "div.bwd");
                        Tensor db(p2.out_shape);
                        const double* pg = g.data();
                        const View2 vg = view_of(const_cast<Tensor&>(g));
                        const double* po2 = vo.data();
                        const double* pb2 = vb.data();
                        double* pd = db.data();
                        for (std::size_t i = 0; i < p2.r; ++i)
                            for (std::size_t j = 0; j < p2.c; ++j)
                                pd[i * p2.c + j] = -pg[i * vg.rs + j * vg.cs] *
                                                   po2[i * p2.a.rs + j * p2.a.cs] /
                                                   pb2[i * p2.b.rs + j * p2.b.cs];
                        accumulate_bcast(ib, db);
                    }
                    break;
                }
            }
        };
    }
    return outv;
}

Var Tape::add(Var a, Var b) { return binary_op(a, b, "add", kAdd); }
Var Tape::sub(Var a, Var b) { return binary_op(a, b, "sub", kSub); }
Var Tape::mul(Var a, Var b) { return binary_op(a, b, "mul", kMul); }
Var Tape::div(Var a, Var b) { return binary_op(a, b, "div", kDiv); }

Var Tape::add_const(Var a, double c) {
    Tensor out = node(a).val;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += c;
    const bool req = node(a).needs_grad;
    const int ia = a.id;
    Var outv = push(std::move(out), req, nullptr);
    const int io = outv.id;
    if (req) {
        node(outv).back = [this, ia, io] { accumulate(ia, nodes_[static_cast<std::size_t>(io)].grad); };
    }
    return outv;
}

Var Tape::mul_const(Var a, double c) {
    Tensor out = node(a).val * c;
    const bool req = node(a).needs_grad;
    const int ia = a.id;
    Var outv = push(std::move(out), req, nullptr);
    const int io = outv.id;
    if (req) {
        node(outv).back = [this, ia, io, c] {
            Tensor g = nodes_[static_cast<std::size_t>(io)].grad * c;
            accumulate(ia, g);
        };
    }
    return outv;
}

Var Tape::neg(Var a) { return mul_const(a, -1.0); }

namespace {

using UnaryFwd = double (*)(double);

}  // namespace

// Shared scaffolding for elementwise unaries; `dfun` maps (x, y=f(x)) to f'(x).
#define BGIS_UNARY_OP(NAME, FWD_EXPR, BWD_EXPR, DOMAIN_CHECK)                                 \
    Var Tape::NAME(Var a) {                                                                   \
        const Tensor& ta = node(a).val;                                                       \
        Tensor out = Tensor::zeros_like(ta);                                                  \
        for (std::size_t i = 0; i < ta.size(); ++i) {                                         \
            const double x = ta[i];                                                           \
            DOMAIN_CHECK;                                                                     \
            out[i] = (FWD_EXPR);                                                              \
        }                                                                                     \
        const bool req = node(a).needs_grad;                                                    \
        const int ia = a.id;                                                                  \
        Var outv = push(std::move(out), req, nullptr);                                        \
        const int io = outv.id;                                                               \
        if (req) {                                                                            \
            node(outv).back = [this, ia, io] {                                                \
                const Tensor& g = nodes_[static_cast<std::size_t>(io)].grad;                  \
                const Tensor& vx = val(ia);                                                   \
                const Tensor& vy = val(io);                                                   \
                (void)vy;                                                                     \
                Tensor d = Tensor::zeros_like(vx);                                            \
                for (std::size_t i = 0; i < vx.size(); ++i) {                                 \
                    const double x = vx[i];                                                   \
                    const double y = vy[i];                                                   \
                    (void)x;                                                                  \
                    (void)y;                                                                  \
                    d[i] = g[i] * (BWD_EXPR);                                                 \
                }                                                                             \
                accumulate(ia, d);                                                            \
            };                                                                                \
        }                                                                                     \
        return outv;                                                                          \
    }

BGIS_UNARY_OP(exp, std::exp(x), y, )
BGIS_UNARY_OP(log, std::log(x), 1.0 / x,
              if (x <= 0.0) throw DomainError("log of non-positive value"))
BGIS_UNARY_OP(sqrt, std::sqrt(x), 0.5 / y,
              if (x < 0.0) throw DomainError("sqrt of negative value"))
BGIS_UNARY_OP(tanh, std::tanh(x), 1.0 - y * y, )
BGIS_UNARY_OP(sigmoid, 1.0 / (1.0 + std::exp(-x)), y * (1.0 - y), )
BGIS_UNARY_OP(sin, std::sin(x), std::cos(x), )
BGIS_UNARY_OP(cos, std::cos(x), -std::sin(x), )
BGIS_UNARY_OP(square, x * x, 2.0 * x, )

#undef BGIS_UNARY_OP

Var Tape::silu(Var a) {
    const Tensor& ta = node(a).val;
    Tensor out = Tensor::zeros_like(ta);
    for (std::size_t i = 0; i < ta.size(); ++i) {
        const double x = ta[i];
        out[i] = x / (1.0 + std::exp(-x));
    }
    const bool req = node(a).needs_grad;
    const int ia = a.id;
    Var outv = push(std::move(out), req, nullptr);
    const int io = outv.id;
    if (req) {
        node(outv).back = [this, ia, io] {
            const Tensor& g = nodes_[static_cast<std::size_t>(io)].grad;
            const Tensor& vx = val(ia);
            Tensor d = Tensor::zeros_like(vx);
            for (std::size_t i = 0; i < vx.size(); ++i) {
                const double x = vx[i];
                const double s = 1.0 / (1.0 + std::exp(-x));
                d[i] = g[i] * s * (1.0 + x * (1.0 - s));
            }
            accumulate(ia, d);
        };
    }
    return outv;
}

Var Tape::pow_const(Var a, double p) {
    const Tensor& ta = node(a).val;
    Tensor out = Tensor::zeros_like(ta);
    for (std::size_t i = 0; i < ta.size(); ++i) out[i] = std::pow(ta[i], p);
    const bool req = node(a).needs_grad;
    const int ia = a.id;
    Var outv = push(std::move(out), req, nullptr);
    const int io = outv.id;
    if (req) {
        node(outv).back = [this, ia, io, p] {
            const Tensor& g = nodes_[static_cast<std::size_t>(io)].grad;
            const Tensor& vx = val(ia);
            Tensor d = Tensor::zeros_like(vx);
            for (std::size_t i = 0; i < vx.size(); ++i)
                d[i] = g[i] * p * std::pow(vx[i], p - 1.0);
            accumulate(ia, d);
        };
    }
    return outv;
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& ta = node(a).val;
    const Tensor& tb = node(b).val;
    Tensor out = numerics::matmul(ta, tb);
    const bool req = node(a).needs_grad || node(b).needs_grad;
    const int ia = a.id, ib = b.id;
    Var outv = push(std::move(out), req, nullptr);
    const int io = outv.id;
    if (req) {
        node(outv).back = [this, ia, ib, io] {
            const Tensor& g = nodes_[static_cast<std::size_t>(io)].grad;
            const Tensor& va = val(ia);
            const Tensor& vb = val(ib);
            const std::size_t r = va.shape()[0], k = va.shape()[1], c = vb.shape()[1];
            if (nodes_[static_cast<std::size_t>(ia)].needs_grad) {
                // dA[i,k] += sum_j g[i,j] * B[k,j]
                Tensor da({r, k});
                const double* pg = g.data();
                const double* pb = vb.data();
                double* pd = da.data();
                for (std::size_t i = 0; i < r; ++i) {
                    for (std::size_t kk = 0; kk < k; ++kk) {
                        const double* gi = pg + i * c;
                        const double* bk = pb + kk * c;
                        double acc = 0.0;
                        for (std::size_t j = 0; j < c; ++j) acc += gi[j] * bk[j];
                        pd[i * k + kk] = acc;
                    }
                }
                accumulate(ia, da);
            }
            if (nodes_[static_cast<std::size_t>(ib)].needs_grad) {
                // dB[k,j] += sum_i A[i,k] * g[i,j]
                Tensor db({k, c});
                const double* pg = g.data();
                const double* pa = va.data();
                double* pd = db.data();
                for (std::size_t i = 0; i < r; ++i) {
                    const double* gi = pg + i * c;
                    for (std::size_t kk = 0; kk < k; ++kk) {
                        const double aik = pa[i * k + kk];
                        double* dk = pd + kk * c;
                        for (std::size_t j = 0; j < c; ++j) dk[j] += aik * gi[j];
                    }
                }
                accumulate(ib, db);
            }
        };
    }
    return outv;
}

Var Tape::sum_all(Var a) {
    const Tensor& ta = node(a).val;
    double s = 0.0;
    for (std::size_t i = 0; i < ta.size(); ++i) s += ta[i];
    const bool req = node(a).needs_grad;
    const int ia = a.id;
    Var outv = push(Tensor::scalar(s), req, nullptr);
    const int io = outv.id;
    if (req) {
        node(outv).back = [this, ia, io] {
            const double g = nodes_[static_cast<std::size_t>(io)].grad.item();
            Tensor& acc = grad_ref(ia);
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g;
        };
    }
    return outv;
}

Var Tape::mean_all(Var a) {
    const std::size_t n = node(a).val.size();
    if (n == 0) throw ShapeError("mean_all of empty tensor");
    return mul_const(sum_all(a), 1.0 / static_cast<double>(n));
}

Var Tape::row_sum(Var a) {
    const Tensor& ta = node(a).val;
    const std::size_t r = ta.rows(), c = ta.cols();
    Tensor out({r, 1});
    for (std::size_t i = 0; i < r; ++i) {
        double s = 0.0;
        const double* p = ta.data() + i * c;
        for (std::size_t j = 0; j < c; ++j) s += p[j];
        out[i] = s;
    }
    const bool req = node(a).needs_grad;
    const int ia = a.id;
    Var outv = push(std::move(out), req, nullptr);
    const int io = outv.id;
    if (req) {
        node(outv).back = [this, ia, io, r, c] {
            const Tensor& g = nodes_[static_cast<std::size_t>(io)].grad;
            Tensor& acc = grad_ref(ia);
            double* pa = acc.data();
            for (std::size_t i = 0; i < r; ++i) {
                const double gi = g[i];
                double* row = pa + i * c;
                for (std::size_t j = 0; j < c; ++j) row[j] += gi;
            }
        };
    }
    return outv;
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols of zero parts");
    const std::size_t r = node(parts[0]).val.rows();
    std::size_t c_total = 0;
    bool req = false;
    for (Var p : parts) {
        const Tensor& tp = node(p).val;
        if (tp.rows() != r) {
            throw ShapeError("concat_cols: row mismatch " + std::to_string(tp.rows()) + " vs " +
                             std::to_string(r));
        }
        c_total += tp.cols();
        req = req || node(p).needs_grad;
    }
    Tensor out({r, c_total});
    std::size_t off = 0;
    for (Var p : parts) {
        const Tensor& tp = node(p).val;
        const std::size_t c = tp.cols();
        for (std::size_t i = 0; i < r; ++i) {
            std::memcpy(out.data() + i * c_total + off, tp.data() + i * c, c * sizeof(double));
        }
        off += c;
    }
    std::vector<int> ids;
    ids.reserve(parts.size());
    for (Var p : parts) ids.push_back(p.id);
    Var outv = push(std::move(out), req, nullptr);
    const int io = outv.id;
    if (req) {
        node(outv).back = [this, ids, io, r, c_total] {
            const Tensor& g = nodes_[static_cast<std::size_t>(io)].grad;
            std::size_t off2 = 0;
            for (int id : ids) {
                Node& n = nodes_[static_cast<std::size_t>(id)];
                const std::size_t c = n.val.cols();
                if (n.needs_grad) {
                    Tensor& acc = grad_ref(id);
                    for (std::size_t i = 0; i < r; ++i) {
                        const double* gs = g.data() + i * c_total + off2;
                        double* as = acc.data() + i * c;
                        for (std::size_t j = 0; j < c; ++j) as[j] += gs[j];
                    }
                }
                off2 += c;
            }
        };
    }
    return outv;
}

Var Tape::slice_cols(Var a, std::size_t start, std::size_t len) {
    const Tensor& ta = node(a).val;
    const std::size_t r = ta.rows(), c = ta.cols();
    if (start + len > c) {
        throw ShapeError("slice_cols [" + std::to_string(start) + "," + std::to_string(start + len) +
                         ") out of " + std::to_string(c) + " cols");
    }
    Tensor out({r, len});
    for (std::size_t i = 0; i < r; ++i) {
        std::memcpy(out.data() + i * len, ta.data() + i * c + start, len * sizeof(double));
    }
    const bool req = node(a).needs_grad;
    const int ia = a.id;
    Var outv = push(std::move(out), req, nullptr);
    const int io = outv.id;
    if (req) {
        node(outv).back = [this, ia, io, start, len, r, c] {
            const Tensor& g = nodes_[static_cast<std::size_t>(io)].grad;
            Tensor& acc = grad_ref(ia);
            for (std::size_t i = 0; i < r; ++i) {
                const double* gs = g.data() + i * len;
                double* as = acc.data() + i * c + start;
                for (std::size_t j = 0; j < len; ++j) as[j] += gs[j];
            }
        };
    }
    return outv;
}

Var Tape::reshape(Var a, std::vector<std::size_t> shape) {
    const Tensor& ta = node(a).val;
    Tensor out(shape, std::vector<double>(ta.data(), ta.data() + ta.size()));
    const bool req = node(a).needs_grad;
    const int ia = a.id;
    Var outv = push(std::move(out), req, nullptr);
    const int io = outv.id;
    if (req) {
        node(outv).back = [this, ia, io] {
            const Tensor& g = nodes_[static_cast<std::size_t>(io)].grad;
            Tensor& acc = grad_ref(ia);
            double* pa = acc.data();
            const double* pg = g.data();
            for (std::size_t i = 0; i < acc.size(); ++i) pa[i] += pg[i];
        };
    }
    return outv;
}

Var Tape::tile_rows(Var a, std::size_t r) {
    const Tensor& ta = node(a).val;
    if (ta.rows() != 1) {
        throw ShapeError("tile_rows expects a single-row tensor, got " + ta.shape_str());
    }
    const std::size_t c = ta.cols();
    Tensor out({r, c});
    for (std::size_t i = 0; i < r; ++i) {
        std::memcpy(out.data() + i * c, ta.data(), c * sizeof(double));
    }
    const bool req = node(a).needs_grad;
    const int ia = a.id;
    Var outv = push(std::move(out), req, nullptr);
    const int io = outv.id;
    if (req) {
        node(outv).back = [this, ia, io] {
            accumulate_bcast(ia, nodes_[static_cast<std::size_t>(io)].grad);
        };
    }
    return outv;
}

namespace {

void apply_zero_cog(const double* in, double* out, std::size_t rows, std::size_t particles,
                    std::size_t dim) {
    const std::size_t c = particles * dim;
    for (std::size_t b = 0; b < rows; ++b) {
        const double* x = in + b * c;
        double* y = out + b * c;
        for (std::size_t k = 0; k < dim; ++k) {
            double m = 0.0;
            for (std::size_t p = 0; p < particles; ++p) m += x[p * dim + k];
            m /= static_cast<double>(particles);
            for (std::size_t p = 0; p < particles; ++p) y[p * dim + k] = x[p * dim + k] - m;
        }
    }
}

}  // namespace

Var Tape::project_zero_cog(Var a, std::size_t particles, std::size_t dim) {
    const Tensor& ta = node(a).val;
    const std::size_t r = ta.rows(), c = ta.cols();
    if (c != particles * dim) {
        throw ShapeError("project_zero_cog: " + std::to_string(c) + " cols != " +
                         std::to_string(particles) + " x " + std::to_string(dim));
    }
    Tensor out = Tensor::zeros_like(ta);
    apply_zero_cog(ta.data(), out.data(), r, particles, dim);
    const bool req = node(a).needs_grad;
    const int ia = a.id;
    Var outv = push(std::move(out), req, nullptr);
    const int io = outv.id;
    if (req) {
        node(outv).back = [this, ia, io, r, particles, dim] {
            const Tensor& g = nodes_[static_cast<std::size_t>(io)].grad;
            Tensor d = Tensor::zeros_like(g);
            apply_zero_cog(g.data(), d.data(), r, particles, dim);
            accumulate(ia, d);
        };
    }
    return outv;
}

Var Tape::stop_gradient(Var a) { return constant(node(a).val); }

std::pair<double, Tensor> grad(const std::function<Var(Tape&, Var)>& f, const Tensor& x) {
    Tape tape;
    Var vx = tape.leaf(x);
    Var out = f(tape, vx);
    const double fx = tape.value(out).item();
    tape.backward(out);
    return {fx, tape.grad(vx)};
}

GradCheckReport check_gradient(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double h,
                               double floor) {
    auto [fx, g] = grad(f, x);
    (void)fx;
    GradCheckReport rep;
    rep.coords = x.size();
    for (std::size_t i = 0; i < x.size(); ++i) {
        Tensor xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        Tape tp, tm;
        const double fp = tp.value(f(tp, tp.leaf(xp))).item();
        const double fm = tm.value(f(tm, tm.leaf(xm))).item();
        const double num = (fp - fm) / (2.0 * h);
        const double abs_err = std::fabs(num - g[i]);
        const double scale = std::max({std::fabs(num), std::fabs(g[i]), floor});
        rep.max_abs_err = std::max(rep.max_abs_err, abs_err);
        rep.max_rel_err = std::max(rep.max_rel_err, abs_err / scale);
    }
    return rep;
}

}  // namespace bgis::numerics
