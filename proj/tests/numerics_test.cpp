#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "bgis/numerics/adam.hpp"
#include "bgis/numerics/random.hpp"
#include "bgis/numerics/stats.hpp"
#include "bgis/numerics/tape.hpp"
#include "bgis/numerics/tensor.hpp"

using namespace bgis;
using namespace bgis::numerics;

TEST_CASE("tensor basics and shape errors") {
    Tensor a({2, 3});
    CHECK(a.size() == 6);
    CHECK(a.rows() == 2);
    CHECK(a.cols() == 3);
    a.at(1, 2) = 5.0;
    CHECK(a[5] == 5.0);

    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
    CHECK_THROWS_AS(a.item(), ShapeError);
    CHECK(Tensor::scalar(3.0).item() == 3.0);

    Tensor b({3, 2});
    CHECK_THROWS_AS(a + b, ShapeError);
}

TEST_CASE("matmul matches a hand-computed product") {
    Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b({3, 2}, {7, 8, 9, 10, 11, 12});
    Tensor c = matmul(a, b);
    CHECK(c.at(0, 0) == doctest::Approx(58.0));
    CHECK(c.at(0, 1) == doctest::Approx(64.0));
    CHECK(c.at(1, 0) == doctest::Approx(139.0));
    CHECK(c.at(1, 1) == doctest::Approx(154.0));

    Tensor bad({2, 2});
    CHECK_THROWS_AS(matmul(a, bad), ShapeError);
}

TEST_CASE("log_sum_exp is shift-invariant and overflow-safe") {
    CHECK(log_sum_exp({0.0, 0.0}) == doctest::Approx(std::log(2.0)));
    CHECK(log_sum_exp({42.0}) == doctest::Approx(42.0));
    CHECK(log_sum_exp({1000.0, 1000.0}) == doctest::Approx(1000.0 + std::log(2.0)));
    CHECK(log_sum_exp({-1.0, 2.0, 0.5}) ==
          doctest::Approx(std::log(std::exp(-1.0) + std::exp(2.0) + std::exp(0.5))));
    // Shift identity: LSE(v + c) == LSE(v) + c.
    const std::vector<double> v{0.3, -1.7, 2.2, 0.0};
    std::vector<double> shifted = v;
    for (double& x : shifted) x += 123.0;
    CHECK(log_sum_exp(shifted) == doctest::Approx(log_sum_exp(v) + 123.0));
    CHECK_THROWS_AS(log_sum_exp(std::vector<double>{}), DomainError);
}

TEST_CASE("gaussian_log_density oracle values") {
    // Standard normal at the origin in 1-D: -0.5 * ln(2*pi).
    CHECK(gaussian_log_density(Tensor::vec({0.0}), Tensor::vec({0.0}), 1.0) ==
          doctest::Approx(-0.91893853320467274178).epsilon(1e-12));
    // 2-D, var 4, displacement (1, 2): -ln(2*pi*4) - 5/8.
    const double expect = -std::log(2.0 * M_PI * 4.0) - 5.0 / 8.0;
    CHECK(gaussian_log_density(Tensor::vec({1.0, 2.0}), Tensor::vec({0.0, 0.0}), 4.0) ==
          doctest::Approx(expect).epsilon(1e-12));
    CHECK_THROWS_AS(gaussian_log_density(Tensor::vec({0.0}), Tensor::vec({0.0}), 0.0),
                    DomainError);

    // Row-wise version agrees with the flat one and broadcasts the mean.
    Tensor x({2, 2}, {1.0, 2.0, -0.5, 0.25});
    Tensor mu({2}, {0.5, -0.5});
    Tensor rows = gaussian_log_density_rows(x, mu, 2.5);
    for (std::size_t i = 0; i < 2; ++i) {
        Tensor xi = Tensor::vec(x.row(i));
        CHECK(rows[i] == doctest::Approx(gaussian_log_density(xi, mu, 2.5)).epsilon(1e-12));
    }

    // Subspace version just swaps the normaliser dimension.
    const double full = gaussian_log_density(Tensor::vec({1.0, -1.0, 0.0, 0.0}),
                                             Tensor::vec({0.0, 0.0, 0.0, 0.0}), 3.0);
    const double sub = gaussian_log_density_subspace(Tensor::vec({1.0, -1.0, 0.0, 0.0}),
                                                     Tensor::vec({0.0, 0.0, 0.0, 0.0}), 3.0, 2);
    CHECK(sub - full == doctest::Approx((4.0 - 2.0) * 0.5 * (std::log(2.0 * M_PI) + std::log(3.0)))
                            .epsilon(1e-12));
}

TEST_CASE("random streams are reproducible and independent") {
    RandomStream a(1234, 7);
    RandomStream b(1234, 7);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    RandomStream c(1234, 8);
    bool any_diff = false;
    RandomStream a2(1234, 7);
    for (int i = 0; i < 10; ++i) any_diff = any_diff || (a2.next_u64() != c.next_u64());
    CHECK(any_diff);

    // Same (seed, sample, purpose) triple gives the same substream.
    RandomStream s1 = RandomStream::for_sample(99, 123456, 2);
    RandomStream s2 = RandomStream::for_sample(99, 123456, 2);
    CHECK(s1.next_u64() == s2.next_u64());
    RandomStream s3 = RandomStream::for_sample(99, 123457, 2);
    CHECK(s1.next_u64() != s3.next_u64());
}

TEST_CASE("uniform and normal draws have sane moments") {
    RandomStream r(2024, 0);
    const int n = 200000;
    double usum = 0.0, umin = 1.0, umax = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        usum += u;
        umin = std::min(umin, u);
        umax = std::max(umax, u);
    }
    CHECK(usum / n == doctest::Approx(0.5).epsilon(0.01));
    CHECK(umin >= 0.0);
    CHECK(umax < 1.0);

    RunningMoments mom;
    RandomStream rn(2024, 1);
    for (int i = 0; i < n; ++i) mom.add(rn.normal());
    CHECK(mom.mean == doctest::Approx(0.0).epsilon(0.02));
    CHECK(std::abs(mom.mean) < 0.02);
    CHECK(mom.variance() == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("tape computes simple derivatives exactly") {
    // d/dx of sum(x^2) at x = (1, -2, 3) is (2, -4, 6).
    auto [fx, g] = grad(
        [](Tape& t, Var x) { return t.sum_all(t.square(x)); }, Tensor::vec({1.0, -2.0, 3.0}));
    CHECK(fx == doctest::Approx(14.0));
    CHECK(g[0] == doctest::Approx(2.0));
    CHECK(g[1] == doctest::Approx(-4.0));
    CHECK(g[2] == doctest::Approx(6.0));
}

TEST_CASE("tape broadcasting reduces gradients over stretched dims") {
    // f(b) = sum((X + b)^2) for X [2,3], b [3]: db = sum_rows 2(X+b).
    Tensor X({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b0 = Tensor::vec({0.5, -0.5, 1.0});
    Tape t;
    Var x = t.constant(X);
    Var b = t.leaf(b0);
    Var loss = t.sum_all(t.square(t.add(x, b)));
    t.backward(loss);
    const Tensor& gb = t.grad(b);
    for (int j = 0; j < 3; ++j) {
        double expect = 0.0;
        for (int i = 0; i < 2; ++i) expect += 2.0 * (X.at(i, j) + b0[j]);
        CHECK(gb[j] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("finite differences confirm gradients of composite programs") {
    // An MLP-ish composition with most op types in play.
    auto f = [](Tape& t, Var x) {
        Var a = t.silu(x);
        Var bvar = t.tanh(t.mul_const(x, 0.5));
        Var c = t.mul(a, bvar);
        Var d = t.add(c, t.sigmoid(x));
        Var e = t.div(d, t.add_const(t.square(x), 1.0));
        Var s = t.sin(x);
        Var co = t.cos(t.mul_const(x, 0.3));
        Var m = t.mul(s, co);
        return t.sum_all(t.add(e, m));
    };
    GradCheckReport rep = check_gradient(f, Tensor::vec({0.3, -1.2, 2.0, 0.01}), 1e-5);
    CHECK(rep.max_rel_err < 1e-6);

    // exp/log/sqrt/pow on a positive input.
    auto fpos = [](Tape& t, Var x) {
        Var lg = t.log(x);
        Var sq = t.sqrt(x);
        Var ex = t.exp(t.mul_const(x, -0.5));
        Var pw = t.pow_const(x, 1.7);
        return t.mean_all(t.add(t.mul(lg, sq), t.add(ex, pw)));
    };
    GradCheckReport rp = check_gradient(fpos, Tensor::vec({0.7, 1.3, 2.9}), 1e-6);
    CHECK(rp.max_rel_err < 1e-6);
}

TEST_CASE("matmul gradients match finite differences") {
    Tensor W0({3, 2}, {0.3, -0.1, 0.2, 0.4, -0.5, 0.6});
    auto f = [&](Tape& t, Var x) {
        Var w = t.constant(W0);
        Var y = t.matmul(x, w);       // [2,3] x [3,2]
        return t.sum_all(t.square(y));
    };
    Tensor X({2, 3}, {1.0, -2.0, 0.5, 0.3, 0.9, -1.1});
    GradCheckReport rep = check_gradient(f, X, 1e-5);
    CHECK(rep.max_rel_err < 1e-7);

    // Gradient w.r.t. the weight operand too.
    auto fw = [&](Tape& t, Var w) {
        Var x = t.constant(X);
        Var y = t.matmul(x, w);
        return t.mean_all(t.mul(y, y));
    };
    GradCheckReport rw = check_gradient(fw, W0, 1e-5);
    CHECK(rw.max_rel_err < 1e-7);
}

TEST_CASE("concat/slice/tile/reshape round-trip with correct adjoints") {
    auto f = [](Tape& t, Var x) {
        Var left = t.slice_cols(x, 0, 2);
        Var right = t.slice_cols(x, 2, 2);
        Var cat = t.concat_cols({t.square(left), right});
        Var tiled = t.tile_rows(t.constant(Tensor({1, 4}, {1.0, 2.0, 3.0, 4.0})),
                                t.value(x).rows());
        Var y = t.mul(cat, tiled);
        Var flat = t.reshape(y, {t.value(x).size()});
        return t.sum_all(flat);
    };
    Tensor X({2, 4}, {0.5, -1.0, 2.0, 0.1, 1.5, 0.2, -0.7, 0.9});
    GradCheckReport rep = check_gradient(f, X, 1e-5);
    CHECK(rep.max_rel_err < 1e-8);

    // tile_rows gradient sums over tiled copies.
    Tape t;
    Var a = t.leaf(Tensor({1, 2}, {3.0, 4.0}));
    Var tiled = t.tile_rows(a, 5);
    Var loss = t.sum_all(tiled);
    t.backward(loss);
    CHECK(t.grad(a)[0] == doctest::Approx(5.0));
    CHECK(t.grad(a)[1] == doctest::Approx(5.0));
}

TEST_CASE("zero-CoG projection is idempotent with symmetric adjoint") {
    Tensor X({2, 6}, {1, 2, 3, 4, 5, 6, -1, 0, 1, 2, 0.5, -0.5});
    Tape t;
    Var x = t.leaf(X);
    Var p = t.project_zero_cog(x, 3, 2);
    // Projected CoG is zero per dim per row.
    const Tensor& pv = t.value(p);
    for (std::size_t b = 0; b < 2; ++b) {
        for (std::size_t k = 0; k < 2; ++k) {
            double m = 0.0;
            for (std::size_t part = 0; part < 3; ++part) m += pv.at(b, part * 2 + k);
            CHECK(m == doctest::Approx(0.0).epsilon(1e-14));
        }
    }
    auto fsq = [](Tape& tt, Var xx) {
        Var pp = tt.project_zero_cog(xx, 3, 2);
        return tt.sum_all(tt.mul(pp, pp));
    };
    GradCheckReport rep = check_gradient(fsq, X, 1e-5);
    CHECK(rep.max_rel_err < 1e-8);
}

TEST_CASE("stop_gradient blocks the upstream path") {
    Tape t;
    Var x = t.leaf(Tensor::vec({2.0}));
    Var y = t.mul(t.stop_gradient(t.square(x)), x);  // value 8, d/dx treating x^2 const = 4
    t.backward(t.sum_all(y));
    CHECK(t.value(y)[0] == doctest::Approx(8.0));
    CHECK(t.grad(x)[0] == doctest::Approx(4.0));
}

TEST_CASE("tape guards its contracts") {
    Tape t;
    Var x = t.leaf(Tensor::vec({1.0, 2.0}));
    CHECK_THROWS_AS(t.backward(x), ShapeError);  // non-scalar root
    Var c = t.constant(Tensor::vec({1.0}));
    CHECK_THROWS_AS(t.backward(t.sum_all(c)), CapabilityError);  // no differentiable leaves
    CHECK_THROWS_AS(t.log(t.constant(Tensor::vec({-1.0}))), DomainError);
    CHECK_THROWS_AS(t.sqrt(t.constant(Tensor::vec({-1.0}))), DomainError);
    Var ok = t.sum_all(t.square(x));
    t.backward(ok);
    CHECK_THROWS_AS(t.grad(c), CapabilityError);
}

TEST_CASE("adam first step equals the closed form") {
    // At step 1, m_hat = g and v_hat = g^2, so dp = -lr * g / (|g| + eps).
    Tensor p = Tensor::vec({1.0, -2.0, 0.5});
    Tensor g = Tensor::vec({0.3, -0.1, 0.0});
    AdamState st;
    st.lr = 1e-2;
    st.init({&p});
    Tensor p0 = p;
    adam_step(st, {&p}, {&g});
    for (int i = 0; i < 3; ++i) {
        const double expect = p0[i] - st.lr * g[i] / (std::abs(g[i]) + st.eps);
        CHECK(p[i] == doctest::Approx(expect).epsilon(1e-12));
    }
    CHECK(st.step == 1);
}

TEST_CASE("gradient clipping rescales to the requested norm") {
    std::vector<Tensor> gs;
    gs.push_back(Tensor::vec({3.0, 4.0}));  // norm 5
    const double pre = clip_global_norm(gs, 1.0);
    CHECK(pre == doctest::Approx(5.0));
    CHECK(std::sqrt(squared_norm(gs[0])) == doctest::Approx(1.0));

    std::vector<Tensor> gs2;
    gs2.push_back(Tensor::vec({0.3, 0.4}));
    clip_global_norm(gs2, 1.0);
    CHECK(gs2[0][0] == doctest::Approx(0.3));  // already inside the ball
}
