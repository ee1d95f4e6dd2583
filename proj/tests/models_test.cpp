#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "bgis/conventions.hpp"
#include "bgis/models/analytic.hpp"
#include "bgis/models/checkpoint.hpp"
#include "bgis/models/denoiser.hpp"
#include "bgis/models/egnn.hpp"
#include "bgis/models/features.hpp"
#include "bgis/models/trajectory.hpp"
#include "bgis/targets/gmm.hpp"

using namespace bgis;
using namespace bgis::models;
using numerics::RandomStream;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, RandomStream& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    rng.fill_normal(t);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] *= scale;
    return t;
}

void randomize_params(Core& core, std::uint64_t seed, double scale = 0.3) {
    RandomStream rng(seed, 99);
    for (Tensor* p : core.params()) {
        for (std::size_t i = 0; i < p->size(); ++i) (*p)[i] = scale * rng.normal();
    }
}

}  // namespace

TEST_CASE("fresh preconditioned denoiser is exactly its skip path") {
    NetDenoiser den = make_mlp_denoiser(2, {16, 16}, 0.5, 7);
    RandomStream rng(1, 0);
    Tensor x = random_tensor({5, 2}, rng, 3.0);
    for (double t : {0.002, 0.5, 10.0, 80.0}) {
        Tensor d = den.denoise(x, t);
        const double cs = conventions::c_skip(t, 0.5);
        for (std::size_t i = 0; i < x.size(); ++i) {
            CHECK(d[i] == doctest::Approx(cs * x[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("denoiser identity D = x + t^2 * score holds exactly") {
    NetDenoiser den = make_mlp_denoiser(3, {16}, 1.0, 9);
    randomize_params(den.core(), 2);
    RandomStream rng(2, 0);
    Tensor x = random_tensor({4, 3}, rng, 2.0);
    const double t = 1.7;
    Tensor d = den.denoise(x, t);
    Tensor sc = den.score(x, t);
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(d[i] == doctest::Approx(x[i] + t * t * sc[i]).epsilon(1e-12));
    }
    CHECK_THROWS_AS(den.denoise(x, 0.0), DomainError);
}

TEST_CASE("analytic GMM denoiser score equals the target's noised score") {
    targets::GmmTarget gmm = targets::GmmTarget::random_layout(6, 2, 8.0, 11);
    AnalyticGmmDenoiser den(gmm);
    RandomStream rng(3, 0);
    Tensor x = random_tensor({8, 2}, rng, 5.0);
    const double t = 2.3;
    Tensor s1 = den.score(x, t);
    Tensor s2 = gmm.analytic_noised_score(x, t);
    CHECK(numerics::max_abs_diff(s1, s2) < 1e-12);

    ScoreFn fn = score_from_denoiser(den);
    Tensor s3 = fn(x, t);
    CHECK(numerics::max_abs_diff(s1, s3) == 0.0);
}

TEST_CASE("single-Gaussian closed-form denoiser gives score -(x-mu)/(v+t^2)") {
    Tensor mu({1, 2}, {1.0, -1.0});
    targets::GmmTarget g({1.0}, mu, 2.0);
    AnalyticGmmDenoiser den(g);
    Tensor x({1, 2}, {3.0, 0.5});
    const double t = 1.1;
    Tensor sc = den.score(x, t);
    const double var = 2.0 + t * t;
    CHECK(sc[0] == doctest::Approx(-(x[0] - 1.0) / var).epsilon(1e-12));
    CHECK(sc[1] == doctest::Approx(-(x[1] + 1.0) / var).epsilon(1e-12));
}

TEST_CASE("Gaussian flow traverse composes and hits the target spread") {
    GaussianFlowModel flow(Tensor::vec({2.0, -1.0}), 0.5);
    RandomStream rng(4, 0);
    Tensor x = random_tensor({6, 2}, rng, 10.0);
    // Identity at s = t.
    CHECK(numerics::max_abs_diff(flow.traverse(x, 3.0, 3.0), x) == 0.0);
    // Exact composition.
    Tensor one_hop = flow.traverse(x, 5.0, 0.1);
    Tensor two_hop = flow.traverse(flow.traverse(x, 5.0, 1.0), 1.0, 0.1);
    CHECK(numerics::max_abs_diff(one_hop, two_hop) < 1e-12);
    // Pushforward of the prior spread lands on the data spread.
    const double T = 80.0;
    Tensor z({2000, 2});
    RandomStream rz(5, 0);
    rz.fill_normal(z);
    for (std::size_t i = 0; i < z.rows(); ++i) {
        z.at(i, 0) = 2.0 + std::sqrt(0.5 + T * T) * z.at(i, 0);
        z.at(i, 1) = -1.0 + std::sqrt(0.5 + T * T) * z.at(i, 1);
    }
    Tensor pulled = flow.traverse(z, T, 0.002);
    double var = 0.0;
    for (std::size_t i = 0; i < pulled.rows(); ++i) {
        const double d0 = pulled.at(i, 0) - 2.0, d1 = pulled.at(i, 1) + 1.0;
        var += d0 * d0 + d1 * d1;
    }
    var /= static_cast<double>(2 * pulled.rows());
    CHECK(var == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("trajectory anchoring G(x,t,t) = x is structural") {
    BctmModel model = make_mlp_trajectory(2, {16, 16}, 0.7, 13);
    randomize_params(model.core(), 5);
    RandomStream rng(6, 0);
    Tensor x = random_tensor({5, 2}, rng, 4.0);
    for (double t : {0.002, 1.0, 80.0}) {
        CHECK(numerics::max_abs_diff(model.traverse(x, t, t), x) < 1e-14);
    }
}

TEST_CASE("tape and chunked inference agree for denoiser and trajectory") {
    BctmModel model = make_mlp_trajectory(2, {12}, 0.5, 17);
    randomize_params(model.core(), 8);
    RandomStream rng(7, 0);
    Tensor x = random_tensor({9, 2}, rng, 2.0);
    const double t = 4.0, s = 0.8;
    Tensor plain = model.traverse(x, t, s);

    Tape tape;
    std::vector<Var> p = model.core().bind(tape, false);
    Var res = model.traverse_on(tape, p, tape.constant(x), tape.constant(Tensor({1, 1}, {t})),
                                tape.constant(Tensor({1, 1}, {s})));
    CHECK(numerics::max_abs_diff(plain, tape.value(res)) == 0.0);
}

TEST_CASE("gradients flow through input, weights, and both times") {
    // Tiny trajectory core so finite differences stay cheap.
    BctmModel model = make_mlp_trajectory(2, {6}, 0.9, 23);
    randomize_params(model.core(), 31, 0.4);
    RandomStream rng(8, 0);
    Tensor x0 = random_tensor({3, 2}, rng, 1.5);

    auto loss_wrt_x = [&](Tape& tape, Var x) {
        std::vector<Var> p = model.core().bind(tape, false);
        Var t = tape.constant(Tensor({1, 1}, {2.0}));
        Var s = tape.constant(Tensor({1, 1}, {0.5}));
        return tape.sum_all(tape.square(model.traverse_on(tape, p, x, t, s)));
    };
    CHECK(numerics::check_gradient(loss_wrt_x, x0, 1e-6).max_rel_err < 1e-5);

    auto loss_wrt_t = [&](Tape& tape, Var t) {
        std::vector<Var> p = model.core().bind(tape, false);
        Var x = tape.constant(x0);
        Var s = tape.constant(Tensor({1, 1}, {0.5}));
        return tape.sum_all(tape.square(model.traverse_on(tape, p, x, t, s)));
    };
    CHECK(numerics::check_gradient(loss_wrt_t, Tensor({1, 1}, {2.0}), 1e-6).max_rel_err < 1e-5);

    auto loss_wrt_s = [&](Tape& tape, Var s) {
        std::vector<Var> p = model.core().bind(tape, false);
        Var x = tape.constant(x0);
        Var t = tape.constant(Tensor({1, 1}, {2.0}));
        return tape.sum_all(tape.square(model.traverse_on(tape, p, x, t, s)));
    };
    CHECK(numerics::check_gradient(loss_wrt_s, Tensor({1, 1}, {0.5}), 1e-6).max_rel_err < 1e-5);

    // One weight tensor, through the whole preconditioned forward.
    Tensor w0 = *model.core().params()[0];
    auto loss_wrt_w = [&](Tape& tape, Var w) {
        std::vector<Var> p;
        std::vector<Tensor*> raw = model.core().params();
        for (std::size_t i = 0; i < raw.size(); ++i) {
            p.push_back(i == 0 ? w : tape.constant(*raw[i]));
        }
        Var x = tape.constant(x0);
        Var t = tape.constant(Tensor({1, 1}, {2.0}));
        Var s = tape.constant(Tensor({1, 1}, {0.5}));
        return tape.sum_all(tape.square(model.traverse_on(tape, p, x, t, s)));
    };
    CHECK(numerics::check_gradient(loss_wrt_w, w0, 1e-6).max_rel_err < 1e-5);
}

TEST_CASE("EGNN denoiser is equivariant and respects the zero-CoG subspace") {
    Geometry geo{4, 2, true};
    NetDenoiser den = make_egnn_denoiser(geo, 24, 2, 1.3, 41);
    randomize_params(den.core(), 19, 0.2);

    RandomStream rng(9, 0);
    Tensor x_raw = random_tensor({3, 8}, rng, 2.0);
    Tensor x = project_zero_cog(x_raw, 4, 2);
    const double t = 1.2;
    Tensor d = den.denoise(x, t);

    // Output stays in the zero-CoG subspace.
    for (std::size_t i = 0; i < d.rows(); ++i) {
        for (int k = 0; k < 2; ++k) {
            double m = 0.0;
            for (int p = 0; p < 4; ++p) m += d.at(i, p * 2 + k);
            CHECK(std::fabs(m) < 1e-12);
        }
    }

    // Rotation equivariance: D(R x, t) = R D(x, t).
    const double th = 0.77;
    auto rotate = [&](const Tensor& in) {
        Tensor out = in;
        for (std::size_t i = 0; i < in.rows(); ++i) {
            for (int p = 0; p < 4; ++p) {
                const double a = in.at(i, p * 2), b = in.at(i, p * 2 + 1);
                out.at(i, p * 2) = std::cos(th) * a - std::sin(th) * b;
                out.at(i, p * 2 + 1) = std::sin(th) * a + std::cos(th) * b;
            }
        }
        return out;
    };
    Tensor d_rot = den.denoise(rotate(x), t);
    CHECK(numerics::max_abs_diff(d_rot, rotate(d)) < 1e-10);

    // Permutation equivariance: swapping particles permutes the output.
    auto swap01 = [](const Tensor& in) {
        Tensor out = in;
        for (std::size_t i = 0; i < in.rows(); ++i) {
            for (int k = 0; k < 2; ++k) {
                std::swap(out.at(i, 0 * 2 + k), out.at(i, 1 * 2 + k));
            }
        }
        return out;
    };
    Tensor d_perm = den.denoise(swap01(x), t);
    CHECK(numerics::max_abs_diff(d_perm, swap01(d)) < 1e-10);

    // The raw displacement is translation-invariant: D(x + tau) - D(x) is
    // exactly c_skip * tau on the ambient space.
    Tensor shifted = x;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (int p = 0; p < 4; ++p) {
            shifted.at(i, p * 2) += 2.5;
            shifted.at(i, p * 2 + 1) -= 1.0;
        }
    }
    Tensor d_shift = den.denoise(shifted, t);
    const double cs = conventions::c_skip(t, 1.3);
    for (std::size_t i = 0; i < d.rows(); ++i) {
        for (int p = 0; p < 4; ++p) {
            CHECK(d_shift.at(i, p * 2) - d.at(i, p * 2) == doctest::Approx(cs * 2.5).epsilon(1e-9));
            CHECK(d_shift.at(i, p * 2 + 1) - d.at(i, p * 2 + 1) ==
                  doctest::Approx(-cs * 1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    namespace fs = std::filesystem;
    const std::string dir = (fs::temp_directory_path() / "bgis_ckpt_test").string();
    fs::create_directories(dir);

    BctmModel model = make_mlp_trajectory(2, {10, 10}, 0.61, 29);
    randomize_params(model.core(), 77);
    const std::string path = dir + "/traj.json";
    save_trajectory(model, path, {{"note", "round-trip"}});

    BctmModel loaded = load_trajectory(path);
    CHECK(loaded.sigma_data() == model.sigma_data());
    RandomStream rng(10, 0);
    Tensor x = random_tensor({4, 2}, rng, 3.0);
    CHECK(numerics::max_abs_diff(loaded.traverse(x, 5.0, 0.4), model.traverse(x, 5.0, 0.4)) == 0.0);
    CHECK(checkpoint_meta(path).at("note") == "round-trip");

    // Kind mismatch is a config error.
    CHECK_THROWS_AS(load_denoiser(path), ConfigError);

    NetDenoiser den = make_egnn_denoiser(Geometry{4, 2, true}, 16, 2, 0.8, 31);
    const std::string dpath = dir + "/den.json";
    save_denoiser(den, dpath);
    NetDenoiser dl = load_denoiser(dpath);
    Tensor xz = project_zero_cog(random_tensor({2, 8}, rng, 1.0), 4, 2);
    CHECK(numerics::max_abs_diff(dl.denoise(xz, 2.0), den.denoise(xz, 2.0)) == 0.0);
    CHECK(dl.geometry().zero_cog);

    fs::remove_all(dir);
}

TEST_CASE("sigma_data estimation recovers a known scale") {
    RandomStream rng(11, 0);
    Tensor xs({20000, 3});
    rng.fill_normal(xs);
    for (std::size_t i = 0; i < xs.size(); ++i) xs[i] *= 2.0;
    CHECK(estimate_sigma_data(xs) == doctest::Approx(2.0).epsilon(0.02));
}
