#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <utility>
#include <vector>

#include "bgis/conventions.hpp"
#include "bgis/models/analytic.hpp"
#include "bgis/targets/gmm.hpp"
#include "bgis/training/train.hpp"

using namespace bgis;
using namespace bgis::training;
using models::AnalyticGmmDenoiser;
using models::GaussianFlowModel;
using models::score_from_denoiser;
using numerics::RandomStream;
using numerics::Tensor;
using targets::GmmTarget;

namespace {

// Analytic score of N(mean, v I) noised to level t.
ScoreFn gaussian_score(const Tensor& mean, double v) {
    return [mean, v](const Tensor& x, double t) {
        Tensor s(x.shape());
        const double inv = 1.0 / (v + t * t);
        for (std::size_t r = 0; r < x.rows(); ++r) {
            for (std::size_t c = 0; c < x.cols(); ++c) {
                s.at(r, c) = -(x.at(r, c) - mean[c]) * inv;
            }
        }
        return s;
    };
}

GmmTarget single_gaussian(std::vector<double> mean, double v) {
    const std::size_t d = mean.size();
    return GmmTarget({1.0}, Tensor({1, d}, std::move(mean)), v);
}

double mean_squared_gap(const Tensor& a, const Tensor& b) {
    double sq = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sq += d * d;
    }
    return sq / static_cast<double>(a.size());
}

}  // namespace

TEST_CASE("heun_step: identity at equal times, input validation") {
    const Tensor mean = Tensor::vec({0.0, 0.0});
    const ScoreFn score = gaussian_score(mean, 1.0);
    const Tensor x({2, 2}, {0.4, -1.0, 2.0, 0.1});
    const Tensor same = heun_step(score, x, 1.5, 1.5);
    CHECK(numerics::max_abs_diff(same, x) == 0.0);
    CHECK_THROWS_AS(heun_step(score, x, 0.0, 1.0), DomainError);
    CHECK_THROWS_AS(heun_step(score, x, 1.0, -0.5), DomainError);
    CHECK_THROWS_AS(solve_pf_ode(score, x, 1.0, 0.5, 0.0), DomainError);
}

TEST_CASE("heun integration is second order against the exact Gaussian flow") {
    // [DERIVED] For N(mean, v I) the probability-flow ODE has the closed-form
    // solution x(s) = mean + (x(t) - mean) sqrt((v + s^2)/(v + t^2)); halving
    // the step size of a second-order scheme shrinks the error ~4x.
    const Tensor mean = Tensor::vec({1.0, -2.0, 0.5});
    const double v = 0.8;
    const ScoreFn score = gaussian_score(mean, v);
    GaussianFlowModel flow(mean, v);

    RandomStream rng(7, 1);
    Tensor x({64, 3});
    rng.fill_normal(x);
    const double t = 5.0, s = 0.5;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t c = 0; c < 3; ++c) {
            x.at(r, c) = mean[c] + x.at(r, c) * std::sqrt(v + t * t);
        }
    }
    const Tensor exact = flow.traverse(x, t, s);

    const double span = std::log(t / s);
    const Tensor coarse = solve_pf_ode(score, x, t, s, span / 8.0);
    const Tensor fine = solve_pf_ode(score, x, t, s, span / 16.0);
    const double err_coarse = numerics::max_abs_diff(coarse, exact);
    const double err_fine = numerics::max_abs_diff(fine, exact);
    CHECK(err_coarse > 0.0);
    const double ratio = err_coarse / err_fine;
    CHECK(ratio > 3.0);
    CHECK(ratio < 5.2);
    // And with a tight cap the global error drops to the h^2 floor.
    const Tensor tight = solve_pf_ode(score, x, t, s, 0.005);
    CHECK(numerics::max_abs_diff(tight, exact) < 5e-6 * numerics::max_abs(exact));
}

TEST_CASE("pushforward of prior samples through the analytic score recovers mixture weights") {
    // [DERIVED] Integrating the probability-flow ODE from N(0, T^2 I) down to
    // epsilon with the exact mixture score must reproduce the component
    // weights; each empirical frequency is held to 4 binomial sigmas.
    const std::vector<double> w = {0.4, 0.3, 0.2, 0.1};
    const Tensor means({4, 2}, {6.0, 6.0, -6.0, 6.0, -6.0, -6.0, 6.0, -6.0});
    GmmTarget gmm(w, means, 0.3);
    AnalyticGmmDenoiser oracle(gmm);
    const ScoreFn score = score_from_denoiser(oracle);

    const std::size_t n = 4000;
    RandomStream rng(11, 2);
    Tensor x({n, 2});
    rng.fill_normal(x);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] *= conventions::T_MAX;

    const double span = std::log(conventions::T_MAX / conventions::T_MIN);
    const Tensor pushed = solve_pf_ode(score, x, conventions::T_MAX, conventions::T_MIN, span / 80.0);
    const std::vector<std::size_t> comp = gmm.nearest_component(pushed);
    std::vector<double> count(4, 0.0);
    for (std::size_t idx : comp) count[idx] += 1.0;
    for (std::size_t k = 0; k < 4; ++k) {
        const double phat = count[k] / static_cast<double>(n);
        const double sigma = std::sqrt(w[k] * (1.0 - w[k]) / static_cast<double>(n));
        CHECK(std::fabs(phat - w[k]) < 4.0 * sigma);
    }
}

TEST_CASE("train_dsm: validation and NaN detection") {
    NetDenoiser model = models::make_mlp_denoiser(2, {16}, 0.7, 1);
    DsmConfig cfg;
    cfg.iters = 4;
    cfg.batch = 8;
    cfg.eval_batch = 8;

    RandomStream rng(3, 3);
    Tensor ok({32, 2});
    rng.fill_normal(ok);
    Tensor bad = ok;
    bad.at(5, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(train_dsm(model, bad, cfg), TrainingError);

    Tensor wrong_dim({16, 3});
    rng.fill_normal(wrong_dim);
    CHECK_THROWS_AS(train_dsm(model, wrong_dim, cfg), ShapeError);

    // Zero iterations is a no-op: parameters untouched, empty report.
    std::vector<Tensor> before;
    for (const Tensor* p : std::as_const(model.core()).params()) before.push_back(*p);
    DsmConfig zero_iters = cfg;
    zero_iters.iters = 0;
    const TrainReport rep = train_dsm(model, ok, zero_iters);
    CHECK(rep.history.empty());
    CHECK(!std::isfinite(rep.best_eval));
    const auto after = std::as_const(model.core()).params();
    for (std::size_t i = 0; i < after.size(); ++i) {
        CHECK(numerics::max_abs_diff(before[i], *after[i]) == 0.0);
    }
}

TEST_CASE("distill_bctm: validation and zero-iteration no-op") {
    const std::vector<double> mean = {0.0, 0.0};
    GmmTarget gauss = single_gaussian(mean, 1.0);
    AnalyticGmmDenoiser teacher(gauss);
    BctmModel student = models::make_mlp_trajectory(2, {8}, 0.7, 17);

    RandomStream rng(17, 11);
    Tensor ok({32, 2});
    rng.fill_normal(ok);
    Tensor wrong_dim({16, 4});
    rng.fill_normal(wrong_dim);

    DistillConfig cfg;
    cfg.iters = 2;
    cfg.batch = 8;
    cfg.eval_batch = 12;
    CHECK_THROWS_AS(distill_bctm(student, score_from_denoiser(teacher), wrong_dim, cfg),
                    ShapeError);
    DistillConfig all_zero = cfg;
    all_zero.lambda_ctm = all_zero.lambda_dsm = all_zero.lambda_mid = 0.0;
    CHECK_THROWS_AS(distill_bctm(student, score_from_denoiser(teacher), ok, all_zero),
                    ConfigError);

    std::vector<Tensor> before;
    for (const Tensor* p : std::as_const(student.core()).params()) before.push_back(*p);
    DistillConfig zero_iters = cfg;
    zero_iters.iters = 0;
    const TrainReport rep = distill_bctm(student, score_from_denoiser(teacher), ok, zero_iters);
    CHECK(rep.history.empty());
    const auto after = std::as_const(student.core()).params();
    for (std::size_t i = 0; i < after.size(); ++i) {
        CHECK(numerics::max_abs_diff(before[i], *after[i]) == 0.0);
    }
}

TEST_CASE("ema_update: one step equals the stated recursion exactly") {
    Tensor e1({2, 2}, {1.0, -2.0, 0.5, 4.0});
    Tensor e2({1, 3}, {0.25, 0.125, -8.0});
    const Tensor o1({2, 2}, {0.5, 1.0, -1.5, 2.0});
    const Tensor o2({1, 3}, {1.0, -0.5, 0.75});
    const double mu = 0.999;
    Tensor want1 = e1, want2 = e2;
    for (std::size_t k = 0; k < want1.size(); ++k) want1[k] = mu * want1[k] + (1.0 - mu) * o1[k];
    for (std::size_t k = 0; k < want2.size(); ++k) want2[k] = mu * want2[k] + (1.0 - mu) * o2[k];
    models::ema_update({&e1, &e2}, {&o1, &o2}, mu);
    CHECK(numerics::max_abs_diff(e1, want1) == 0.0);
    CHECK(numerics::max_abs_diff(e2, want2) == 0.0);
    CHECK_THROWS_AS(models::ema_update({&e1}, {&o1, &o2}, mu), ContractError);
}

TEST_CASE("train_dsm learns the closed-form posterior mean of a Gaussian") {
    // [DERIVED] For x0 ~ N(mean, v I), E[x0 | x_t] = mean + (x_t - mean) v/(v + t^2).
    const std::vector<double> mean = {1.0, -0.5};
    const double v = 0.49;
    GmmTarget gauss = single_gaussian(mean, v);

    RandomStream drng(42, 4);
    const Tensor data = gauss.sample_exact(4096, drng);
    const double sd = models::estimate_sigma_data(data);
    NetDenoiser model = models::make_mlp_denoiser(2, {64, 64}, sd, 42);

    DsmConfig cfg;
    cfg.iters = 1500;
    cfg.batch = 128;
    cfg.eval_batch = 256;
    cfg.eval_every = 100;
    cfg.seed = 42;
    const TrainReport rep = train_dsm(model, data, cfg);
    CHECK(rep.history.size() == cfg.iters);
    CHECK(rep.best_iter >= 1);
    CHECK(std::isfinite(rep.best_eval));

    RandomStream erng(43, 5);
    for (double t : {0.1, 0.5, 2.0}) {
        Tensor x0 = gauss.sample_exact(512, erng);
        Tensor xt = x0;
        for (std::size_t r = 0; r < xt.rows(); ++r) {
            for (std::size_t c = 0; c < 2; ++c) xt.at(r, c) += t * erng.normal();
        }
        const Tensor got = model.denoise(xt, t);
        const Tensor want = gauss.analytic_denoise(xt, t);
        CHECK(mean_squared_gap(got, want) < 1e-2);
    }
}

TEST_CASE("train_dsm score field aligns with the analytic mixture score at t=1") {
    GmmTarget gmm = GmmTarget::random_layout(4, 2, 6.0, 9);
    RandomStream drng(9, 6);
    const Tensor data = gmm.sample_exact(8192, drng);
    const double sd = models::estimate_sigma_data(data);
    NetDenoiser model = models::make_mlp_denoiser(2, {192, 192}, sd, 9);

    DsmConfig cfg;
    cfg.iters = 9000;
    cfg.batch = 256;
    cfg.eval_batch = 512;
    cfg.eval_every = 500;
    cfg.seed = 9;
    train_dsm(model, data, cfg);

    // Evaluated on clean target draws: the level-1 score field is queried at
    // the sample locations themselves.
    RandomStream erng(10, 7);
    const Tensor x0 = gmm.sample_exact(512, erng);
    const double t = 1.0;

    const Tensor got = model.score(x0, t);
    const Tensor want = gmm.analytic_noised_score(x0, t);
    double cos_sum = 0.0;
    std::size_t used = 0;
    for (std::size_t r = 0; r < x0.rows(); ++r) {
        double dot = 0.0, ng = 0.0, nw = 0.0;
        for (std::size_t c = 0; c < 2; ++c) {
            dot += got.at(r, c) * want.at(r, c);
            ng += got.at(r, c) * got.at(r, c);
            nw += want.at(r, c) * want.at(r, c);
        }
        if (nw < 1e-12) continue;  // near-stationary points carry no direction
        cos_sum += dot / std::sqrt(ng * nw);
        ++used;
    }
    CHECK(used > 400);
    CHECK(cos_sum / static_cast<double>(used) > 0.99);
}

TEST_CASE("consistency target construction is a fixed point of the exact Gaussian flow") {
    // [DERIVED] With the exact flow map supplying both the teacher hops and
    // the student hops, the distillation residual vanishes: the solver hop
    // t->u followed by flow hops u->s->eps equals flow hops t->s->eps.
    const Tensor mean = Tensor::vec({0.3, -1.1});
    const double v = 0.6;
    GaussianFlowModel flow(mean, v);
    const ScoreFn score = gaussian_score(mean, v);
    const double eps = conventions::T_MIN;

    RandomStream rng(21, 8);
    const struct {
        double t, s;
    } hops[] = {{8.0, 0.05}, {0.4, 3.0}, {60.0, 1.0}};
    for (const auto& hop : hops) {
        Tensor x({128, 2});
        rng.fill_normal(x);
        for (std::size_t r = 0; r < x.rows(); ++r) {
            for (std::size_t c = 0; c < 2; ++c) {
                x.at(r, c) = mean[c] + x.at(r, c) * std::sqrt(v + hop.t * hop.t);
            }
        }
        const double u = hop.t + (hop.s - hop.t) * 0.37;
        const Tensor xu = solve_pf_ode(score, x, hop.t, u, 0.05);
        const Tensor target = flow.traverse(flow.traverse(xu, u, hop.s), hop.s, eps);
        const Tensor est = flow.traverse(flow.traverse(x, hop.t, hop.s), hop.s, eps);
        CHECK(mean_squared_gap(target, est) < 1e-6);
    }
}

TEST_CASE("distill_bctm learns the prior-to-data map of a Gaussian") {
    const std::vector<double> mean = {1.2, -0.8};
    const double v = 0.25;
    GmmTarget gauss = single_gaussian(mean, v);
    RandomStream drng(5, 9);
    const Tensor data = gauss.sample_exact(4096, drng);
    const double sd = models::estimate_sigma_data(data);

    AnalyticGmmDenoiser teacher(gauss);
    BctmModel student = models::make_mlp_trajectory(2, {64, 64}, sd, 5);

    DistillConfig cfg;
    cfg.iters = 4000;
    cfg.batch = 128;
    cfg.eval_batch = 192;
    cfg.eval_every = 100;
    cfg.lr = 1.5e-3;
    cfg.seed = 5;
    const TrainReport rep = distill_bctm(student, score_from_denoiser(teacher), data, cfg);
    CHECK(rep.history.size() == cfg.iters);
    CHECK(rep.best_iter >= 1);

    // Early-vs-best eval must improve substantially.
    double first_eval = std::numeric_limits<double>::quiet_NaN();
    for (const TrainStep& st : rep.history) {
        if (std::isfinite(st.eval_loss)) {
            first_eval = st.eval_loss;
            break;
        }
    }
    CHECK(std::isfinite(first_eval));
    CHECK(rep.best_eval < 0.5 * first_eval);

    // One traverse from the prior time lands near the data distribution:
    // for this target the map is nearly constant at the mean.
    RandomStream prng(6, 10);
    Tensor xT({512, 2});
    prng.fill_normal(xT);
    for (std::size_t i = 0; i < xT.size(); ++i) xT[i] *= conventions::T_MAX;
    const Tensor got = student.traverse(xT, conventions::T_MAX, conventions::T_MIN);
    double m0 = 0.0, m1 = 0.0;
    for (std::size_t r = 0; r < got.rows(); ++r) {
        m0 += got.at(r, 0);
        m1 += got.at(r, 1);
    }
    m0 /= 512.0;
    m1 /= 512.0;
    CHECK(std::fabs(m0 - mean[0]) < 0.2);
    CHECK(std::fabs(m1 - mean[1]) < 0.2);
}

TEST_CASE("distill_bctm with zero consistency weight reduces to denoising on the anchor") {
    // With lambda_ctm = lambda_mid = 0 the objective is plain unweighted
    // denoising, so g(x, t, t) must approach the closed-form posterior mean.
    const std::vector<double> mean = {1.0, -0.5};
    const double v = 0.49;
    GmmTarget gauss = single_gaussian(mean, v);
    RandomStream drng(23, 12);
    const Tensor data = gauss.sample_exact(4096, drng);
    const double sd = models::estimate_sigma_data(data);

    AnalyticGmmDenoiser teacher(gauss);
    BctmModel student = models::make_mlp_trajectory(2, {64, 64}, sd, 23);

    DistillConfig cfg;
    cfg.iters = 1500;
    cfg.batch = 128;
    cfg.eval_batch = 96;
    cfg.eval_every = cfg.iters;  // single final snapshot; eval hops are not trained here
    cfg.lr = 1.5e-3;
    cfg.lambda_ctm = 0.0;
    cfg.lambda_mid = 0.0;
    cfg.seed = 23;
    const TrainReport rep = distill_bctm(student, score_from_denoiser(teacher), data, cfg);
    CHECK(rep.history.size() == cfg.iters);

    RandomStream erng(24, 13);
    for (double t : {0.1, 0.5, 2.0}) {
        Tensor x0 = gauss.sample_exact(512, erng);
        Tensor xt = x0;
        for (std::size_t i = 0; i < xt.size(); ++i) xt[i] += t * erng.normal();
        const Tensor got = student.anchor_denoise(xt, t);
        const Tensor want = gauss.analytic_denoise(xt, t);
        CHECK(mean_squared_gap(got, want) < 1e-2);
    }
}

TEST_CASE("converged GMM distillation: round-trip contraction and one-hop mode weights") {
    const std::vector<double> w = {0.4, 0.3, 0.2, 0.1};
    const Tensor means({4, 2}, {6.0, 6.0, -6.0, 6.0, -6.0, -6.0, 6.0, -6.0});
    GmmTarget gmm(w, means, 0.3);
    RandomStream drng(31, 14);
    const Tensor data = gmm.sample_exact(8192, drng);
    const double sd = models::estimate_sigma_data(data);

    AnalyticGmmDenoiser teacher(gmm);
    BctmModel student = models::make_mlp_trajectory(2, {96, 96}, sd, 31);
    const BctmModel untrained = models::make_mlp_trajectory(2, {96, 96}, sd, 31);

    DistillConfig cfg;
    cfg.iters = 5000;
    cfg.batch = 192;
    cfg.eval_batch = 384;
    cfg.eval_every = 250;
    cfg.lr = 1e-3;
    cfg.grad_clip = 50.0;  // the data scale here is ~6, raw grads start larger
    cfg.seed = 31;
    distill_bctm(student, score_from_denoiser(teacher), data, cfg);

    // Round-trip t -> s -> t: training must contract the error well below
    // the initialization and leave it small against the data scale.
    RandomStream rrng(32, 15);
    const double t = 0.5, s = 5.0;
    Tensor x = gmm.sample_exact(256, rrng);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += t * rrng.normal();
    auto round_trip_rmse = [&](const BctmModel& m) {
        const Tensor back = m.traverse(m.traverse(x, t, s), s, t);
        return std::sqrt(mean_squared_gap(back, x));
    };
    const double before = round_trip_rmse(untrained);
    const double after = round_trip_rmse(student);
    CHECK(after * 3.0 < before);
    CHECK(after < 0.12 * sd);

    // One hop from the prior time reproduces the mixture weights within 5%
    // total variation.
    RandomStream prng(33, 16);
    const std::size_t n = 4000;
    Tensor xT({n, 2});
    prng.fill_normal(xT);
    for (std::size_t i = 0; i < xT.size(); ++i) xT[i] *= conventions::T_MAX;
    const Tensor pushed = student.traverse(xT, conventions::T_MAX, conventions::T_MIN);
    const std::vector<std::size_t> comp = gmm.nearest_component(pushed);
    std::vector<double> count(4, 0.0);
    for (std::size_t idx : comp) count[idx] += 1.0;
    double tv = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
        tv += 0.5 * std::fabs(count[k] / static_cast<double>(n) - w[k]);
    }
    CHECK(tv < 0.05);
}

TEST_CASE("TrainReport::write_csv emits one row per step with optional eval column") {
    TrainReport rep;
    rep.history = {{0, 1.5, 2.0, std::numeric_limits<double>::quiet_NaN()},
                   {1, 1.25, 0.5, 0.75}};
    const std::string path =
        (std::filesystem::temp_directory_path() / "bgis_train_report.csv").string();
    rep.write_csv(path);
    std::ifstream in(path);
    REQUIRE(in.good());
    std::string line;
    std::getline(in, line);
    CHECK(line == "iter,loss,grad_norm,eval_loss");
    std::getline(in, line);
    CHECK(line == "0,1.5,2,");
    std::getline(in, line);
    CHECK(line == "1,1.25,0.5,0.75");
    std::remove(path.c_str());
}
