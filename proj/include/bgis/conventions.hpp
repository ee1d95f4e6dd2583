#pragma once

#include <cmath>

// Diffusion conventions used throughout: variance-exploding forward process
// x_t = x_0 + t * eps with time identified with the noise scale (sigma = t),
// integrated on [T_MIN, T_MAX].  Drift f = 0, diffusion g(t) = sqrt(2 t), so
// the marginal of x_T is (very nearly) N(0, T_MAX^2 I) for data at unit scale.
//
// Networks never see raw (x, t): they are wrapped in the standard residual
// preconditioner below, and the probability-flow ODE / score conversions all
// go through the denoiser D(x, t) ~= E[x_0 | x_t = x].

namespace bgis::conventions {

inline constexpr double T_MIN = 0.002;  // epsilon: smallest time reached
inline constexpr double T_MAX = 80.0;   // prior time
inline constexpr double SIGMA_DATA = 0.5;

// Residual-preconditioning coefficients:
//   D(x, t) = c_skip(t) * x + c_out(t) * F(c_in(t) * x, c_noise(t))
inline double c_skip(double t, double sigma_data = SIGMA_DATA) {
    const double s2 = sigma_data * sigma_data;
    return s2 / (s2 + t * t);
}

inline double c_out(double t, double sigma_data = SIGMA_DATA) {
    const double s2 = sigma_data * sigma_data;
    return t * sigma_data / std::sqrt(s2 + t * t);
}

inline double c_in(double t, double sigma_data = SIGMA_DATA) {
    const double s2 = sigma_data * sigma_data;
    return 1.0 / std::sqrt(s2 + t * t);
}

inline double c_noise(double t) { return 0.25 * std::log(t); }

// Per-time weight for the denoising score-matching loss,
// lambda(t) = (t^2 + sigma_d^2) / (t * sigma_d)^2, which makes the weighted
// loss equal to a unit-scale loss on the raw network output F.
inline double dsm_weight(double t, double sigma_data = SIGMA_DATA) {
    const double s2 = sigma_data * sigma_data;
    return (t * t + s2) / (t * t * s2);
}

// Log-normal time distribution for score-matching training.
inline constexpr double TRAIN_LOGT_MEAN = -1.2;
inline constexpr double TRAIN_LOGT_STD = 1.2;

}  // namespace bgis::conventions
