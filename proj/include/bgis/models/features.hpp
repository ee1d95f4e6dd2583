#pragma once

#include "bgis/numerics/tape.hpp"

namespace bgis::models {

using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

// Networks see time through log-scale Fourier features:
//   [ 0.25*ln t,  sin(w*ln t), cos(w*ln t)  for w in {1, 2, 4, 8} ]
// The leading term matches the standard noise conditioning; the harmonics
// resolve the six-decade time range.
inline constexpr std::size_t TIME_FEATURE_DIM = 9;

// t is [B,1] or [1,1] with strictly positive entries; returns [rows(t), 9].
Var time_features_on(Tape& tape, Var t);

// Tile v (single row) to `rows` rows when needed so concat_cols can mix
// per-batch tensors with shared scalars.
Var rows_like(Tape& tape, Var v, std::size_t rows);

}  // namespace bgis::models
