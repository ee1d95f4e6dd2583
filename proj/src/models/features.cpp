#include "bgis/models/features.hpp"

namespace bgis::models {

Var time_features_on(Tape& tape, Var t) {
    const Tensor& tv = tape.value(t);
    if (tv.cols() != 1) {
        throw ShapeError("time_features_on expects a column, got " + tv.shape_str());
    }
    Var logt = tape.log(t);
    std::vector<Var> parts;
    parts.reserve(TIME_FEATURE_DIM);
    parts.push_back(tape.mul_const(logt, 0.25));
    for (double w : {1.0, 2.0, 4.0, 8.0}) {
        Var wt = tape.mul_const(logt, w);
        parts.push_back(tape.sin(wt));
        parts.push_back(tape.cos(wt));
    }
    return tape.concat_cols(parts);
}

Var rows_like(Tape& tape, Var v, std::size_t rows) {
    const std::size_t have = tape.value(v).rows();
    if (have == rows) return v;
    if (have == 1) return tape.tile_rows(v, rows);
    throw ShapeError("rows_like: cannot adapt " + std::to_string(have) + " rows to " +
                     std::to_string(rows));
}

}  // namespace bgis::models
