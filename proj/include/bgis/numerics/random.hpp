#pragma once

#include <cstdint>

#include "bgis/numerics/tensor.hpp"

namespace bgis::numerics {

// Counter-based RNG (Philox 4x32-10).  A stream is addressed by
// (seed, stream_id) and is reproducible regardless of how other streams
// interleave, which is what lets per-sample work be resumed or sharded
// without changing the draws.
class RandomStream {
public:
    RandomStream() : RandomStream(0, 0) {}
    RandomStream(std::uint64_t seed, std::uint64_t stream_id);

    // Substream convention used across the library: one stream per
    // (seed, sample index, purpose) triple.
    static RandomStream for_sample(std::uint64_t seed, std::uint64_t sample_index,
                                   std::uint32_t purpose);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

    // Raw 64-bit draw.
    std::uint64_t next_u64();

    // Uniform on [0, 1) with 53-bit resolution.
    double uniform();

    // Standard normal via Box-Muller (second value cached).
    double normal();

    void fill_normal(double* out, std::size_t n);
    void fill_normal(Tensor& out);
    void fill_uniform(double* out, std::size_t n);

    // Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n);

private:
    void refill();

    std::uint64_t seed_ = 0;
    std::uint64_t stream_id_ = 0;
    std::uint32_t key_[2] = {0, 0};
    std::uint64_t block_ = 0;       // low half of the 128-bit counter
    std::uint64_t block_hi_ = 0;    // high half (stream id lives here)
    std::uint32_t buf_[4] = {0, 0, 0, 0};
    int buf_pos_ = 4;               // consumed 32-bit lanes in buf_
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

}  // namespace bgis::numerics
