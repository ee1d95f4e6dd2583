#include "bgis/numerics/random.hpp"

#include <cmath>

namespace bgis::numerics {

namespace {

constexpr std::uint32_t PHILOX_M0 = 0xD2511F53u;
constexpr std::uint32_t PHILOX_M1 = 0xCD9E8D57u;
constexpr std::uint32_t PHILOX_W0 = 0x9E3779B9u;
constexpr std::uint32_t PHILOX_W1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

// SplitMix64 finalizer; used to decorrelate the (seed, sample, purpose)
// triple before it becomes a Philox stream id.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

}  // namespace

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {
    key_[0] = static_cast<std::uint32_t>(seed);
    key_[1] = static_cast<std::uint32_t>(seed >> 32);
    block_hi_ = stream_id;
}

RandomStream RandomStream::for_sample(std::uint64_t seed, std::uint64_t sample_index,
                                      std::uint32_t purpose) {
    const std::uint64_t sid = mix64(sample_index ^ mix64(static_cast<std::uint64_t>(purpose) << 32));
    return RandomStream(seed, sid);
}

void RandomStream::refill() {
    std::uint32_t x0 = static_cast<std::uint32_t>(block_);
    std::uint32_t x1 = static_cast<std::uint32_t>(block_ >> 32);
    std::uint32_t x2 = static_cast<std::uint32_t>(block_hi_);
    std::uint32_t x3 = static_cast<std::uint32_t>(block_hi_ >> 32);
    std::uint32_t k0 = key_[0], k1 = key_[1];
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(PHILOX_M0, x0, hi0, lo0);
        mulhilo(PHILOX_M1, x2, hi1, lo1);
        const std::uint32_t y0 = hi1 ^ x1 ^ k0;
        const std::uint32_t y1 = lo1;
        const std::uint32_t y2 = hi0 ^ x3 ^ k1;
        const std::uint32_t y3 = lo0;
        x0 = y0;
        x1 = y1;
        x2 = y2;
        x3 = y3;
        k0 += PHILOX_W0;
        k1 += PHILOX_W1;
    }
    buf_[0] = x0;
    buf_[1] = x1;
    buf_[2] = x2;
    buf_[3] = x3;
    buf_pos_ = 0;
    ++block_;
}

std::uint64_t RandomStream::next_u64() {
    if (buf_pos_ > 2) refill();
    const std::uint64_t lo = buf_[buf_pos_];
    const std::uint64_t hi = buf_[buf_pos_ + 1];
    buf_pos_ += 2;
    return (hi << 32) | lo;
}

double RandomStream::uniform() {
    // 53-bit mantissa draw in [0, 1).
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomStream::normal() {
    if (has_cached_normal_) {
        has_cached_normal_ = false;
        return cached_normal_;
    }
    // Box-Muller on (0,1] x [0,1) to keep log() finite.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_normal_ = r * std::sin(a);
    has_cached_normal_ = true;
    return r * std::cos(a);
}

void RandomStream::fill_normal(double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = normal();
}

void RandomStream::fill_normal(Tensor& out) { fill_normal(out.data(), out.size()); }

void RandomStream::fill_uniform(double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = uniform();
}

std::uint64_t RandomStream::uniform_index(std::uint64_t n) {
    if (n == 0) throw DomainError("uniform_index(0)");
    // Rejection-free modulo is fine here: n is tiny relative to 2^64, and
    // bit-exact reproducibility matters more than the ~n/2^64 bias.
    return next_u64() % n;
}

}  // namespace bgis::numerics
