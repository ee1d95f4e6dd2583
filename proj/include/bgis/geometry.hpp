#pragma once

#include <cstddef>

#include "bgis/numerics/tensor.hpp"

namespace bgis {

// Geometric structure of a state space.  Particle systems with
// translation-invariant energies live on the zero centre-of-gravity
// subspace; Gaussian normalisers must then count only the effective
// dimensions.
struct Geometry {
    std::size_t particles = 0;
    std::size_t space_dim = 0;
    bool zero_cog = false;

    std::size_t effective_dim(std::size_t ambient) const {
        return zero_cog ? ambient - space_dim : ambient;
    }
};

// Remove the centre of gravity: x is [B, particles*dim]; each spatial
// coordinate's mean over particles is subtracted per row.
numerics::Tensor project_zero_cog(const numerics::Tensor& x, std::size_t particles,
                                  std::size_t dim);

// Applies the projection only when geometry asks for it.
numerics::Tensor apply_geometry(const numerics::Tensor& x, const Geometry& geo);

}  // namespace bgis
