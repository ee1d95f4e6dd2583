#include "bgis/targets/target.hpp"

#include <cmath>

namespace bgis {

numerics::Tensor project_zero_cog(const numerics::Tensor& x, std::size_t particles,
                                  std::size_t dim) {
    const std::size_t c = particles * dim;
    if (x.cols() != c) {
        throw ShapeError("project_zero_cog: " + x.shape_str() + " vs " + std::to_string(particles) +
                         " particles x " + std::to_string(dim));
    }
    numerics::Tensor out = x;
    const std::size_t r = x.rows();
    for (std::size_t b = 0; b < r; ++b) {
        double* row = out.data() + b * c;
        for (std::size_t k = 0; k < dim; ++k) {
            double m = 0.0;
            for (std::size_t p = 0; p < particles; ++p) m += row[p * dim + k];
            m /= static_cast<double>(particles);
            for (std::size_t p = 0; p < particles; ++p) row[p * dim + k] -= m;
        }
    }
    return out;
}

numerics::Tensor apply_geometry(const numerics::Tensor& x, const Geometry& geo) {
    return geo.zero_cog ? project_zero_cog(x, geo.particles, geo.space_dim) : x;
}

}  // namespace bgis

namespace bgis::targets {

double Target::unnorm_log_density(const Tensor& x) const {
    Tensor row = x;
    if (x.rank() == 1) row = Tensor({1, x.size()}, std::vector<double>(x.data(), x.data() + x.size()));
    return unnorm_log_density_rows(row)[0];
}

Tensor Target::sample_exact(std::size_t, RandomStream&) const {
    throw CapabilityError(name() + " has no exact sampler");
}

Tensor Target::analytic_noised_score(const Tensor&, double) const {
    throw CapabilityError(name() + " has no analytic noised score");
}

Tensor Target::analytic_denoise(const Tensor&, double) const {
    throw CapabilityError(name() + " has no analytic denoiser");
}

double Target::log_normalizer() const {
    throw CapabilityError(name() + " has unknown normalizer");
}

TestFunction TestFunction::parse(const std::string& name) {
    if (name == "log_l2_norm") return TestFunction(Tag::LogL2Norm);
    if (name == "log_l1_norm") return TestFunction(Tag::LogL1Norm);
    if (name == "cos_l2_norm") return TestFunction(Tag::CosL2Norm);
    throw ConfigError("unknown test function '" + name + "'");
}

std::string TestFunction::name() const {
    switch (tag_) {
        case Tag::LogL2Norm: return "log_l2_norm";
        case Tag::LogL1Norm: return "log_l1_norm";
        case Tag::CosL2Norm: return "cos_l2_norm";
    }
    return "?";
}

namespace {

double phi_of_row(TestFunction::Tag tag, const double* x, std::size_t d) {
    double l2sq = 0.0, l1 = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        l2sq += x[i] * x[i];
        l1 += std::fabs(x[i]);
    }
    switch (tag) {
        case TestFunction::Tag::LogL2Norm:
            if (l2sq == 0.0) throw DomainError("log_l2_norm at x = 0");
            return 0.5 * std::log(l2sq);
        case TestFunction::Tag::LogL1Norm:
            if (l1 == 0.0) throw DomainError("log_l1_norm at x = 0");
            return std::log(l1);
        case TestFunction::Tag::CosL2Norm:
            return std::cos(std::sqrt(l2sq));
    }
    throw ContractError("unhandled test function tag");
}

}  // namespace

double TestFunction::operator()(const Tensor& x) const {
    return phi_of_row(tag_, x.data(), x.size());
}

Tensor TestFunction::eval_rows(const Tensor& x) const {
    const std::size_t r = x.rows(), c = x.cols();
    Tensor out({r});
    for (std::size_t i = 0; i < r; ++i) out[i] = phi_of_row(tag_, x.data() + i * c, c);
    return out;
}

}  // namespace bgis::targets
