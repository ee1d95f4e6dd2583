#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "bgis/errors.hpp"

namespace bgis::numerics {

// Dense row-major tensor of doubles.  Rank 0 (scalar), 1, or 2 covers
// everything in this codebase; batched state is always [rows, cols].
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor full(std::vector<std::size_t> shape, double v);
    static Tensor zeros_like(const Tensor& other);
    // 1-D tensor from an explicit list, e.g. Tensor::vec({1.0, 2.0}).
    static Tensor vec(std::vector<double> data);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    // Convenience accessors for the 2-D case (rank-1 counts as one row).
    std::size_t rows() const;
    std::size_t cols() const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t r, std::size_t c);
    double at(std::size_t r, std::size_t c) const;

    // Value of a single-element tensor; throws ShapeError otherwise.
    double item() const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    void fill(double v);
    std::string shape_str() const;

    // Row r as a copy / assignment helpers used by batching loops.
    std::vector<double> row(std::size_t r) const;
    void set_row(std::size_t r, const double* src, std::size_t n);

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::string shape_to_string(const std::vector<std::size_t>& shape);

// --- Plain (non-differentiated) tensor math used by inference-side code ---

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, double s);
Tensor operator*(double s, const Tensor& a);

// c = a + s * b, shapes must match.
Tensor axpy(double s, const Tensor& b, const Tensor& a);

double dot(const Tensor& a, const Tensor& b);
double squared_norm(const Tensor& a);
double max_abs(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);

// out[r] = sum_c a[r, c]^2 for a [R, C] tensor; returns shape [R].
Tensor row_squared_norms(const Tensor& a);

// Strict 2-D matrix product [R,K] x [K,C] -> [R,C].
Tensor matmul(const Tensor& a, const Tensor& b);

}  // namespace bgis::numerics
