#include "bgis/numerics/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

namespace bgis::numerics {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_product(shape_)) {
        throw ShapeError("data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_to_string(shape_));
    }
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

Tensor Tensor::zeros_like(const Tensor& other) { return Tensor(other.shape_); }

Tensor Tensor::vec(std::vector<double> data) {
    std::size_t n = data.size();
    return Tensor({n}, std::move(data));
}

std::size_t Tensor::rows() const {
    if (shape_.empty()) return 1;
    if (shape_.size() == 1) return 1;
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (shape_.empty()) return 1;
    if (shape_.size() == 1) return shape_[0];
    if (shape_.size() == 2) return shape_[1];
    throw ShapeError("cols() on rank-" + std::to_string(shape_.size()) + " tensor");
}

double& Tensor::at(std::size_t r, std::size_t c) {
    return data_[r * cols() + c];
}

double Tensor::at(std::size_t r, std::size_t c) const {
    return data_[r * cols() + c];
}

double Tensor::item() const {
    if (data_.size() != 1) {
        throw ShapeError("item() on tensor of size " + std::to_string(data_.size()));
    }
    return data_[0];
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

std::vector<double> Tensor::row(std::size_t r) const {
    const std::size_t c = cols();
    return std::vector<double>(data_.begin() + r * c, data_.begin() + (r + 1) * c);
}

void Tensor::set_row(std::size_t r, const double* src, std::size_t n) {
    const std::size_t c = cols();
    if (n != c) throw ShapeError("set_row length mismatch");
    std::memcpy(data_.data() + r * c, src, n * sizeof(double));
}

std::string shape_to_string(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": " + a.shape_str() + " vs " + b.shape_str());
    }
}

}  // namespace

Tensor operator+(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "operator+");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "operator-");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

Tensor operator*(const Tensor& a, double s) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
    return out;
}

Tensor operator*(double s, const Tensor& a) { return a * s; }

Tensor axpy(double s, const Tensor& b, const Tensor& a) {
    require_same_shape(a, b, "axpy");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += s * b[i];
    return out;
}

double dot(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "dot");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double squared_norm(const Tensor& a) { return dot(a, a); }

double max_abs(const Tensor& a) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i]));
    return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

Tensor row_squared_norms(const Tensor& a) {
    const std::size_t r = a.rows(), c = a.cols();
    Tensor out({r});
    for (std::size_t i = 0; i < r; ++i) {
        double acc = 0.0;
        const double* p = a.data() + i * c;
        for (std::size_t j = 0; j < c; ++j) acc += p[j] * p[j];
        out[i] = acc;
    }
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw ShapeError("matmul requires rank-2 operands, got " + a.shape_str() + " x " +
                         b.shape_str());
    }
    const std::size_t r = a.shape()[0], k = a.shape()[1], c = b.shape()[1];
    if (b.shape()[0] != k) {
        throw ShapeError("matmul inner dims: " + a.shape_str() + " x " + b.shape_str());
    }
    Tensor out({r, c});
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = pa[i * k + kk];
            const double* bk = pb + kk * c;
            double* oi = po + i * c;
            for (std::size_t j = 0; j < c; ++j) oi[j] += aik * bk[j];
        }
    }
    return out;
}

}  // namespace bgis::numerics
