#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace seadate {

/// Thrown on shape mismatches and invalid dimension arguments.
struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg);
};

std::string shape_str(const std::vector<std::size_t>& shape);

/// Dense n-dimensional array of doubles in row-major order.
/// Plain value type; all math lives in free functions (see autograd.hpp).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);  // zero-filled
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor full(std::vector<std::size_t> shape, double value);
    static Tensor scalar(double value);  // shape {1,1}
    static Tensor identity(std::size_t n);
    /// Row-major 2-d literal, e.g. Tensor::from_rows({{1,0},{0,2}}).
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor row(std::initializer_list<double> values);  // shape {1,D}

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    std::size_t extent(std::size_t axis) const;

    /// Rows/cols of a rank-2 tensor; throws on other ranks.
    std::size_t rows() const;
    std::size_t cols() const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c);
    double at(std::size_t r, std::size_t c) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool empty() const { return data_.empty(); }
    bool all_finite() const;

    /// Same data, new shape (numel must match).
    Tensor reshaped(std::vector<std::size_t> new_shape) const;

    double max_abs() const;
    double l2_norm() const;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// -- raw kernels shared by forward and backward paths ------------------------

namespace detail {
// c += a*b, a is MxK, b is KxN, c is MxN (row major)
void mm_nn(std::size_t m, std::size_t n, std::size_t k,
           const double* a, const double* b, double* c);
// c += a*b^T, a is MxK, b is NxK
void mm_nt(std::size_t m, std::size_t n, std::size_t k,
           const double* a, const double* b, double* c);
// c += a^T*b, a is KxM, b is KxN
void mm_tn(std::size_t m, std::size_t n, std::size_t k,
           const double* a, const double* b, double* c);
// x[i] = exp(x[i]); vectorized build, within an ulp of std::exp
void exp_inplace(double* x, std::size_t n);
}  // namespace detail

// -- SDT1 on-disk format ------------------------------------------------------
// magic "SDT1", little-endian u32 rank, rank x u32 extents, row-major f32 data.
// Storage is f32; in-memory compute stays f64.

void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

}  // namespace seadate
