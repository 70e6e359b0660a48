#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "curdkv/error.hpp"

namespace curdkv {

// Dense row-major matrix of 64-bit reals. The universal numeric carrier for
// queries, keys, values, projections and score intermediates.
class Matrix {
  public:
    Matrix() = default;

    // Zero-initialized rows x cols matrix.
    Matrix(std::size_t rows, std::size_t cols);

    // Takes ownership of row-major data; rejects size mismatch and any
    // non-finite entry.
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double &operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    const std::vector<double> &data() const { return data_; }
    std::vector<double> &data() { return data_; }

    Matrix transposed() const;

    // Row gather: out(i, :) = (*this)(indices[i], :). Order preserving.
    Matrix take_rows(std::span<const std::size_t> indices) const;

    bool all_finite() const;

    friend bool operator==(const Matrix &, const Matrix &) = default;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Thin SVD of a: u is n x r with orthonormal columns, vt is r x d with
// orthonormal rows, singular_values descending and strictly above the rank
// cutoff (1e-10 times the largest singular value).
struct SvdResult {
    Matrix u;
    std::vector<double> singular_values;
    Matrix vt;

    std::size_t rank() const { return singular_values.size(); }
};

// Thin SVD via one-sided Jacobi orthogonalization. Exact to working
// precision at the dense sizes this library targets.
// Throws ConvergenceError (with the matrix dimensions) if the sweep limit is
// exceeded.
SvdResult svd_thin(const Matrix &a);

// Row-wise softmax with per-row max subtraction. Output rows are
// non-negative and sum to 1.
Matrix softmax_rows(const Matrix &a);

double frobenius_norm(const Matrix &a);

// d x r matrix with i.i.d. N(0, 1/r) entries, deterministic for a fixed
// seed. Used to approximate row norms after projection.
Matrix gaussian_sketch(std::size_t d, std::size_t r, std::uint64_t seed);

// Standard product; throws ShapeError naming both shapes on mismatch.
Matrix matmul(const Matrix &a, const Matrix &b);

namespace detail {
std::string shape_str(const Matrix &a);
}

} // namespace curdkv
