#include "curdkv/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "curdkv/rng.hpp"

namespace curdkv {

namespace detail {

std::string shape_str(const Matrix &a) {
    return std::to_string(a.rows()) + "x" + std::to_string(a.cols());
}

} // namespace detail

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("Matrix: data length " + std::to_string(data_.size()) +
                         " does not match shape " + std::to_string(rows_) + "x" +
                         std::to_string(cols_));
    }
    if (!all_finite()) {
        throw ValidationError("Matrix: non-finite entry in " + std::to_string(rows_) + "x" +
                              std::to_string(cols_) + " data");
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i) {
        for (std::size_t j = 0; j < cols_; ++j) {
            t(j, i) = (*this)(i, j);
        }
    }
    return t;
}

Matrix Matrix::take_rows(std::span<const std::size_t> indices) const {
    Matrix out(indices.size(), cols_);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const std::size_t src = indices[i];
        if (src >= rows_) {
            throw ShapeError("take_rows: index " + std::to_string(src) + " out of range for " +
                             std::to_string(rows_) + " rows");
        }
        std::copy_n(data_.data() + src * cols_, cols_, out.data().data() + i * cols_);
    }
    return out;
}

bool Matrix::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix matmul(const Matrix &a, const Matrix &b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: incompatible shapes " + detail::shape_str(a) + " * " +
                         detail::shape_str(b));
    }
    Matrix c(a.rows(), b.cols());
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    for (std::size_t i = 0; i < n; ++i) {
        double *ci = c.data().data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a(i, p);
            if (aip == 0.0) {
                continue;
            }
            const double *bp = b.data().data() + p * m;
            for (std::size_t j = 0; j < m; ++j) {
                ci[j] += aip * bp[j];
            }
        }
    }
    return c;
}

Matrix softmax_rows(const Matrix &a) {
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto src = a.row(i);
        double mx = src[0];
        for (double v : src) {
            mx = std::max(mx, v);
        }
        double sum = 0.0;
        auto dst = out.row(i);
        for (std::size_t j = 0; j < src.size(); ++j) {
            dst[j] = std::exp(src[j] - mx);
            sum += dst[j];
        }
        for (double &v : dst) {
            v /= sum;
        }
    }
    return out;
}

double frobenius_norm(const Matrix &a) {
    double sum = 0.0;
    for (double v : a.data()) {
        sum += v * v;
    }
    return std::sqrt(sum);
}

Matrix gaussian_sketch(std::size_t d, std::size_t r, std::uint64_t seed) {
    if (d == 0 || r == 0) {
        throw ValidationError("gaussian_sketch: dimensions must be positive, got d=" +
                              std::to_string(d) + " r=" + std::to_string(r));
    }
    Matrix g(d, r);
    GaussianStream stream(seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(r));
    for (double &v : g.data()) {
        v = stream.next() * scale;
    }
    return g;
}

namespace {

// One-sided Jacobi (Hestenes): orthogonalize the columns of a working copy
// of A while accumulating the right singular vectors. Column norms then give
// the singular values. Requires rows >= cols; the wrapper transposes first
// when needed.
struct JacobiSvd {
    Matrix w;          // m x n working copy, columns converge to u_j * sigma_j
    Matrix v;          // n x n accumulated right vectors (columns)
    std::vector<double> col_sq; // squared column norms of w

    explicit JacobiSvd(const Matrix &a) : w(a), v(Matrix::identity(a.cols())), col_sq(a.cols()) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            col_sq[j] = column_dot(j, j);
        }
    }

    double column_dot(std::size_t i, std::size_t j) const {
        double s = 0.0;
        for (std::size_t r = 0; r < w.rows(); ++r) {
            s += w(r, i) * w(r, j);
        }
        return s;
    }

    void rotate(Matrix &m, std::size_t i, std::size_t j, double c, double s) {
        for (std::size_t r = 0; r < m.rows(); ++r) {
            const double mi = m(r, i), mj = m(r, j);
            m(r, i) = c * mi - s * mj;
            m(r, j) = s * mi + c * mj;
        }
    }

    // Runs sweeps until every column pair is numerically orthogonal.
    // Returns false if the sweep limit is hit.
    bool run(double tol, std::size_t max_sweeps) {
        const std::size_t n = w.cols();
        for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
            // refresh norms once per sweep; incremental updates drift
            for (std::size_t j = 0; j < n; ++j) {
                col_sq[j] = column_dot(j, j);
            }
            bool changed = false;
            for (std::size_t i = 0; i + 1 < n; ++i) {
                for (std::size_t j = i + 1; j < n; ++j) {
                    const double aij = column_dot(i, j);
                    const double aii = col_sq[i], ajj = col_sq[j];
                    if (aij == 0.0 || std::abs(aij) <= tol * std::sqrt(aii * ajj)) {
                        continue;
                    }
                    changed = true;
                    const double zeta = (ajj - aii) / (2.0 * aij);
                    const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                     (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                    const double c = 1.0 / std::sqrt(1.0 + t * t);
                    const double s = c * t;
                    rotate(w, i, j, c, s);
                    rotate(v, i, j, c, s);
                    col_sq[i] = std::max(0.0, aii - t * aij);
                    col_sq[j] = std::max(0.0, ajj + t * aij);
                }
            }
            if (!changed) {
                return true;
            }
        }
        return false;
    }
};

constexpr double kRankTolerance = 1e-10;
constexpr std::size_t kMaxSweeps = 128;

SvdResult svd_tall(const Matrix &a) {
    // computed dots of orthogonal columns carry O(sqrt(m) * eps) noise, so
    // the stopping threshold must not sit below that
    const double tol =
        std::max(1e-14, 64.0 * std::numeric_limits<double>::epsilon() *
                            std::sqrt(static_cast<double>(a.rows())));
    JacobiSvd jac(a);
    if (!jac.run(tol, kMaxSweeps)) {
        throw ConvergenceError("svd_thin: Jacobi sweeps did not converge for " +
                               detail::shape_str(a) + " matrix");
    }

    const std::size_t n = a.cols();
    std::vector<double> sigma(n);
    for (std::size_t j = 0; j < n; ++j) {
        sigma[j] = std::sqrt(std::max(0.0, jac.column_dot(j, j)));
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

    const double sigma_max = sigma[order[0]];
    std::size_t rank = 0;
    while (rank < n && sigma[order[rank]] > kRankTolerance * sigma_max) {
        ++rank;
    }

    SvdResult res;
    res.u = Matrix(a.rows(), rank);
    res.vt = Matrix(rank, n);
    res.singular_values.resize(rank);
    for (std::size_t k = 0; k < rank; ++k) {
        const std::size_t src = order[k];
        const double s = sigma[src];
        res.singular_values[k] = s;
        for (std::size_t r = 0; r < a.rows(); ++r) {
            res.u(r, k) = jac.w(r, src) / s;
        }
        for (std::size_t r = 0; r < n; ++r) {
            res.vt(k, r) = jac.v(r, src);
        }
    }
    return res;
}

} // namespace

SvdResult svd_thin(const Matrix &a) {
    if (a.rows() == 0 || a.cols() == 0) {
        throw ShapeError("svd_thin: empty matrix " + detail::shape_str(a));
    }
    if (!a.all_finite()) {
        throw ValidationError("svd_thin: non-finite entries in " + detail::shape_str(a));
    }
    if (a.rows() >= a.cols()) {
        return svd_tall(a);
    }
    // A = U S Vt  <=>  At = V S Ut
    SvdResult t = svd_tall(a.transposed());
    SvdResult res;
    res.singular_values = std::move(t.singular_values);
    res.u = t.vt.transposed();
    res.vt = t.u.transposed();
    return res;
}

} // namespace curdkv
