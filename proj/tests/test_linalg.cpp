#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "curdkv/linalg.hpp"
#include "curdkv/rng.hpp"

using namespace curdkv;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Matrix m(rows, cols);
    GaussianStream g(seed);
    for (double &v : m.data()) {
        v = g.next();
    }
    return m;
}

Eigen::MatrixXd to_eigen(const Matrix &m) {
    Eigen::MatrixXd e(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            e(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(i, j);
        }
    }
    return e;
}

double max_abs_diff(const Matrix &a, const Matrix &b) {
    REQUIRE(a.rows() == b.rows());
    REQUIRE(a.cols() == b.cols());
    double mx = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        mx = std::max(mx, std::abs(a.data()[i] - b.data()[i]));
    }
    return mx;
}

} // namespace

TEST_CASE("matrix construction validates shape and finiteness") {
    CHECK_THROWS_AS(Matrix(2, 2, {1.0, 2.0, 3.0}), ShapeError);
    CHECK_THROWS_AS(Matrix(1, 2, {1.0, std::nan("")}), ValidationError);
    CHECK_THROWS_AS(Matrix(1, 1, {INFINITY}), ValidationError);
    const Matrix m(2, 3);
    CHECK(m.rows() == 2);
    CHECK(m.cols() == 3);
    CHECK(m.all_finite());
}

TEST_CASE("matmul identity and hand-checked product") {
    const Matrix a = random_matrix(4, 4, 11);
    CHECK(matmul(Matrix::identity(4), a) == a);

    const Matrix b(2, 2, {1, 2, 3, 4});
    const Matrix c(2, 1, {0, 1});
    const Matrix p = matmul(b, c);
    CHECK(p(0, 0) == doctest::Approx(2));
    CHECK(p(1, 0) == doctest::Approx(4));
}

TEST_CASE("matmul matches triple-loop oracle") {
    const Matrix a = random_matrix(5, 7, 21);
    const Matrix b = random_matrix(7, 3, 22);
    const Matrix p = matmul(a, b);
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            double expect = 0.0;
            for (std::size_t k = 0; k < 7; ++k) {
                expect += a(i, k) * b(k, j);
            }
            CHECK(p(i, j) == doctest::Approx(expect).epsilon(1e-12));
        }
    }
}

TEST_CASE("matmul rejects incompatible shapes, naming both") {
    const Matrix a(2, 3);
    const Matrix b(4, 2);
    try {
        matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError &e) {
        const std::string msg = e.what();
        CHECK(msg.find("2x3") != std::string::npos);
        CHECK(msg.find("4x2") != std::string::npos);
    }
}

TEST_CASE("softmax_rows analytic rows") {
    const Matrix sym = softmax_rows(Matrix(1, 2, {0.0, 0.0}));
    CHECK(sym(0, 0) == doctest::Approx(0.5).epsilon(1e-12));

    const Matrix forced = softmax_rows(Matrix(1, 2, {std::log(2.0), 0.0}));
    CHECK(forced(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(forced(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    const Matrix extreme = softmax_rows(Matrix(1, 2, {1000.0, 0.0}));
    CHECK(extreme.all_finite());
    CHECK(extreme(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(extreme(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("softmax_rows output is row-stochastic") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Matrix s = softmax_rows(random_matrix(6, 9, 100 + seed));
        for (std::size_t i = 0; i < s.rows(); ++i) {
            double sum = 0.0;
            for (double v : s.row(i)) {
                CHECK(v >= 0.0);
                sum += v;
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("row-stochastic operator norm is at most sqrt(n)") {
    // power iteration on S^T S; the perturbation bound leans on this
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const std::size_t n = 3 + seed;
        const Matrix s = softmax_rows(random_matrix(n, 5, 500 + seed));
        Eigen::MatrixXd es = to_eigen(s);
        Eigen::VectorXd x = Eigen::VectorXd::Ones(5).normalized();
        for (int it = 0; it < 200; ++it) {
            x = (es.transpose() * (es * x)).normalized();
        }
        const double op_norm = (es * x).norm();
        CHECK(op_norm <= std::sqrt(static_cast<double>(n)) + 1e-9);
    }
}

TEST_CASE("frobenius_norm basics and brute-force oracle") {
    CHECK(frobenius_norm(Matrix(3, 4)) == 0.0);
    CHECK(frobenius_norm(Matrix(1, 2, {3, 4})) == doctest::Approx(5.0));

    const Matrix m = random_matrix(6, 6, 33);
    double sum = 0.0;
    for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t j = 0; j < 6; ++j) {
            sum += m(i, j) * m(i, j);
        }
    }
    CHECK(frobenius_norm(m) == doctest::Approx(std::sqrt(sum)).epsilon(1e-12));
}

TEST_CASE("svd_thin identity and diagonal cases") {
    const SvdResult id = svd_thin(Matrix::identity(2));
    REQUIRE(id.rank() == 2);
    CHECK(id.singular_values[0] == doctest::Approx(1.0));
    CHECK(id.singular_values[1] == doctest::Approx(1.0));

    const SvdResult diag = svd_thin(Matrix(3, 2, {3, 0, 0, 4, 0, 0}));
    REQUIRE(diag.rank() == 2);
    CHECK(diag.singular_values[0] == doctest::Approx(4.0));
    CHECK(diag.singular_values[1] == doctest::Approx(3.0));
}

TEST_CASE("svd_thin reconstructs the input") {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        const Matrix a = random_matrix(8, 5, 700 + seed);
        const SvdResult svd = svd_thin(a);

        Matrix us = svd.u;
        for (std::size_t i = 0; i < us.rows(); ++i) {
            for (std::size_t j = 0; j < us.cols(); ++j) {
                us(i, j) *= svd.singular_values[j];
            }
        }
        const Matrix rebuilt = matmul(us, svd.vt);
        double diff = 0.0, ref = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = rebuilt.data()[i] - a.data()[i];
            diff += d * d;
            ref += a.data()[i] * a.data()[i];
        }
        CHECK(std::sqrt(diff / ref) < 1e-8);
    }
}

TEST_CASE("svd_thin factors are orthonormal") {
    for (auto [rows, cols] : {std::pair<std::size_t, std::size_t>{8, 5}, {5, 8}, {6, 6}}) {
        const Matrix a = random_matrix(rows, cols, rows * 31 + cols);
        const SvdResult svd = svd_thin(a);
        const Matrix ugram = matmul(svd.u.transposed(), svd.u);
        const Matrix vgram = matmul(svd.vt, svd.vt.transposed());
        CHECK(max_abs_diff(ugram, Matrix::identity(svd.rank())) < 1e-8);
        CHECK(max_abs_diff(vgram, Matrix::identity(svd.rank())) < 1e-8);
    }
}

TEST_CASE("svd_thin singular values match Eigen") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const Matrix a = random_matrix(7 + seed % 3, 4 + seed % 4, 900 + seed);
        const SvdResult svd = svd_thin(a);
        const Eigen::JacobiSVD<Eigen::MatrixXd> ref(to_eigen(a));
        REQUIRE(svd.rank() == static_cast<std::size_t>(ref.singularValues().size()));
        for (std::size_t i = 0; i < svd.rank(); ++i) {
            CHECK(svd.singular_values[i] ==
                  doctest::Approx(ref.singularValues()(static_cast<Eigen::Index>(i)))
                      .epsilon(1e-10));
        }
    }
}

TEST_CASE("svd_thin handles rank deficiency") {
    // two identical columns: rank 1
    const Matrix a(3, 2, {1, 1, 2, 2, 3, 3});
    const SvdResult svd = svd_thin(a);
    CHECK(svd.rank() == 1);
    CHECK(svd.singular_values[0] == doctest::Approx(std::sqrt(28.0)));
}

TEST_CASE("svd_thin sum of squared u-row norms equals the rank") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const std::size_t rows = 3 + seed;
        const std::size_t cols = 2 + seed % 5;
        const SvdResult svd = svd_thin(random_matrix(rows, cols, 40 + seed));
        double sum = 0.0;
        for (double v : svd.u.data()) {
            sum += v * v;
        }
        CHECK(sum == doctest::Approx(static_cast<double>(svd.rank())).epsilon(1e-8));
    }
}

TEST_CASE("svd_thin rejects empty input") {
    CHECK_THROWS_AS(svd_thin(Matrix()), ShapeError);
}

TEST_CASE("gaussian_sketch is deterministic per seed") {
    const Matrix a = gaussian_sketch(16, 20, 42);
    const Matrix b = gaussian_sketch(16, 20, 42);
    CHECK(a == b);
    const Matrix c = gaussian_sketch(16, 20, 43);
    CHECK(a != c);

    const Matrix single = gaussian_sketch(1, 1, 7);
    CHECK(single.rows() == 1);
    CHECK(single.cols() == 1);
    CHECK(std::isfinite(single(0, 0)));
}

TEST_CASE("gaussian_sketch entries have variance 1/r") {
    // pooled over many seeds; the entry variance must track 1/r closely
    const std::size_t d = 128, r = 20;
    double sum = 0.0, sum_sq = 0.0;
    std::size_t count = 0;
    for (std::uint64_t seed = 0; seed < 10000; seed += 100) {
        const Matrix g = gaussian_sketch(d, r, seed);
        for (double v : g.data()) {
            sum += v;
            sum_sq += v * v;
            ++count;
        }
    }
    const double mean = sum / static_cast<double>(count);
    const double var = sum_sq / static_cast<double>(count) - mean * mean;
    CHECK(std::abs(var - 1.0 / 20.0) < 0.05 / 20.0);
}

TEST_CASE("gaussian_sketch norm estimate is unbiased") {
    const Matrix row = random_matrix(1, 24, 5);
    double actual = 0.0;
    for (double v : row.data()) {
        actual += v * v;
    }
    double mean_estimate = 0.0;
    const std::size_t trials = 10000;
    for (std::uint64_t seed = 0; seed < trials; ++seed) {
        const Matrix g = gaussian_sketch(24, 20, seed);
        const Matrix projected = matmul(row, g);
        for (double v : projected.data()) {
            mean_estimate += v * v;
        }
    }
    mean_estimate /= static_cast<double>(trials);
    CHECK(std::abs(mean_estimate - actual) / actual < 0.02);
}
