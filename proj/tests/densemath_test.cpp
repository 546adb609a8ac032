#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "spsim/densemath.hpp"

#include "oracles.hpp"

#include <cmath>

using namespace spsim;

namespace {

const RealMatrix kBuckA22{{-1000.0, 7e5}, {-1.0, 0.0}};

double matrix_distance(const RealMatrix& a, const RealMatrix& b)
{
    return (a - b).max_abs();
}

} // namespace

TEST_CASE("solve_linear: identity and diagonal cases")
{
    CHECK(solve_linear(RealMatrix::identity(2), Vec{3.0, -4.0}) == Vec{3.0, -4.0});

    Vec x = solve_linear(RealMatrix{{2.0, 0.0}, {0.0, 4.0}}, Vec{2.0, 8.0});
    CHECK(x[0] == doctest::Approx(1.0));
    CHECK(x[1] == doctest::Approx(2.0));
}

TEST_CASE("solve_linear: buck closed-loop fast block against adjugate oracle")
{
    const Vec b{1.0, 0.0};
    Vec x = solve_linear(kBuckA22, b);
    Vec expected = oracles::adjugate_inverse_2x2(kBuckA22) * b;
    CHECK(std::abs(x[0] - expected[0]) <= 1e-15);
    CHECK(std::abs(x[1] - expected[1]) <= 1e-15);
    // residual contract
    Vec r = sub(kBuckA22 * x, b);
    CHECK(norm2(r) <= 1e-9 * std::max(1.0, norm2(b)));
}

TEST_CASE("solve_linear: rejects singular and near-singular input")
{
    CHECK_THROWS_AS(solve_linear(RealMatrix{{1.0, 2.0}, {2.0, 4.0}}, Vec{1.0, 1.0}),
                    SingularMatrix);
    // condition number just above the default limit
    CHECK_THROWS_AS(solve_linear(RealMatrix{{1.0, 0.0}, {0.0, 1e-13}}, Vec{1.0, 1.0}),
                    SingularMatrix);
    // caller may relax the limit
    CHECK_NOTHROW(solve_linear(RealMatrix{{1.0, 0.0}, {0.0, 1e-13}}, Vec{1.0, 1.0}, 1e15));
}

TEST_CASE("inverse: identity, diagonal, and buck fast block")
{
    CHECK(matrix_distance(inverse(RealMatrix::identity(3)), RealMatrix::identity(3)) == 0.0);

    RealMatrix d = inverse(RealMatrix{{2.0, 0.0}, {0.0, 0.5}});
    CHECK(matrix_distance(d, RealMatrix{{0.5, 0.0}, {0.0, 2.0}}) <= 1e-15);

    // adjugate: det = 7e5, inverse = (1/7e5) [[0, -7e5], [1, -1000]]
    RealMatrix inv = inverse(kBuckA22);
    RealMatrix expected{{0.0, -1.0}, {1.0 / 7e5, -1.0 / 700.0}};
    CHECK(matrix_distance(inv, expected) <= 1e-12);
}

TEST_CASE("inverse: contract ||A*inv(A) - I|| <= 1e-9 on random matrices")
{
    auto gen = oracles::rng(42);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + trial % 5;
        RealMatrix a = oracles::random_stable(gen, n);
        RealMatrix prod = a * inverse(a);
        CHECK(spectral_norm(prod - RealMatrix::identity(n)) <= 1e-9);
    }
}

TEST_CASE("pinv_left: identity, buck input column, and random tall matrices")
{
    CHECK(matrix_distance(pinv_left(RealMatrix::identity(2)), RealMatrix::identity(2)) <= 1e-14);

    // B = (1/L, 0)^T with L = 1e-3: (B^T B)^{-1} B^T = (L, 0)
    RealMatrix b(2, 1, Vec{1000.0, 0.0});
    RealMatrix bl = pinv_left(b);
    CHECK(bl.rows() == 1);
    CHECK(bl.cols() == 2);
    CHECK(bl(0, 0) == doctest::Approx(1e-3).epsilon(1e-12));
    CHECK(std::abs(bl(0, 1)) <= 1e-18);

    auto gen = oracles::rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        RealMatrix t = oracles::random_matrix(gen, 4, 2);
        RealMatrix left = pinv_left(t);
        CHECK(spectral_norm(left * t - RealMatrix::identity(2)) <= 1e-9);
    }
}

TEST_CASE("pinv_right: identity, single row, and random wide matrices")
{
    CHECK(matrix_distance(pinv_right(RealMatrix::identity(3)), RealMatrix::identity(3)) <= 1e-14);

    RealMatrix b(1, 2, Vec{2.0, 0.0});
    RealMatrix br = pinv_right(b);
    CHECK(br(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(std::abs(br(1, 0)) <= 1e-18);

    auto gen = oracles::rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        RealMatrix w = oracles::random_matrix(gen, 2, 4);
        RealMatrix right = pinv_right(w);
        CHECK(spectral_norm(w * right - RealMatrix::identity(2)) <= 1e-9);
    }
}

TEST_CASE("pseudoinverse: all four Moore-Penrose identities hold")
{
    auto gen = oracles::rng(19);
    for (int trial = 0; trial < 10; ++trial) {
        RealMatrix b = oracles::random_matrix(gen, 5, 3);
        RealMatrix p = pinv_left(b);
        CHECK(spectral_norm(b * p * b - b) <= 1e-9);
        CHECK(spectral_norm(p * b * p - p) <= 1e-9);
        CHECK(spectral_norm((b * p) - (b * p).transpose()) <= 1e-9);
        CHECK(spectral_norm((p * b) - (p * b).transpose()) <= 1e-9);

        RealMatrix w = oracles::random_matrix(gen, 3, 5);
        RealMatrix q = pinv_right(w);
        CHECK(spectral_norm(w * q * w - w) <= 1e-9);
        CHECK(spectral_norm(q * w * q - q) <= 1e-9);
        CHECK(spectral_norm((w * q) - (w * q).transpose()) <= 1e-9);
        CHECK(spectral_norm((q * w) - (q * w).transpose()) <= 1e-9);
    }
}

TEST_CASE("pinv: rank-deficient input is rejected")
{
    RealMatrix b(3, 2, Vec{1.0, 2.0, 2.0, 4.0, 3.0, 6.0}); // second column = 2 * first
    CHECK_THROWS_AS(pinv_left(b), RankDeficient);
    CHECK_THROWS_AS(pinv_right(b.transpose()), RankDeficient);
}

TEST_CASE("spectral_norm: zero, diagonal, single-entry, and invariances")
{
    CHECK(spectral_norm(RealMatrix(3, 3)) == 0.0);
    CHECK(spectral_norm(RealMatrix{{3.0, 0.0}, {0.0, -5.0}}) == doctest::Approx(5.0));
    CHECK(spectral_norm(RealMatrix{{0.0, 0.0}, {-1.0 / 700.0, 0.0}})
          == doctest::Approx(1.0 / 700.0).epsilon(1e-13));

    auto gen = oracles::rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        RealMatrix a = oracles::random_matrix(gen, 3, 4);
        const double na = spectral_norm(a);
        CHECK(spectral_norm(a.transpose()) == doctest::Approx(na).epsilon(1e-12));
        CHECK(spectral_norm(a * -2.5) == doctest::Approx(2.5 * na).epsilon(1e-12));
    }
}

TEST_CASE("svd: reconstruction and ordering contract")
{
    auto gen = oracles::rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t r = 1 + trial % 5, c = 1 + (trial / 5) % 5;
        RealMatrix a = oracles::random_matrix(gen, r, c);
        SvdFactors f = svd(a);
        RealMatrix recon(r, c);
        for (std::size_t k = 0; k < f.singular_values.size(); ++k)
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j)
                    recon(i, j) += f.u(i, k) * f.singular_values[k] * f.v(j, k);
        const double smax = f.singular_values.empty() ? 0.0 : f.singular_values.front();
        CHECK(spectral_norm(a - recon) <= 1e-10 * std::max(1.0, smax));
        CHECK(std::is_sorted(f.singular_values.rbegin(), f.singular_values.rend()));
        // oracle for 2x2 inputs
        if (r == 2 && c == 2) {
            auto [hi, lo] = oracles::singular_values_2x2(a);
            CHECK(f.singular_values[0] == doctest::Approx(hi).epsilon(1e-12));
            CHECK(f.singular_values[1] == doctest::Approx(lo).epsilon(1e-10));
        }
    }
}

TEST_CASE("eigenvalues: diagonal, oscillator, and buck fast block")
{
    auto diag = eigenvalues(RealMatrix{{-1.0, 0.0, 0.0}, {0.0, -2.0, 0.0}, {0.0, 0.0, -3.0}});
    REQUIRE(diag.size() == 3);
    CHECK(diag[0] == Complex(-3.0, 0.0));
    CHECK(diag[1] == Complex(-2.0, 0.0));
    CHECK(diag[2] == Complex(-1.0, 0.0));

    auto osc = eigenvalues(RealMatrix{{0.0, 1.0}, {-25.0, 0.0}});
    REQUIRE(osc.size() == 2);
    CHECK(std::abs(osc[0].real()) <= 1e-9);
    CHECK(osc[0].imag() == doctest::Approx(-5.0));
    CHECK(osc[1].imag() == doctest::Approx(5.0));

    // quadratic formula on lambda^2 + 1000 lambda + 7e5: -500 +- 670.82j
    auto buck = eigenvalues(kBuckA22);
    REQUIRE(buck.size() == 2);
    CHECK(buck[0].real() == doctest::Approx(-500.0).epsilon(1e-10));
    CHECK(std::abs(buck[0].imag()) == doctest::Approx(std::sqrt(1.8e6) / 2.0).epsilon(1e-10));
    CHECK(buck[0].imag() == doctest::Approx(-buck[1].imag()));
}

TEST_CASE("eigenvalues: trace, determinant, residual, and conjugate pairing")
{
    auto gen = oracles::rng(23);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t n = 2 + trial % 5;
        RealMatrix a = oracles::random_matrix(gen, n, n);
        auto lam = eigenvalues(a);
        REQUIRE(lam.size() == n);

        Complex sum(0, 0), prod(1, 0);
        for (const auto& l : lam) {
            sum += l;
            prod *= l;
        }
        const double tr = a.trace();
        CHECK(std::abs(sum.real() - tr) <= 1e-6 * std::max(1.0, std::abs(tr)));
        CHECK(std::abs(sum.imag()) <= 1e-6 * std::max(1.0, std::abs(tr)));
        const double det = oracles::det_laplace(a);
        CHECK(std::abs(prod - Complex(det, 0.0)) <= 1e-6 * std::max(1.0, std::abs(det)));

        // conjugate pairing: the multiset must equal its own conjugate
        std::vector<Complex> conj;
        for (const auto& l : lam) conj.push_back(std::conj(l));
        std::sort(conj.begin(), conj.end(), complex_less);
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(lam[i].real() == conj[i].real());
            CHECK(lam[i].imag() == conj[i].imag());
        }

        // characteristic polynomial residual, scaled by the Gershgorin-ish bound
        double scale = std::pow(std::max(1.0, a.frobenius_norm() * 2.0), static_cast<double>(n));
        for (const auto& l : lam)
            CHECK(std::abs(oracles::char_poly_residual(a, l)) <= 1e-8 * scale);
    }
}

TEST_CASE("eigenvalues: 2x2 closed-form oracle")
{
    auto gen = oracles::rng(31);
    for (int trial = 0; trial < 40; ++trial) {
        RealMatrix a = oracles::random_matrix(gen, 2, 2, -10.0, 10.0);
        auto got = eigenvalues(a);
        auto want = oracles::eig2_closed_form(a);
        std::sort(want.begin(), want.end(), complex_less);
        CHECK(std::abs(got[0] - want[0]) <= 1e-9 * std::max(1.0, std::abs(want[0])));
        CHECK(std::abs(got[1] - want[1]) <= 1e-9 * std::max(1.0, std::abs(want[1])));
    }
}

TEST_CASE("jacobian_fd: identity, analytic gradient, and error path")
{
    auto ident = [](const Vec& x) { return x; };
    RealMatrix j = jacobian_fd(ident, Vec{1.0, -2.0, 0.5});
    CHECK(matrix_distance(j, RealMatrix::identity(3)) <= 1e-9);

    auto f = [](const Vec& x) { return Vec{x[0] * x[0], x[0] * x[1]}; };
    RealMatrix g = jacobian_fd(f, Vec{2.0, 3.0});
    CHECK(matrix_distance(g, RealMatrix{{4.0, 0.0}, {3.0, 2.0}}) <= 1e-5);

    auto bad = [](const Vec& x) { return Vec{1.0 / (x[0] - x[0])}; };
    CHECK_THROWS_AS(jacobian_fd(bad, Vec{1.0}), NonFiniteEvaluation);
}

TEST_CASE("input validation errors")
{
    CHECK_THROWS_AS(eigenvalues(RealMatrix(2, 3)), DimensionMismatch);
    CHECK_THROWS_AS(solve_linear(RealMatrix(2, 3), Vec{1.0, 1.0}), DimensionMismatch);
    RealMatrix nan2(2, 2);
    nan2(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(spectral_norm(nan2), NonFiniteEvaluation);
    CHECK_THROWS_AS(eigenvalues(nan2), NonFiniteEvaluation);
}
