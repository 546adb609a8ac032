#pragma once

// Sensitivity-conditioning engine. The quasi-steady state z = h(x) of the
// fast dynamics moves as the slow state moves; injecting its time derivative
//
//   dh/dt = S(x, z) f(x, z),   S = -(grad_z g)^{-1} grad_x g
//
// into the fast dynamics decouples the boundary layer without high-gain
// feedback. The injection enters through B v; depending on the shape of B the
// match is exact (square or wide B) or a least-squares approximation (tall B)
// with residual e = B v - S f.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spsim/densemath.hpp"
#include "spsim/errors.hpp"
#include "spsim/plant_model.hpp"
#include "spsim/sptheory.hpp"

namespace spsim {

// ---------------------------------------------------------------------------
// Injection modes
// ---------------------------------------------------------------------------

struct SensitivityMode {
    enum class Kind {
        none,                      // no injection, v = 0
        exact_square,              // m = n_z, v = B^{-1} target
        exact_wide,                // m > n_z, v = B+_R target + (I - B+_R B) p
        approximate_least_squares, // m < n_z, v = B+_L target
    };

    Kind kind = Kind::none;
    Vec free_vector; // p of the wide case; empty means zero

    static SensitivityMode none() { return {Kind::none, {}}; }
    static SensitivityMode exact_square() { return {Kind::exact_square, {}}; }
    static SensitivityMode exact_wide(Vec p = {}) { return {Kind::exact_wide, std::move(p)}; }
    static SensitivityMode approximate() { return {Kind::approximate_least_squares, {}}; }
};

/// Pick the injection mode from the shape of B: square -> exact,
/// wide -> exact via right pseudoinverse, tall -> least squares.
inline SensitivityMode auto_mode(const RealMatrix& b)
{
    if (b.cols() == b.rows()) return SensitivityMode::exact_square();
    if (b.cols() > b.rows()) return SensitivityMode::exact_wide();
    return SensitivityMode::approximate();
}

struct ConditioningResult {
    Vec v;                // injection, length m
    Vec target;           // desired dh/dt = S f, length n_z
    Vec residual;         // e = B v - target
    double residual_norm; // ||e||_2
};

// ---------------------------------------------------------------------------
// Sensitivity
// ---------------------------------------------------------------------------

/// Linear-system sensitivity S = -A22^{-1} A21; constant in the state and
/// invariant under epsilon scaling.
inline RealMatrix sensitivity_linear(const PartitionedLinearSystem& sys)
{
    return qss_matrix(sys);
}

/// Nonlinear sensitivity S = -(grad_z g)^{-1} grad_x g at (x, z), using the
/// plant's analytic Jacobians when present, finite differences otherwise.
inline RealMatrix sensitivity_nonlinear(const TwoTimescalePlant& plant,
                                        const Vec& x, const Vec& z,
                                        std::span<const double> refs,
                                        double cond_limit = 1e12)
{
    RealMatrix jac_x, jac_z;
    if (plant.has_jacobians()) {
        jac_x = plant.fast_jacobian_x(x, z, refs);
        jac_z = plant.fast_jacobian_z(x, z, refs);
    } else {
        const Vec zero_v(plant.n_inputs, 0.0);
        auto g_of_x = [&](const Vec& xp) { return plant.fast(xp, z, refs, zero_v); };
        auto g_of_z = [&](const Vec& zp) { return plant.fast(x, zp, refs, zero_v); };
        jac_x = jacobian_fd(g_of_x, x);
        jac_z = jacobian_fd(g_of_z, z);
    }
    try {
        return -solve_linear(jac_z, jac_x, cond_limit);
    } catch (const SingularMatrix& e) {
        throw SingularJacobian(std::string("sensitivity: grad_z g is ill-conditioned ("
                                           + std::string(e.what()) + ")"));
    }
}

/// dh/dt = S f, the feedforward target injected into the fast dynamics.
inline Vec conditioning_target(const RealMatrix& s, const Vec& f_value)
{
    if (s.cols() != f_value.size())
        throw DimensionMismatch("conditioning_target: S columns != f size");
    return s * f_value;
}

// ---------------------------------------------------------------------------
// Injection solve
// ---------------------------------------------------------------------------

inline ConditioningResult solve_injection(const RealMatrix& b, const Vec& target,
                                          const SensitivityMode& mode)
{
    if (b.rows() != target.size())
        throw DimensionMismatch("solve_injection: target size != rows of B");
    const std::size_t n_z = b.rows(), m = b.cols();

    Vec v(m, 0.0);
    switch (mode.kind) {
    case SensitivityMode::Kind::none:
        break;
    case SensitivityMode::Kind::exact_square:
        if (m != n_z)
            throw ModeShapeMismatch("exact-square mode requires a square B");
        v = solve_linear(b, target);
        break;
    case SensitivityMode::Kind::exact_wide: {
        if (m < n_z)
            throw ModeShapeMismatch("exact-wide mode requires at least as many inputs as fast states");
        RealMatrix br = pinv_right(b);
        v = br * target;
        if (!mode.free_vector.empty()) {
            if (mode.free_vector.size() != m)
                throw DimensionMismatch("exact-wide free vector has wrong length");
            // null-space component (I - B+_R B) p leaves B v unchanged
            Vec p = mode.free_vector;
            Vec bp = b * p;
            Vec proj = br * bp;
            for (std::size_t i = 0; i < m; ++i) v[i] += p[i] - proj[i];
        }
        break;
    }
    case SensitivityMode::Kind::approximate_least_squares: {
        if (m > n_z)
            throw ModeShapeMismatch("approximate mode requires fewer inputs than fast states");
        RealMatrix bl = pinv_left(b);
        v = bl * target;
        break;
    }
    }

    Vec residual = sub(b * v, target);
    const double rnorm = norm2(residual);
    return ConditioningResult{std::move(v), target, std::move(residual), rnorm};
}

// ---------------------------------------------------------------------------
// Approximate-conditioning error analysis (tall B)
// ---------------------------------------------------------------------------

/// Least-squares residual in matrix form:
///   e(x, z) = (I - B B+_L) A22^{-1} A21 (A11 x + A12 z).
/// For a square invertible B the projector vanishes and so does e.
inline Vec residual_error_matrixform(const PartitionedLinearSystem& sys,
                                     const Vec& x, const Vec& z)
{
    PartitionedLinearSystem r = sys.realized();
    if (x.size() != r.nx() || z.size() != r.nz())
        throw DimensionMismatch("residual_error_matrixform: state sizes");
    if (r.inputs() > r.nz())
        throw ModeShapeMismatch("residual_error_matrixform: B must not be wide");
    RealMatrix bl = pinv_left(r.b);
    RealMatrix projector = RealMatrix::identity(r.nz()) - r.b * bl;
    Vec xdot = add(r.a11 * x, r.a12 * z);
    return projector * solve_linear(r.a22, r.a21 * xdot);
}

/// Time-independent factor ||(I - B B+_L) A22^{-1} A21||_2 bounding the
/// residual as ||e(t)|| <= estimate * ||dx/dt||. Zero when B spans the fast
/// space (exact conditioning available).
inline double error_bound_estimate(const PartitionedLinearSystem& sys)
{
    PartitionedLinearSystem r = sys.realized();
    if (r.inputs() >= r.nz()) {
        if (r.inputs() == r.nz()) {
            // require invertibility, then the projector is exactly zero
            RealMatrix bl = pinv_left(r.b);
            (void)bl;
        } else {
            RealMatrix br = pinv_right(r.b);
            (void)br;
        }
        return 0.0;
    }
    RealMatrix bl = pinv_left(r.b);
    RealMatrix projector = RealMatrix::identity(r.nz()) - r.b * bl;
    RealMatrix k = solve_linear(r.a22, r.a21);
    return spectral_norm(projector * k);
}

// ---------------------------------------------------------------------------
// Conditioned closed-loop matrices
// ---------------------------------------------------------------------------

/// Exact conditioning folded into the state matrix:
///   [[A11,                          A12                       ],
///    [A21 - A22^{-1} A21 A11,       A22 - A22^{-1} A21 A12    ]]
/// Its spectrum is sigma(A11 - A12 A22^{-1} A21) union sigma(A22).
inline RealMatrix closed_loop_exact(const PartitionedLinearSystem& sys)
{
    PartitionedLinearSystem r = sys.realized();
    RealMatrix k = solve_linear(r.a22, r.a21);
    return block2x2(r.a11, r.a12,
                    r.a21 - k * r.a11, r.a22 - k * r.a12);
}

/// Approximate conditioning folded into the state matrix (tall or square
/// full-column-rank B):
///   [[A11,                                A12                            ],
///    [A21 - B B+_L A22^{-1} A21 A11,      A22 - B B+_L A22^{-1} A21 A12  ]]
inline RealMatrix closed_loop_asc(const PartitionedLinearSystem& sys)
{
    PartitionedLinearSystem r = sys.realized();
    if (r.inputs() > r.nz())
        throw ModeShapeMismatch("closed_loop_asc: B must not be wide");
    RealMatrix bl = pinv_left(r.b);
    RealMatrix bbl_k = r.b * (bl * solve_linear(r.a22, r.a21));
    return block2x2(r.a11, r.a12,
                    r.a21 - bbl_k * r.a11, r.a22 - bbl_k * r.a12);
}

// ---------------------------------------------------------------------------
// Spectrum reporting
// ---------------------------------------------------------------------------

/// Greedy nearest-neighbor matching of two equal-size complex multisets;
/// adequate for the well-separated spectra handled here. Returns index pairs.
inline std::vector<std::pair<std::size_t, std::size_t>>
match_nearest(const std::vector<Complex>& a, const std::vector<Complex>& b)
{
    if (a.size() != b.size())
        throw DimensionMismatch("match_nearest: multiset sizes differ");
    const std::size_t n = a.size();
    std::vector<bool> used_a(n, false), used_b(n, false);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    pairs.reserve(n);
    for (std::size_t round = 0; round < n; ++round) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0, bj = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (used_a[i]) continue;
            for (std::size_t j = 0; j < n; ++j) {
                if (used_b[j]) continue;
                const double d = std::abs(a[i] - b[j]);
                if (d < best) { best = d; bi = i; bj = j; }
            }
        }
        used_a[bi] = used_b[bj] = true;
        pairs.emplace_back(bi, bj);
    }
    return pairs;
}

/// Total matched distance between two spectra, the displacement measure used
/// by the gain-sweep study.
inline double spectral_displacement(const std::vector<Complex>& a,
                                    const std::vector<Complex>& b)
{
    double total = 0.0;
    for (const auto& [i, j] : match_nearest(a, b)) total += std::abs(a[i] - b[j]);
    return total;
}

struct EigenReport {
    std::vector<Complex> full_no_conditioning;   // spectrum with v = 0
    std::vector<Complex> full_with_conditioning; // spectrum with the injected term
    std::vector<Complex> reduced_union;          // sigma(slow reduced) union sigma(A22)
    double gap_ratio = 0.0;                      // min |Re fast| / max |Re slow|
};

/// Timescale-gap proxy: sort by |Re|, call the n_x smallest "slow", and return
/// min |Re fast| / max |Re slow|.
inline double timescale_gap_ratio(const std::vector<Complex>& spectrum, std::size_t n_x)
{
    std::vector<double> mags;
    mags.reserve(spectrum.size());
    for (const auto& l : spectrum) mags.push_back(std::abs(l.real()));
    std::sort(mags.begin(), mags.end());
    if (n_x == 0 || n_x >= mags.size()) return 1.0;
    const double slow_max = mags[n_x - 1];
    const double fast_min = mags[n_x];
    if (slow_max == 0.0) return std::numeric_limits<double>::infinity();
    return fast_min / slow_max;
}

/// Spectra of the plain closed loop, the conditioned closed loop (least
/// squares when B is tall, exact otherwise), and the reduced-order union.
inline EigenReport eigen_report(const PartitionedLinearSystem& sys)
{
    EigenReport report;
    report.full_no_conditioning = eigenvalues(full_matrix(sys));
    report.full_with_conditioning =
        eigenvalues(sys.inputs() < sys.nz() ? closed_loop_asc(sys) : closed_loop_exact(sys));

    ReducedSystem red = reduced_system(sys.realized());
    auto slow_eigs = eigenvalues(red.slow);
    auto fast_eigs = eigenvalues(red.fast);
    report.reduced_union = slow_eigs;
    report.reduced_union.insert(report.reduced_union.end(), fast_eigs.begin(), fast_eigs.end());
    std::sort(report.reduced_union.begin(), report.reduced_union.end(), complex_less);

    report.gap_ratio = timescale_gap_ratio(report.full_no_conditioning, sys.nx());
    return report;
}

} // namespace spsim
