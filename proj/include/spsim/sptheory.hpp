#pragma once

// Singular-perturbation structure for linear partitioned systems:
//
//   dx/dt         = A11 x + A12 z
//   eps * dz/dt   = A21 x + A22 z + B v
//
// with the quasi-steady-state map h(x) = -A22^{-1} A21 x, the boundary-layer
// transform, the reduced slow/fast pair, and timescale (epsilon) scaling.
// epsilon is carried as metadata next to the stored blocks; realized() applies
// the 1/eps factor to the fast blocks when the physical-time dynamics are
// needed. The quasi-steady-state map and the sensitivity are epsilon-invariant
// (the factor cancels), so they are computed from the stored blocks directly.

#include <cstddef>
#include <utility>

#include "spsim/densemath.hpp"
#include "spsim/errors.hpp"

namespace spsim {

struct PartitionedLinearSystem {
    RealMatrix a11; // n_x x n_x
    RealMatrix a12; // n_x x n_z
    RealMatrix a21; // n_z x n_x
    RealMatrix a22; // n_z x n_z
    RealMatrix b;   // n_z x m
    double epsilon = 1.0;

    PartitionedLinearSystem(RealMatrix a11_, RealMatrix a12_, RealMatrix a21_,
                            RealMatrix a22_, RealMatrix b_, double epsilon_ = 1.0)
        : a11(std::move(a11_)), a12(std::move(a12_)), a21(std::move(a21_)),
          a22(std::move(a22_)), b(std::move(b_)), epsilon(epsilon_)
    {
        if (a11.rows() != a11.cols()) throw DimensionMismatch("partitioned system: a11 not square");
        if (a22.rows() != a22.cols()) throw DimensionMismatch("partitioned system: a22 not square");
        if (a12.rows() != a11.rows() || a12.cols() != a22.rows())
            throw DimensionMismatch("partitioned system: a12 shape");
        if (a21.rows() != a22.rows() || a21.cols() != a11.rows())
            throw DimensionMismatch("partitioned system: a21 shape");
        if (b.rows() != a22.rows() || b.cols() == 0)
            throw DimensionMismatch("partitioned system: b shape");
        if (!a11.is_finite() || !a12.is_finite() || !a21.is_finite() ||
            !a22.is_finite() || !b.is_finite())
            throw NonFiniteEvaluation("partitioned system: non-finite entries");
        if (!(epsilon >= 0.0) || !std::isfinite(epsilon))
            throw InvalidEpsilon("partitioned system: epsilon must be >= 0");
    }

    std::size_t nx() const { return a11.rows(); }
    std::size_t nz() const { return a22.rows(); }
    std::size_t inputs() const { return b.cols(); }

    /// Physical-time system with the 1/epsilon factor folded into the fast
    /// blocks. Requires epsilon > 0.
    PartitionedLinearSystem realized() const
    {
        if (!(epsilon > 0.0))
            throw InvalidEpsilon("realized: epsilon must be positive");
        if (epsilon == 1.0) return *this;
        const double inv = 1.0 / epsilon;
        return PartitionedLinearSystem(a11, a12, a21 * inv, a22 * inv, b * inv, 1.0);
    }
};

/// Assembled physical-time state matrix [[A11, A12], [A21, A22]] / eps on the
/// fast rows.
inline RealMatrix full_matrix(const PartitionedLinearSystem& sys)
{
    PartitionedLinearSystem r = sys.realized();
    return block2x2(r.a11, r.a12, r.a21, r.a22);
}

/// Quasi-steady-state map H = -A22^{-1} A21, so that A21 x + A22 H x = 0.
/// Invariant under epsilon scaling (the 1/eps factors cancel).
inline RealMatrix qss_matrix(const PartitionedLinearSystem& sys)
{
    return -solve_linear(sys.a22, sys.a21);
}

struct BoundaryLayerSystem {
    RealMatrix slow_block; // A11 - A12 A22^{-1} A21
    RealMatrix coupling;   // A12
    RealMatrix sigma1;     // eps [A22^{-1} A21 A11 - A22^{-1} A21 A12 A22^{-1} A21]
    RealMatrix sigma2;     // eps [A22^{-1} A21 A12]
    RealMatrix a22;
};

/// Boundary-layer coordinates (x, y = z - h(x)):
///   dx/dt       = (A11 - A12 A22^{-1} A21) x + A12 y
///   eps * dy/dt = Sigma1 x + (A22 + Sigma2) y
/// Both Sigma blocks vanish as eps -> 0, leaving the reduced pair.
inline BoundaryLayerSystem boundary_transform(const PartitionedLinearSystem& sys)
{
    RealMatrix k = solve_linear(sys.a22, sys.a21); // A22^{-1} A21
    RealMatrix ka11 = k * sys.a11;
    RealMatrix ka12 = k * sys.a12;
    return BoundaryLayerSystem{
        sys.a11 - sys.a12 * k,
        sys.a12,
        (ka11 - ka12 * k) * sys.epsilon,
        ka12 * sys.epsilon,
        sys.a22,
    };
}

struct ReducedSystem {
    RealMatrix slow; // A11 - A12 A22^{-1} A21
    RealMatrix fast; // A22 (in the stretched timescale)
};

inline ReducedSystem reduced_system(const PartitionedLinearSystem& sys)
{
    RealMatrix k = solve_linear(sys.a22, sys.a21);
    return ReducedSystem{sys.a11 - sys.a12 * k, sys.a22};
}

/// View the system at timescale ratio eps. Stored blocks are untouched; the
/// realized fast blocks become (1/eps) * {A21, A22, B}. Exactly reversible.
inline PartitionedLinearSystem scale_epsilon(const PartitionedLinearSystem& sys, double eps)
{
    if (!(eps > 0.0) || !std::isfinite(eps))
        throw InvalidEpsilon("scale_epsilon: eps must be positive");
    PartitionedLinearSystem out = sys;
    out.epsilon = eps;
    return out;
}

} // namespace spsim
