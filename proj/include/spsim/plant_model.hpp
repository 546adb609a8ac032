#pragma once

// Generic two-timescale plant interface:
//
//   dx/dt = f(x, z, refs)
//   dz/dt = g(x, z, refs) + B(x, z, refs) v
//
// Evaluators are plain std::functions so concrete plants (linear partitioned
// systems, the buck converter cascade, the PMSM rectifier) plug into the same
// conditioning and integration machinery. Analytic Jacobians of g are
// optional; finite differences are used when they are absent.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "spsim/densemath.hpp"

namespace spsim {

struct TwoTimescalePlant {
    std::size_t n_x = 0;
    std::size_t n_z = 0;
    std::size_t n_inputs = 0;

    std::vector<std::string> state_names;     // n_x + n_z entries
    std::vector<std::string> injection_names; // n_inputs entries
    std::vector<std::string> ref_names;       // reference / exogenous input channels

    std::size_t tracked_state = 0; // state index used for transient metrics
    std::string tracked_ref;       // ref channel the tracked state follows (may be empty)

    using Refs = std::span<const double>;

    std::function<Vec(const Vec& x, const Vec& z, Refs refs)> slow;
    std::function<Vec(const Vec& x, const Vec& z, Refs refs, const Vec& v)> fast;
    std::function<RealMatrix(const Vec& x, const Vec& z, Refs refs)> input_matrix;

    // Analytic Jacobians of the v = 0 fast field g; both or neither.
    std::function<RealMatrix(const Vec& x, const Vec& z, Refs refs)> fast_jacobian_x;
    std::function<RealMatrix(const Vec& x, const Vec& z, Refs refs)> fast_jacobian_z;

    // Starting point for equilibrium iteration (defaults to the origin).
    std::function<Vec(Refs refs)> equilibrium_guess;

    bool has_jacobians() const
    {
        return static_cast<bool>(fast_jacobian_x) && static_cast<bool>(fast_jacobian_z);
    }

    std::size_t state_count() const { return n_x + n_z; }
};

} // namespace spsim
