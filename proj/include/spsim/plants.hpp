#pragma once

// Concrete closed-loop plants.
//
// Buck converter: averaged dc-dc model with an outer capacitor-voltage PI and
// an inner inductor-current PI. States x = (v_C, zeta_vC), z = (i_L, zeta_iL);
// the injection v adds to the inner-loop output u.
//
// PMSM active rectifier: field-oriented generator model in the dq frame with
// an outer dc-bus voltage PI and inner d/q current PIs with decoupling.
// States x = (v_dc, zeta_vdc), z = (i_d, zeta_id, i_q, zeta_iq); the injection
// v = (v_d, v_q) adds to the duty commands, entering the current dynamics
// through B = [[v_dc/(2 L_d), 0], [0, 0], [0, v_dc/(2 L_q)], [0, 0]].

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "spsim/config.hpp"
#include "spsim/densemath.hpp"
#include "spsim/errors.hpp"
#include "spsim/plant_model.hpp"
#include "spsim/senscond.hpp"
#include "spsim/sptheory.hpp"

namespace spsim {

// ---------------------------------------------------------------------------
// Buck converter
// ---------------------------------------------------------------------------

struct BuckParams {
    double r_load;  // ohm
    double c_out;   // F
    double l_ind;   // H
    double v_in;    // V (duty saturation ceiling; analysis is unsaturated)
    double kp_v, ki_v; // outer voltage PI [A/V, A/(V s)]
    double kp_i, ki_i; // inner current PI [V/A, V/(A s)]

    void validate() const
    {
        if (!(r_load > 0.0) || !(c_out > 0.0) || !(l_ind > 0.0) || !(v_in > 0.0))
            throw InvalidParams("buck: electrical parameters must be positive");
        if (kp_v < 0.0 || ki_v < 0.0 || kp_i < 0.0 || ki_i < 0.0)
            throw InvalidParams("buck: PI gains must be nonnegative");
    }

    static BuckParams from_keyvalues(const KeyValueFile& kv)
    {
        BuckParams p{kv.number("r-load"), kv.number("c-out"), kv.number("l-ind"),
                     kv.number("v-in"),   kv.number("kp-v"),  kv.number("ki-v"),
                     kv.number("kp-i"),   kv.number("ki-i")};
        p.validate();
        return p;
    }
};

struct BuckSystem {
    PartitionedLinearSystem sys;
    Vec slow_ref; // coefficient of v_C^r in dx/dt
    Vec fast_ref; // coefficient of v_C^r in dz/dt
};

/// Closed-loop partitioned model of the cascaded-PI buck converter plus the
/// reference-injection vectors multiplying v_C^r.
inline BuckSystem buck_closedloop(const BuckParams& p)
{
    p.validate();
    const double rc = p.r_load * p.c_out;
    RealMatrix a11{{-1.0 / rc, 0.0}, {-1.0, 0.0}};
    RealMatrix a12{{1.0 / p.c_out, 0.0}, {0.0, 0.0}};
    RealMatrix a21{{(-1.0 - p.kp_i * p.kp_v) / p.l_ind, p.kp_i * p.ki_v / p.l_ind},
                   {-p.kp_v, p.ki_v}};
    RealMatrix a22{{-p.kp_i / p.l_ind, p.ki_i / p.l_ind}, {-1.0, 0.0}};
    RealMatrix b(2, 1, Vec{1.0 / p.l_ind, 0.0});
    return BuckSystem{PartitionedLinearSystem(a11, a12, a21, a22, b),
                      Vec{0.0, 1.0},
                      Vec{p.kp_i * p.kp_v / p.l_ind, p.kp_v}};
}

/// Least-squares conditioning injection for the buck, on a direct scalar
/// route: B+_L = (L, 0) and the first sensitivity row is (-kp_v, ki_v)
/// exactly, so v = L (-kp_v xdot1 + ki_v xdot2).
inline double buck_asc_term(const BuckParams& p, const Vec& x, const Vec& z, double v_c_ref)
{
    p.validate();
    if (!(p.ki_i > 0.0))
        throw SingularMatrix("buck_asc_term: ki-i = 0 makes the fast block singular");
    if (x.size() != 2 || z.size() != 2)
        throw DimensionMismatch("buck_asc_term: expected two slow and two fast states");
    const double xdot1 = -x[0] / (p.r_load * p.c_out) + z[0] / p.c_out;
    const double xdot2 = v_c_ref - x[0];
    return p.l_ind * (-p.kp_v * xdot1 + p.ki_v * xdot2);
}

/// Buck as a generic two-timescale plant, composed from the PI laws rather
/// than the assembled matrices. The optional duty saturation clamps
/// u = d V_in to [0, v_in]; the analytic Jacobians assume the unsaturated
/// region.
inline TwoTimescalePlant make_buck_plant(const BuckParams& params, bool saturate_duty = false)
{
    params.validate();
    auto p = std::make_shared<BuckParams>(params);
    auto loop = std::make_shared<BuckSystem>(buck_closedloop(params));

    TwoTimescalePlant plant;
    plant.n_x = 2;
    plant.n_z = 2;
    plant.n_inputs = 1;
    plant.state_names = {"v_c", "zeta_vc", "i_l", "zeta_il"};
    plant.injection_names = {"v"};
    plant.ref_names = {"v-c-ref"};
    plant.tracked_state = 0;
    plant.tracked_ref = "v-c-ref";

    plant.slow = [p](const Vec& x, const Vec& z, TwoTimescalePlant::Refs refs) {
        return Vec{-x[0] / (p->r_load * p->c_out) + z[0] / p->c_out, refs[0] - x[0]};
    };
    plant.fast = [p, saturate_duty](const Vec& x, const Vec& z, TwoTimescalePlant::Refs refs,
                                    const Vec& v) {
        const double i_ref = p->kp_v * (refs[0] - x[0]) + p->ki_v * x[1];
        double u = p->kp_i * (i_ref - z[0]) + p->ki_i * z[1] + v[0];
        if (saturate_duty) u = std::clamp(u, 0.0, p->v_in);
        return Vec{(-x[0] + u) / p->l_ind, i_ref - z[0]};
    };
    plant.input_matrix = [loop](const Vec&, const Vec&, TwoTimescalePlant::Refs) {
        return loop->sys.b;
    };
    plant.fast_jacobian_x = [loop](const Vec&, const Vec&, TwoTimescalePlant::Refs) {
        return loop->sys.a21;
    };
    plant.fast_jacobian_z = [loop](const Vec&, const Vec&, TwoTimescalePlant::Refs) {
        return loop->sys.a22;
    };
    return plant;
}

// ---------------------------------------------------------------------------
// PMSM with active rectifier
// ---------------------------------------------------------------------------

struct PmsmParams {
    double rs;       // stator resistance, ohm
    double ld, lq;   // dq inductances, H
    double lambda_m; // PM flux linkage, Wb
    int poles;       // pole count (even)
    double speed_rpm;
    double r_load;   // damping resistor, ohm
    double c_bus;    // dc bus capacitance, F
    double kp_v, ki_v;     // outer dc-voltage PI
    double kp_id, ki_id;   // d-axis current PI
    double kp_iq, ki_iq;   // q-axis current PI
    double i_load;   // constant-current load, A

    double omega_m() const { return 2.0 * M_PI * speed_rpm / 60.0; }
    double omega_r() const { return 0.5 * static_cast<double>(poles) * omega_m(); }

    void validate() const
    {
        if (poles < 2 || poles % 2 != 0)
            throw InvalidParams("pmsm: poles must be even and >= 2");
        if (!(rs > 0.0) || !(ld > 0.0) || !(lq > 0.0) || !(r_load > 0.0) || !(c_bus > 0.0))
            throw InvalidParams("pmsm: resistances, inductances, capacitance must be positive");
        if (lambda_m < 0.0) throw InvalidParams("pmsm: lambda-m must be nonnegative");
        if (kp_v < 0.0 || ki_v < 0.0 || kp_id < 0.0 || ki_id < 0.0 || kp_iq < 0.0 || ki_iq < 0.0)
            throw InvalidParams("pmsm: PI gains must be nonnegative");
        if (!std::isfinite(i_load) || !std::isfinite(speed_rpm))
            throw InvalidParams("pmsm: non-finite parameter");
    }

    static PmsmParams from_keyvalues(const KeyValueFile& kv)
    {
        PmsmParams p{kv.number("rs"),
                     kv.number("ld"),
                     kv.number("lq"),
                     kv.number("lambda-m"),
                     static_cast<int>(kv.number("poles")),
                     kv.number("speed-rpm"),
                     kv.number("r-load"),
                     kv.number("c-bus"),
                     kv.number("kp-v"),
                     kv.number("ki-v"),
                     kv.number("kp-id"),
                     kv.number("ki-id"),
                     kv.number("kp-iq"),
                     kv.number("ki-iq"),
                     kv.number("i-load")};
        p.validate();
        return p;
    }
};

/// Constant-current share of a total load power at bus voltage v: the damping
/// resistor takes v^2/R, the rest is drawn as current.
inline double pmsm_load_current(const PmsmParams& p, double power_w, double v_bus)
{
    if (!(v_bus > 0.0)) throw NonPhysicalState("pmsm: load split requires v_bus > 0");
    return power_w / v_bus - v_bus / p.r_load;
}

struct PmsmDuty {
    double d_d;
    double d_q;
};

/// Outer voltage-loop PI: a sagging bus raises the q-current demand. At the
/// operating points of this model (positive rotation, positive generating
/// i_q) the opposite sign makes the voltage loop positive feedback and the
/// closed loop unstable.
inline double pmsm_iq_reference(const PmsmParams& p, const Vec& x, double v_dc_ref)
{
    return p.kp_v * (v_dc_ref - x[0]) + p.ki_v * x[1];
}

/// Inner current-loop PI outputs with dq decoupling (i_d^r = 0, i_q^r from
/// the outer voltage PI). The conditioning injection is added downstream of
/// these duties.
inline PmsmDuty pmsm_duty(const PmsmParams& p, const Vec& x, const Vec& z, double v_dc_ref)
{
    const double v_dc = x[0];
    if (!(v_dc > 0.0))
        throw NonPhysicalState("pmsm: duty computation requires v_dc > 0");
    const double wr = p.omega_r();
    const double i_q_ref = pmsm_iq_reference(p, x, v_dc_ref);
    const double d_d = 2.0 / v_dc * (p.kp_id * (0.0 - z[0]) + p.ki_id * z[1] - wr * p.lq * z[2]);
    const double d_q = 2.0 / v_dc * (p.kp_iq * (i_q_ref - z[2]) + p.ki_iq * z[3]
                                     + wr * p.ld * z[0] + wr * p.lambda_m);
    return PmsmDuty{d_d, d_q};
}

/// Slow bus dynamics: dv_dc/dt and the outer integrator.
inline Vec pmsm_slow(const PmsmParams& p, const Vec& x, const Vec& z, double d_d, double d_q,
                     double v_dc_ref, double i_load)
{
    const double v_dc = x[0];
    if (!(v_dc > 0.0)) throw NonPhysicalState("pmsm: v_dc must be positive");
    const double vdot = -v_dc / (p.r_load * p.c_bus)
                      + 3.0 / (4.0 * p.c_bus) * (d_d * z[0] + d_q * z[2])
                      - i_load / p.c_bus;
    return Vec{vdot, v_dc_ref - v_dc};
}

/// Closed-loop fast field with zero injection: machine dq dynamics with the
/// PI duties substituted in.
inline Vec pmsm_fast_baseline(const PmsmParams& p, const Vec& x, const Vec& z, double v_dc_ref)
{
    const double v_dc = x[0];
    PmsmDuty d = pmsm_duty(p, x, z, v_dc_ref);
    const double wr = p.omega_r();
    const double i_q_ref = pmsm_iq_reference(p, x, v_dc_ref);
    const double did = -p.rs / p.ld * z[0] + wr * p.lq / p.ld * z[2]
                     + d.d_d * v_dc / (2.0 * p.ld);
    const double diq = -p.rs / p.lq * z[2] - wr * p.ld / p.lq * z[0] - wr * p.lambda_m / p.lq
                     + d.d_q * v_dc / (2.0 * p.lq);
    return Vec{did, 0.0 - z[0], diq, i_q_ref - z[2]};
}

/// Injection gain B(v_dc): the duty-level terms (v_d, v_q) reach the current
/// dynamics scaled by v_dc/(2 L).
inline RealMatrix pmsm_input_matrix(const PmsmParams& p, double v_dc)
{
    if (!(v_dc > 0.0)) throw NonPhysicalState("pmsm: input matrix requires v_dc > 0");
    RealMatrix b(4, 2);
    b(0, 0) = v_dc / (2.0 * p.ld);
    b(2, 1) = v_dc / (2.0 * p.lq);
    return b;
}

/// dz/dt = g(x, z) + B(v_dc) v.
inline Vec pmsm_fast_closedloop(const PmsmParams& p, const Vec& x, const Vec& z,
                                double v_dc_ref, const Vec& v)
{
    Vec g = pmsm_fast_baseline(p, x, z, v_dc_ref);
    if (v.size() != 2) throw DimensionMismatch("pmsm: injection must have two components");
    return add(g, pmsm_input_matrix(p, x[0]) * v);
}

struct PmsmJacobians {
    RealMatrix wrt_x; // 4 x 2
    RealMatrix wrt_z; // 4 x 4
};

/// Analytic Jacobians of the composed closed-loop fast field. The 2/v_dc
/// duty factors cancel against the v_dc/(2 L) plant gains, so both blocks
/// are constant; the only x-dependence is the outer PI inside i_q^r.
inline PmsmJacobians pmsm_jacobians(const PmsmParams& p, const Vec& x, const Vec& /*z*/)
{
    if (!(x[0] > 0.0)) throw NonPhysicalState("pmsm: Jacobians require v_dc > 0");
    RealMatrix jx(4, 2);
    jx(2, 0) = -p.kp_iq / p.lq * p.kp_v; // d(i_q dot)/d(v_dc) through i_q^r
    jx(2, 1) = p.kp_iq / p.lq * p.ki_v;
    jx(3, 0) = -p.kp_v;                  // d(zeta_iq dot)/d(v_dc)
    jx(3, 1) = p.ki_v;

    RealMatrix jz(4, 4);
    jz(0, 0) = -(p.rs + p.kp_id) / p.ld;
    jz(0, 1) = p.ki_id / p.ld;
    jz(1, 0) = -1.0;
    jz(2, 2) = -(p.rs + p.kp_iq) / p.lq;
    jz(2, 3) = p.ki_iq / p.lq;
    jz(3, 2) = -1.0;
    return PmsmJacobians{std::move(jx), std::move(jz)};
}

/// PMSM rectifier as a generic two-timescale plant. References: the dc bus
/// voltage setpoint and the constant-current load.
inline TwoTimescalePlant make_pmsm_plant(const PmsmParams& params)
{
    params.validate();
    auto p = std::make_shared<PmsmParams>(params);

    TwoTimescalePlant plant;
    plant.n_x = 2;
    plant.n_z = 4;
    plant.n_inputs = 2;
    plant.state_names = {"v_dc", "zeta_vdc", "i_d", "zeta_id", "i_q", "zeta_iq"};
    plant.injection_names = {"v_d", "v_q"};
    plant.ref_names = {"v-dc-ref", "i-load"};
    plant.tracked_state = 0;
    plant.tracked_ref = "v-dc-ref";

    plant.slow = [p](const Vec& x, const Vec& z, TwoTimescalePlant::Refs refs) {
        PmsmDuty d = pmsm_duty(*p, x, z, refs[0]);
        return pmsm_slow(*p, x, z, d.d_d, d.d_q, refs[0], refs[1]);
    };
    plant.fast = [p](const Vec& x, const Vec& z, TwoTimescalePlant::Refs refs, const Vec& v) {
        return pmsm_fast_closedloop(*p, x, z, refs[0], v);
    };
    plant.input_matrix = [p](const Vec& x, const Vec&, TwoTimescalePlant::Refs) {
        return pmsm_input_matrix(*p, x[0]);
    };
    plant.fast_jacobian_x = [p](const Vec& x, const Vec& z, TwoTimescalePlant::Refs) {
        return pmsm_jacobians(*p, x, z).wrt_x;
    };
    plant.fast_jacobian_z = [p](const Vec& x, const Vec& z, TwoTimescalePlant::Refs) {
        return pmsm_jacobians(*p, x, z).wrt_z;
    };
    plant.equilibrium_guess = [](TwoTimescalePlant::Refs refs) {
        return Vec{refs[0], 0.0, 0.0, 0.0, 0.0, 0.0};
    };
    return plant;
}

// ---------------------------------------------------------------------------
// Custom linear plant
// ---------------------------------------------------------------------------

/// Wrap a partitioned linear system (realized at its epsilon) as an
/// autonomous plant.
inline TwoTimescalePlant make_linear_plant(const PartitionedLinearSystem& system)
{
    auto sys = std::make_shared<PartitionedLinearSystem>(system.realized());

    TwoTimescalePlant plant;
    plant.n_x = sys->nx();
    plant.n_z = sys->nz();
    plant.n_inputs = sys->inputs();
    for (std::size_t i = 0; i < plant.n_x; ++i)
        plant.state_names.push_back("x" + std::to_string(i + 1));
    for (std::size_t i = 0; i < plant.n_z; ++i)
        plant.state_names.push_back("z" + std::to_string(i + 1));
    for (std::size_t i = 0; i < plant.n_inputs; ++i)
        plant.injection_names.push_back("v" + std::to_string(i + 1));

    plant.slow = [sys](const Vec& x, const Vec& z, TwoTimescalePlant::Refs) {
        return add(sys->a11 * x, sys->a12 * z);
    };
    plant.fast = [sys](const Vec& x, const Vec& z, TwoTimescalePlant::Refs, const Vec& v) {
        return add(add(sys->a21 * x, sys->a22 * z), sys->b * v);
    };
    plant.input_matrix = [sys](const Vec&, const Vec&, TwoTimescalePlant::Refs) {
        return sys->b;
    };
    plant.fast_jacobian_x = [sys](const Vec&, const Vec&, TwoTimescalePlant::Refs) {
        return sys->a21;
    };
    plant.fast_jacobian_z = [sys](const Vec&, const Vec&, TwoTimescalePlant::Refs) {
        return sys->a22;
    };
    return plant;
}

/// Parse a partitioned linear system from keys n-x, n-z, m, a11..a22, b
/// (comma-separated row-major lists) and optional epsilon.
inline PartitionedLinearSystem parse_linear_system(const KeyValueFile& kv)
{
    const auto nx = static_cast<std::size_t>(kv.number("n-x"));
    const auto nz = static_cast<std::size_t>(kv.number("n-z"));
    const auto m = static_cast<std::size_t>(kv.number("m"));
    auto block = [&](const std::string& key, std::size_t r, std::size_t c) {
        Vec entries = kv.numbers(key);
        if (entries.size() != r * c)
            throw ParseError(kv.name() + ": key '" + key + "' needs " + std::to_string(r * c)
                             + " entries, got " + std::to_string(entries.size()));
        return RealMatrix(r, c, std::move(entries));
    };
    return PartitionedLinearSystem(block("a11", nx, nx), block("a12", nx, nz),
                                   block("a21", nz, nx), block("a22", nz, nz),
                                   block("b", nz, m), kv.number_or("epsilon", 1.0));
}

} // namespace spsim
