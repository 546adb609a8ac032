// Acceptance suite: end-to-end checks of the toolkit against the recorded
// bench values and the structural guarantees of the conditioning scheme.
// Prints one PASS/FAIL line per criterion; exits with the failure count.

#include "spsim/cli.hpp"
#include "spsim/plants.hpp"
#include "spsim/senscond.hpp"
#include "spsim/simkit.hpp"
#include "spsim/sptheory.hpp"

#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

using namespace spsim;

namespace {

struct Checker {
    std::vector<std::string> problems;
    std::vector<std::string> notes;

    void require(bool ok, const std::string& what)
    {
        if (!ok) problems.push_back(what);
    }
    void note(const std::string& what) { notes.push_back(what); }
};

struct Harness {
    int failures = 0;

    void criterion(int number, const std::string& title, double runtime_limit_s,
                   const std::function<void(Checker&)>& body)
    {
        Checker c;
        const auto start = std::chrono::steady_clock::now();
        try {
            body(c);
        } catch (const std::exception& e) {
            c.problems.push_back(std::string("exception: ") + e.what());
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (runtime_limit_s > 0.0 && elapsed > runtime_limit_s)
            c.problems.push_back("runtime " + std::to_string(elapsed) + " s exceeds "
                                 + std::to_string(runtime_limit_s) + " s");
        const bool pass = c.problems.empty();
        std::printf("[%s] criterion %d: %s (%.2f s)\n", pass ? "PASS" : "FAIL", number,
                    title.c_str(), elapsed);
        for (const auto& n : c.notes) std::printf("       note: %s\n", n.c_str());
        for (const auto& p : c.problems) std::printf("       fail: %s\n", p.c_str());
        if (!pass) ++failures;
    }
};

constexpr double kR = 18.6, kC = 510e-6, kL = 1e-3;

BuckParams buck_bench() { return BuckParams{kR, kC, kL, 100.0, 1.0, 30.0, 1.0, 700.0}; }

BuckParams buck_gains(double kpv, double kiv, double kpi, double kii)
{
    return BuckParams{kR, kC, kL, 100.0, kpv, kiv, kpi, kii};
}

PmsmParams pmsm_bench()
{
    return PmsmParams{5.3e-3, 0.09e-3, 0.255e-3, 0.0385, 12, 8000.0,
                      50.0,   1e-3,    2.0,      1000.0, 0.5, 2.0, 0.5, 2.0, 51.2};
}

struct GainRow {
    double kpv, kiv, kpi, kii;
    std::vector<Complex> no_sc;
    std::vector<Complex> with_sc;
};

std::vector<GainRow> gain_study_rows()
{
    return {
        {0.94, 970.0, 2.0, 2000.0,
         {{-474.0, 2433.0}, {-474.0, -2433.0}, {-579.0, 532.0}, {-579.0, -532.0}},
         {{-1512.0, 2019.0}, {-1512.0, -2019.0}, {-463.0, 618.0}, {-463.0, -618.0}}},
        {0.7, 574.0, 3.0, 4500.0,
         {{-1000.0, 2670.0}, {-1000.0, -2670.0}, {-544.0, 570.0}, {-544.0, -570.0}},
         {{-1755.0, 2213.0}, {-1755.0, -2213.0}, {-495.0, 624.0}, {-495.0, -624.0}}},
        {0.45, 255.0, 10.0, 5e4,
         {{-4572.0, 5639.0}, {-4572.0, -5639.0}, {-481.0, 493.0}, {-481.0, -493.0}},
         {{-5021.0, 5211.0}, {-5021.0, -5211.0}, {-480.0, 498.0}, {-480.0, -498.0}}},
    };
}

void check_against_table(Checker& c, const std::string& label,
                         const std::vector<Complex>& got, const std::vector<Complex>& want)
{
    if (got.size() != want.size()) {
        c.require(false, label + ": spectrum size mismatch");
        return;
    }
    for (const auto& [i, j] : match_nearest(got, want)) {
        const double tol = std::max(0.01 * std::abs(want[j]), 1.0);
        const bool ok = std::abs(got[i].real() - want[j].real()) <= tol
                        && std::abs(got[i].imag() - want[j].imag()) <= tol;
        c.require(ok, label + ": computed " + fmt6(got[i].real()) + (got[i].imag() < 0 ? "-" : "+")
                          + fmt6(std::abs(got[i].imag())) + "j vs recorded "
                          + fmt6(want[j].real()) + (want[j].imag() < 0 ? "-" : "+")
                          + fmt6(std::abs(want[j].imag())) + "j");
    }
}

PartitionedLinearSystem random_system(std::mt19937& gen, std::size_t nx, std::size_t nz,
                                      std::size_t m)
{
    return PartitionedLinearSystem(oracles::random_stable(gen, nx),
                                   oracles::random_matrix(gen, nx, nz),
                                   oracles::random_matrix(gen, nz, nx),
                                   oracles::random_stable(gen, nz),
                                   oracles::random_matrix(gen, nz, m));
}

ScenarioConfig buck_fig_scenario(const std::string& mode)
{
    ScenarioConfig sc;
    sc.plant_id = PlantId::buck;
    sc.plant_params = buck_bench();
    sc.mode = mode;
    sc.dt = 5e-6;
    sc.horizon = 0.1;
    sc.initial_refs["v-c-ref"] = 50.0;
    sc.events.push_back(Event{0.05, "v-c-ref", 75.0});
    return sc;
}

ScenarioConfig pmsm_fig_scenario(const std::string& mode)
{
    ScenarioConfig sc;
    sc.plant_id = PlantId::pmsm;
    PmsmParams p = pmsm_bench();
    p.i_load = pmsm_load_current(p, 33480.0, 540.0); // 51.2 A
    sc.plant_params = p;
    sc.mode = mode;
    sc.dt = 1e-6;
    sc.horizon = 0.1;
    sc.initial_refs["v-dc-ref"] = 540.0;
    sc.initial_refs["i-load"] = p.i_load;
    sc.events.push_back(Event{0.05, "i-load", pmsm_load_current(p, 18900.0, 540.0)});
    return sc;
}

} // namespace

int main()
{
    Harness h;

    h.criterion(1, "gain-study eigenvalue reproduction (three rows, both spectra)", 1.0,
                [](Checker& c) {
        for (const GainRow& row : gain_study_rows()) {
            PartitionedLinearSystem sys =
                buck_closedloop(buck_gains(row.kpv, row.kiv, row.kpi, row.kii)).sys;
            EigenReport report = eigen_report(sys);
            const std::string tag = "gains " + fmt6(row.kpv) + "," + fmt6(row.kiv) + ","
                                    + fmt6(row.kpi) + "," + fmt6(row.kii);
            check_against_table(c, tag + " no-sc", report.full_no_conditioning, row.no_sc);
            check_against_table(c, tag + " with-sc", report.full_with_conditioning, row.with_sc);

            // eigenvalue sums against the matrix traces
            Complex sum_no(0, 0), sum_with(0, 0);
            for (const auto& l : report.full_no_conditioning) sum_no += l;
            for (const auto& l : report.full_with_conditioning) sum_with += l;
            const double tr_no = full_matrix(sys).trace();
            const double tr_with = closed_loop_asc(sys).trace();
            c.require(std::abs(sum_no.real() - tr_no) <= 1e-6 * std::max(1.0, std::abs(tr_no)),
                      tag + ": no-sc eigenvalue sum vs trace");
            c.require(std::abs(sum_with.real() - tr_with)
                          <= 1e-6 * std::max(1.0, std::abs(tr_with)),
                      tag + ": with-sc eigenvalue sum vs trace " + fmt6(tr_with));
        }
    });

    h.criterion(2, "exact conditioning spectrum equals the reduced union (50 systems)", 5.0,
                [](Checker& c) {
        auto gen = oracles::rng(101);
        for (int trial = 0; trial < 50; ++trial) {
            const std::size_t nx = 2 + trial % 2, nz = 2 + (trial / 2) % 2;
            PartitionedLinearSystem sys = random_system(gen, nx, nz, nz);
            RealMatrix a_sc = closed_loop_exact(sys);
            auto got = eigenvalues(a_sc);
            auto want = eigen_report(sys).reduced_union;
            const double dist = oracles::optimal_match_max_distance(got, want);
            c.require(dist <= 1e-6, "trial " + std::to_string(trial)
                                        + ": spectrum distance " + fmt6(dist));

            RealMatrix h_map = qss_matrix(sys);
            RealMatrix t = block2x2(RealMatrix::identity(nx), RealMatrix(nx, nz), h_map,
                                    RealMatrix::identity(nz));
            RealMatrix transformed = solve_linear(t, a_sc * t);
            double lower_left = 0.0;
            for (std::size_t i = 0; i < nz; ++i)
                for (std::size_t j = 0; j < nx; ++j)
                    lower_left = std::max(lower_left, std::abs(transformed(nx + i, j)));
            c.require(lower_left <= 1e-9, "trial " + std::to_string(trial)
                                              + ": lower-left block " + fmt6(lower_left));
        }
    });

    h.criterion(3, "steady-state and residual-bound guarantees (buck + 20 systems)", 10.0,
                [](Checker& c) {
        auto gen = oracles::rng(102);

        // buck with its reference forcing
        {
            BuckSystem loop = buck_closedloop(buck_bench());
            Vec forcing = concat(scaled(loop.slow_ref, 50.0), scaled(loop.fast_ref, 50.0));
            Vec eq_plain = solve_linear(full_matrix(loop.sys), scaled(forcing, -1.0));
            RealMatrix bl = pinv_left(loop.sys.b);
            Vec extra = loop.sys.b
                        * (bl * solve_linear(loop.sys.a22,
                                             loop.sys.a21 * scaled(loop.slow_ref, 50.0)));
            Vec forcing_asc = forcing;
            for (std::size_t i = 0; i < 2; ++i) forcing_asc[2 + i] -= extra[i];
            Vec eq_asc = solve_linear(closed_loop_asc(loop.sys), scaled(forcing_asc, -1.0));
            c.require(norm2(sub(eq_plain, eq_asc)) <= 1e-9 * std::max(1.0, norm2(eq_plain)),
                      "buck: conditioned equilibrium differs");

            Vec x_star = slice(eq_plain, 0, 2), z_star = slice(eq_plain, 2, 2);
            Vec f_star = add(add(loop.sys.a11 * x_star, loop.sys.a12 * z_star),
                             scaled(loop.slow_ref, 50.0));
            auto res = solve_injection(loop.sys.b,
                                       conditioning_target(sensitivity_linear(loop.sys), f_star),
                                       SensitivityMode::approximate());
            c.require(res.residual_norm <= 1e-9 * std::max(1.0, norm2(eq_plain)),
                      "buck: residual nonzero at equilibrium");

            ScenarioConfig sc = buck_fig_scenario("approx");
            Trajectory traj = integrate(sc);
            const double estimate = error_bound_estimate(loop.sys);
            for (std::size_t k = 0; k < traj.size(); ++k) {
                if (traj.residual_norms[k]
                    > estimate * traj.slow_derivative_norms[k] * (1.0 + 1e-9) + 1e-12) {
                    c.require(false, "buck: residual bound violated at sample "
                                         + std::to_string(k));
                    break;
                }
            }
        }

        for (int trial = 0; trial < 20; ++trial) {
            const std::size_t nx = 2, nz = 2 + trial % 3;
            const std::size_t m = 1 + trial % (nz - 1); // tall B: m < nz
            PartitionedLinearSystem sys = random_system(gen, nx, nz, m);
            const std::string tag = "trial " + std::to_string(trial);

            Vec r = oracles::random_vec(gen, nx + nz);
            Vec r_x = slice(r, 0, nx);
            Vec eq_plain = solve_linear(full_matrix(sys), scaled(r, -1.0));
            RealMatrix bl = pinv_left(sys.b);
            Vec extra = sys.b * (bl * solve_linear(sys.a22, sys.a21 * r_x));
            Vec r_asc = r;
            for (std::size_t i = 0; i < nz; ++i) r_asc[nx + i] -= extra[i];
            Vec eq_asc = solve_linear(closed_loop_asc(sys), scaled(r_asc, -1.0));
            c.require(norm2(sub(eq_plain, eq_asc)) <= 1e-9 * std::max(1.0, norm2(eq_plain)),
                      tag + ": equilibria differ");

            // residual vanishes at the equilibrium
            Vec x_star = slice(eq_plain, 0, nx), z_star = slice(eq_plain, nx, nz);
            Vec f_star = add(add(sys.a11 * x_star, sys.a12 * z_star), r_x);
            auto res = solve_injection(sys.b,
                                       conditioning_target(sensitivity_linear(sys), f_star),
                                       SensitivityMode::approximate());
            c.require(res.residual_norm <= 1e-9 * std::max(1.0, norm2(eq_plain)),
                      tag + ": residual nonzero at equilibrium");
            Vec e0 = residual_error_matrixform(sys, Vec(nx, 0.0), Vec(nz, 0.0));
            c.require(norm2(e0) == 0.0, tag + ": matrix-form residual nonzero at origin");

            // bound along a simulated trajectory
            TwoTimescalePlant plant = make_linear_plant(sys);
            IntegrationSetup setup;
            setup.mode = SensitivityMode::approximate();
            setup.initial_state = oracles::random_vec(gen, nx + nz);
            setup.dt = 1e-3;
            setup.horizon = 1.0;
            Trajectory traj = integrate_plant(plant, setup);
            const double estimate = error_bound_estimate(sys);
            for (std::size_t k = 0; k < traj.size(); ++k) {
                if (traj.residual_norms[k]
                    > estimate * traj.slow_derivative_norms[k] * (1.0 + 1e-9) + 1e-12) {
                    c.require(false, tag + ": residual bound violated at sample "
                                         + std::to_string(k));
                    break;
                }
            }
        }
    });

    h.criterion(4, "error-estimate determination: SVD route vs closed form", 0.0,
                [](Checker& c) {
        PartitionedLinearSystem sys = buck_closedloop(buck_bench()).sys;
        const double svd_route = error_bound_estimate(sys);

        // scalar-arithmetic oracle: adjugate inverse, diag(0,1) projector,
        // closed-form 2x2 singular values
        RealMatrix k = oracles::adjugate_inverse_2x2(sys.a22) * sys.a21;
        RealMatrix projected{{0.0, 0.0}, {k(1, 0), k(1, 1)}};
        const double oracle = oracles::singular_values_2x2(projected).first;

        c.require(std::abs(svd_route - oracle) <= 1e-12,
                  "routes disagree: " + fmt6(svd_route) + " vs " + fmt6(oracle));
        c.note("computed estimate " + fmt17(svd_route) + " (= 1/700); oracle "
               + fmt17(oracle));
        c.note("previously reported value 0.0333... recorded for comparison, not asserted");
    });

    h.criterion(5, "timescale trend: gap ratio up, displacement down, impact linear in eps", 0.0,
                [](Checker& c) {
        std::vector<double> gaps, displacements;
        for (const GainRow& row : gain_study_rows()) {
            PartitionedLinearSystem sys =
                buck_closedloop(buck_gains(row.kpv, row.kiv, row.kpi, row.kii)).sys;
            EigenReport report = eigen_report(sys);
            gaps.push_back(report.gap_ratio);
            displacements.push_back(spectral_displacement(report.full_with_conditioning,
                                                          report.full_no_conditioning));
        }
        c.note("gap ratios " + fmt6(gaps[0]) + " < " + fmt6(gaps[1]) + " < " + fmt6(gaps[2]));
        c.note("displacements " + fmt6(displacements[0]) + " > " + fmt6(displacements[1])
               + " > " + fmt6(displacements[2]));
        c.require(gaps[0] < gaps[1] && gaps[1] < gaps[2], "gap ratio not strictly increasing");
        c.require(displacements[0] > displacements[1] && displacements[1] > displacements[2],
                  "spectral displacement not strictly decreasing");

        auto gen = oracles::rng(105);
        PartitionedLinearSystem sys = random_system(gen, 2, 3, 1);
        Vec probe = oracles::random_vec(gen, 5);
        auto sweep = epsilon_sweep(sys, {1.0, 0.1, 0.01, 0.001}, probe);
        for (std::size_t i = 0; i + 1 < sweep.size(); ++i) {
            const double ratio = sweep[i].second / sweep[i + 1].second;
            c.require(std::abs(ratio - 10.0) <= 1e-6 * 10.0,
                      "impact ratio per decade " + fmt6(ratio));
        }
    });

    h.criterion(6, "exact conditioning decouples the boundary layer (1e-6 over 5 tau)", 0.0,
                [](Checker& c) {
        auto gen = oracles::rng(106);
        RealMatrix a11 = oracles::random_stable(gen, 2);
        RealMatrix a12 = oracles::random_matrix(gen, 2, 2);
        RealMatrix a21 = oracles::random_matrix(gen, 2, 2);
        RealMatrix a22 = oracles::random_stable(gen, 2) * 30.0;
        RealMatrix b = oracles::random_stable(gen, 2);
        PartitionedLinearSystem sys(a11, a12, a21, a22, b);

        double fast_rate = std::numeric_limits<double>::infinity();
        for (const auto& l : eigenvalues(a22))
            fast_rate = std::min(fast_rate, std::abs(l.real()));
        const double tau = 1.0 / fast_rate;

        TwoTimescalePlant plant = make_linear_plant(sys);
        IntegrationSetup setup;
        setup.mode = SensitivityMode::exact_square();
        setup.initial_state = oracles::random_vec(gen, 4);
        setup.dt = tau / 1000.0;
        setup.horizon = 5.0 * tau;
        Trajectory traj = integrate_plant(plant, setup);

        RealMatrix h_map = qss_matrix(sys);
        Vec y0 = sub(slice(setup.initial_state, 2, 2), h_map * slice(setup.initial_state, 0, 2));
        const double y0_norm = norm2(y0);
        double worst = 0.0;
        for (std::size_t k = 0; k < traj.size(); ++k) {
            Vec y = sub(slice(traj.states[k], 2, 2), h_map * slice(traj.states[k], 0, 2));
            Vec y_exact = oracles::expm(a22, traj.times[k]) * y0;
            worst = std::max(worst, norm2(sub(y, y_exact)));
        }
        c.note("max boundary-layer deviation " + fmt6(worst) + " vs ||y0|| " + fmt6(y0_norm));
        c.require(worst <= 1e-6 * y0_norm, "boundary layer deviates beyond 1e-6 relative");
    });

    h.criterion(7, "buck reference step: conditioned run strictly better (ISE, settling)", 5.0,
                [](Checker& c) {
        Trajectory plain = integrate(buck_fig_scenario("none"));
        Trajectory conditioned = integrate(buck_fig_scenario("approx"));
        RefSchedule sched;
        sched.initial = 50.0;
        sched.steps = {{0.05, 75.0}};
        TransientMetrics m_plain = metrics(plain, 0, sched);
        TransientMetrics m_cond = metrics(conditioned, 0, sched);
        c.note("ise " + fmt6(m_cond.ise) + " (conditioned) vs " + fmt6(m_plain.ise)
               + " (plain)");
        c.note("settling " + fmt6(m_cond.settling_time) + " s vs "
               + fmt6(m_plain.settling_time) + " s; overshoot " + fmt6(m_cond.overshoot_pct)
               + "% vs " + fmt6(m_plain.overshoot_pct) + "%");

        // independent route: exact infinite-horizon error energy of the two
        // LTI closed loops from Lyapunov equations, u0 = step between the
        // shared equilibria
        BuckSystem loop = buck_closedloop(buck_bench());
        RealMatrix a_plain = full_matrix(loop.sys);
        RealMatrix a_cond = closed_loop_asc(loop.sys);
        auto equilibrium = [&](double vref) {
            Vec forcing = concat(scaled(loop.slow_ref, vref), scaled(loop.fast_ref, vref));
            return solve_linear(a_plain, scaled(forcing, -1.0));
        };
        Vec u0 = sub(equilibrium(50.0), equilibrium(75.0));
        RealMatrix q(4, 4);
        q(0, 0) = 1.0;
        const double exact_plain = dot(u0, oracles::lyapunov(a_plain, q) * u0);
        const double exact_cond = dot(u0, oracles::lyapunov(a_cond, q) * u0);
        c.note("exact error energy " + fmt6(exact_cond) + " (conditioned) vs "
               + fmt6(exact_plain) + " (plain)");
        c.require(std::abs(m_plain.ise - exact_plain) <= 0.01 * exact_plain
                      && std::abs(m_cond.ise - exact_cond) <= 0.01 * exact_cond,
                  "simulated ISE disagrees with the Lyapunov route");

        c.require(m_cond.ise < m_plain.ise, "ISE not strictly better with conditioning");
        c.require(m_cond.settling_time < m_plain.settling_time,
                  "settling time not strictly better with conditioning");
    });

    h.criterion(8, "pmsm load step: conditioned bus ISE strictly lower; Jacobians at 1e-4", 60.0,
                [](Checker& c) {
        Trajectory plain = integrate(pmsm_fig_scenario("none"));
        Trajectory conditioned = integrate(pmsm_fig_scenario("approx"));
        RefSchedule sched;
        sched.initial = 540.0;
        TransientMetrics m_plain = metrics(plain, 0, sched);
        TransientMetrics m_cond = metrics(conditioned, 0, sched);
        c.note("v_dc ise " + fmt6(m_cond.ise) + " (conditioned) vs " + fmt6(m_plain.ise)
               + " (plain)");
        c.require(m_cond.ise < m_plain.ise, "bus-voltage ISE not strictly lower");

        PmsmParams p = pmsm_bench();
        auto gen = oracles::rng(108);
        std::uniform_real_distribution<double> v_dist(400.0, 700.0);
        std::uniform_real_distribution<double> i_dist(-200.0, 200.0);
        std::uniform_real_distribution<double> zeta_dist(-5.0, 5.0);
        for (int trial = 0; trial < 100; ++trial) {
            Vec x{v_dist(gen), zeta_dist(gen)};
            Vec z{i_dist(gen), zeta_dist(gen), i_dist(gen), zeta_dist(gen)};
            PmsmJacobians j = pmsm_jacobians(p, x, z);
            auto fd_x = jacobian_fd(
                [&](const Vec& xp) { return pmsm_fast_baseline(p, xp, z, 540.0); }, x);
            auto fd_z = jacobian_fd(
                [&](const Vec& zp) { return pmsm_fast_baseline(p, x, zp, 540.0); }, z);
            const bool ok =
                (fd_x - j.wrt_x).frobenius_norm()
                        <= 1e-4 * std::max(1.0, j.wrt_x.frobenius_norm())
                    && (fd_z - j.wrt_z).frobenius_norm()
                           <= 1e-4 * std::max(1.0, j.wrt_z.frobenius_norm());
            if (!ok) {
                c.require(false, "Jacobian mismatch at trial " + std::to_string(trial));
                break;
            }
        }
    });

    std::printf("%d of 8 criteria passed\n", 8 - h.failures);
    return h.failures;
}
