#pragma once

// Command-line front end: eigenstructure analysis, scenario simulation with
// CSV trajectory export, and the gain-sweep study. Exit codes: 0 success,
// 1 runtime/model error, 2 usage or file-parse error. Every error path
// prints a single `error: ...` line to the error stream.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spsim/config.hpp"
#include "spsim/densemath.hpp"
#include "spsim/plants.hpp"
#include "spsim/senscond.hpp"
#include "spsim/simkit.hpp"
#include "spsim/sptheory.hpp"

namespace spsim {

// ---------------------------------------------------------------------------
// Formatting
// ---------------------------------------------------------------------------

/// %.6g formatting; printed values round-trip to the internal ones at six
/// significant digits.
inline std::string fmt6(double x)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

/// Full-precision formatting for CSV payloads (17 significant digits).
inline std::string fmt17(double x)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// Order eigenvalues for printing: by |Re|, then |Im|, negative imaginary
/// first so conjugate pairs sit together.
inline std::vector<Complex> display_order(std::vector<Complex> values)
{
    std::sort(values.begin(), values.end(), [](const Complex& a, const Complex& b) {
        if (std::abs(a.real()) != std::abs(b.real()))
            return std::abs(a.real()) < std::abs(b.real());
        if (std::abs(a.imag()) != std::abs(b.imag()))
            return std::abs(a.imag()) < std::abs(b.imag());
        return a.imag() < b.imag();
    });
    return values;
}

/// Eigenvalue list as `a ± bj` pairs (conjugates grouped) on one line.
inline std::string format_spectrum(const std::vector<Complex>& values)
{
    std::vector<Complex> sorted = display_order(values);
    std::string out;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (!out.empty()) out += "  ";
        const bool paired = i + 1 < sorted.size() && sorted[i].imag() != 0.0
                            && sorted[i + 1].real() == sorted[i].real()
                            && sorted[i + 1].imag() == -sorted[i].imag();
        if (paired) {
            out += fmt6(sorted[i].real()) + " ± " + fmt6(std::abs(sorted[i].imag())) + "j";
            ++i;
        } else if (sorted[i].imag() == 0.0) {
            out += fmt6(sorted[i].real());
        } else {
            out += fmt6(sorted[i].real()) + (sorted[i].imag() < 0 ? " - " : " + ")
                   + fmt6(std::abs(sorted[i].imag())) + "j";
        }
    }
    return out;
}

inline std::string describe_mode(const RealMatrix& b)
{
    const std::string shape = std::to_string(b.rows()) + "x" + std::to_string(b.cols());
    switch (auto_mode(b).kind) {
    case SensitivityMode::Kind::exact_square:
        return "exact (B " + shape + ", square)";
    case SensitivityMode::Kind::exact_wide:
        return "exact via right pseudoinverse (B " + shape + ", wide)";
    case SensitivityMode::Kind::approximate_least_squares:
        return "approximate least-squares (B " + shape + ", tall)";
    default:
        return "none";
    }
}

// ---------------------------------------------------------------------------
// Reports and CSV
// ---------------------------------------------------------------------------

struct AnalysisReport {
    EigenReport eigen;
    double error_bound = 0.0;
    std::string mode_note;
};

inline AnalysisReport analyze_system(const PartitionedLinearSystem& sys)
{
    return AnalysisReport{eigen_report(sys), error_bound_estimate(sys),
                          describe_mode(sys.b)};
}

inline void print_analysis(std::ostream& out, const AnalysisReport& report)
{
    out << "mode: " << report.mode_note << "\n";
    out << "eigenvalues without conditioning:\n  "
        << format_spectrum(report.eigen.full_no_conditioning) << "\n";
    out << "eigenvalues with conditioning:\n  "
        << format_spectrum(report.eigen.full_with_conditioning) << "\n";
    out << "reduced-system union:\n  " << format_spectrum(report.eigen.reduced_union) << "\n";
    out << "gap-ratio: " << fmt6(report.eigen.gap_ratio) << "\n";
    out << "error-bound-estimate: " << fmt6(report.error_bound) << "\n";
}

/// Header `t,<states>,<injections>,residual_norm,slow_deriv_norm`, one row
/// per sample at 17 significant digits, '\n' line endings.
inline void write_trajectory_csv(std::ostream& out, const Trajectory& traj)
{
    out << "t";
    for (const auto& name : traj.state_names) out << "," << name;
    for (const auto& name : traj.injection_names) out << "," << name;
    out << ",residual_norm,slow_deriv_norm\n";
    for (std::size_t k = 0; k < traj.size(); ++k) {
        out << fmt17(traj.times[k]);
        for (double x : traj.states[k]) out << "," << fmt17(x);
        for (double v : traj.injections[k]) out << "," << fmt17(v);
        out << "," << fmt17(traj.residual_norms[k]) << ","
            << fmt17(traj.slow_derivative_norms[k]) << "\n";
    }
}

inline void print_metrics(std::ostream& out, const TransientMetrics& m)
{
    out << "ise: " << fmt6(m.ise) << "\n";
    out << "overshoot: " << fmt6(m.overshoot_pct) << " %\n";
    out << "settling-time-2pct: " << fmt6(m.settling_time) << " s"
        << (m.settled ? "" : " (unsettled at end of horizon)") << "\n";
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

namespace detail {

inline BuckParams apply_gain_override(BuckParams p, const std::string& gains,
                                      const KeyValueFile& kv)
{
    if (gains.empty()) return p;
    Vec g = kv.split_numbers(gains, 0);
    if (g.size() != 4)
        throw ParseError("--gains expects four values kpv,kiv,kpi,kii");
    p.kp_v = g[0];
    p.ki_v = g[1];
    p.kp_i = g[2];
    p.ki_i = g[3];
    p.validate();
    return p;
}

} // namespace detail

inline int cmd_analyze(const std::string& params_file, const std::string& plant,
                       const std::string& gains, std::ostream& out)
{
    KeyValueFile kv = KeyValueFile::parse_file(params_file);
    PartitionedLinearSystem sys = [&] {
        if (plant == "buck")
            return buck_closedloop(detail::apply_gain_override(
                                       BuckParams::from_keyvalues(kv), gains, kv))
                .sys;
        if (plant == "linear") {
            if (!gains.empty())
                throw ParseError("--gains applies to the buck plant only");
            return parse_linear_system(kv);
        }
        throw ParseError("unknown --plant '" + plant + "' (expected buck|linear)");
    }();
    out << "plant: " << plant << "\n";
    print_analysis(out, analyze_system(sys));
    return 0;
}

inline int cmd_simulate(const std::string& scenario_file, const std::string& mode_override,
                        const std::string& out_file, std::ostream& out)
{
    ScenarioConfig sc = ScenarioConfig::from_file(scenario_file);
    if (!mode_override.empty()) sc.mode = mode_override;
    Trajectory traj = integrate(sc);

    std::ofstream file(out_file, std::ios::binary);
    if (!file) throw Error("cannot open output file '" + out_file + "'");
    write_trajectory_csv(file, traj);
    file.close();

    TwoTimescalePlant plant = build_plant(sc);
    RefSchedule sched = tracked_schedule(sc, plant.tracked_ref);
    out << "wrote " << traj.size() << " samples to " << out_file << "\n";
    out << "mode: " << sc.mode << "\n";
    out << "tracked state: " << plant.state_names[plant.tracked_state];
    if (!plant.tracked_ref.empty()) out << " against " << plant.tracked_ref;
    out << "\n";
    print_metrics(out, metrics(traj, plant.tracked_state, sched));
    return 0;
}

inline int cmd_sweep(const std::string& params_file, const std::string& tests_file,
                     std::ostream& out, std::ostream& err)
{
    KeyValueFile kv = KeyValueFile::parse_file(params_file);
    BuckParams base = BuckParams::from_keyvalues(kv);

    std::ifstream tests(tests_file);
    if (!tests) throw ParseError("cannot open tests file '" + tests_file + "'");

    int row = 0;
    int failures = 0;
    std::string line;
    int line_no = 0;
    while (std::getline(tests, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = KeyValueFile::trim(line);
        if (line.empty()) continue;
        ++row;
        try {
            Vec g = kv.split_numbers(line, line_no);
            if (g.size() != 4)
                throw ParseError(tests_file + ":" + std::to_string(line_no)
                                 + ": gain set needs four values kpv,kiv,kpi,kii");
            BuckParams p = base;
            p.kp_v = g[0];
            p.ki_v = g[1];
            p.kp_i = g[2];
            p.ki_i = g[3];
            p.validate();
            PartitionedLinearSystem sys = buck_closedloop(p).sys;
            EigenReport report = eigen_report(sys);
            const double displacement = spectral_displacement(
                report.full_with_conditioning, report.full_no_conditioning);
            out << "test " << row << " | gains " << fmt6(g[0]) << "," << fmt6(g[1]) << ","
                << fmt6(g[2]) << "," << fmt6(g[3]) << " | no-sc: "
                << format_spectrum(report.full_no_conditioning) << " | with-sc: "
                << format_spectrum(report.full_with_conditioning) << " | gap-ratio "
                << fmt6(report.gap_ratio) << " | displacement " << fmt6(displacement)
                << "\n";
        } catch (const Error& e) {
            err << "error: test " << row << ": " << e.what() << "\n";
            ++failures;
        }
    }
    return failures == 0 ? 0 : 1;
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

/// Run the CLI on arguments (program name excluded). Streams are injectable
/// so the whole front end is testable in-process.
inline int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"sensitivity-conditioning feedforward and singular-perturbation "
                 "analysis for cascaded-control converters"};
    app.require_subcommand(1);

    std::string params_file, plant = "buck", gains;
    CLI::App* analyze = app.add_subcommand("analyze", "eigenstructure and error-bound report");
    analyze->add_option("params-file", params_file, "key=value parameter file")->required();
    analyze->add_option("--plant", plant, "plant model: buck|linear");
    analyze->add_option("--gains", gains, "override PI gains: kpv,kiv,kpi,kii");

    std::string scenario_file, mode_override, out_file = "trajectory.csv";
    CLI::App* simulate = app.add_subcommand("simulate", "integrate a scenario, export CSV");
    simulate->add_option("scenario-file", scenario_file, "scenario file")->required();
    simulate->add_option("--mode", mode_override, "none|exact|approx|auto (overrides scenario)");
    simulate->add_option("--out", out_file, "output CSV path");

    std::string sweep_params, tests_file;
    CLI::App* sweep = app.add_subcommand("sweep", "gain sweep: spectra, gap, displacement");
    sweep->add_option("params-file", sweep_params, "base buck parameter file")->required();
    sweep->add_option("--tests", tests_file, "file with one gain set per line")->required();

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (analyze->parsed()) return cmd_analyze(params_file, plant, gains, out);
        if (simulate->parsed()) return cmd_simulate(scenario_file, mode_override, out_file, out);
        return cmd_sweep(sweep_params, tests_file, out, err);
    } catch (const ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace spsim
