#pragma once

// Fixed-step RK4 integration of conditioned closed loops with reference and
// load step schedules, trajectory recording, transient metrics, and the
// epsilon sweep backing the timescale study. Determinism over adaptivity:
// identical scenarios produce identical trajectories byte for byte.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "spsim/config.hpp"
#include "spsim/densemath.hpp"
#include "spsim/errors.hpp"
#include "spsim/plant_model.hpp"
#include "spsim/plants.hpp"
#include "spsim/senscond.hpp"
#include "spsim/sptheory.hpp"

namespace spsim {

// ---------------------------------------------------------------------------
// Scenario configuration
// ---------------------------------------------------------------------------

struct Event {
    double time;
    std::string key;
    double value;
};

enum class PlantId { buck, pmsm, custom_linear };

struct ScenarioConfig {
    PlantId plant_id = PlantId::buck;
    std::variant<BuckParams, PmsmParams, PartitionedLinearSystem> plant_params{BuckParams{}};
    bool buck_saturate = false;
    std::string mode = "none"; // none | exact | approx | auto
    double dt = 1e-6;
    double horizon = 0.0;
    std::vector<Event> events;                // sorted by time, ref-channel keys
    std::optional<Vec> initial_state;         // nullopt = solve for equilibrium
    std::map<std::string, double> initial_refs;

    static ScenarioConfig from_keyvalues(const KeyValueFile& kv);
    static ScenarioConfig from_file(const std::string& path)
    {
        return from_keyvalues(KeyValueFile::parse_file(path));
    }
};

struct Trajectory {
    Vec times;
    std::vector<Vec> states;       // one (x, z) vector per sample
    std::vector<Vec> injections;   // v per sample
    Vec residual_norms;            // ||B v - S f||_2 per sample (0 in mode none)
    Vec slow_derivative_norms;     // ||f||_2 per sample
    std::vector<std::string> state_names;
    std::vector<std::string> injection_names;

    std::size_t size() const { return times.size(); }
};

// ---------------------------------------------------------------------------
// Core integration
// ---------------------------------------------------------------------------

namespace detail {

struct StepEvaluation {
    Vec xdot;
    Vec zdot;
    Vec v;
    double residual_norm;
    double f_norm;
};

inline StepEvaluation evaluate_dynamics(const TwoTimescalePlant& plant,
                                        const SensitivityMode& mode, const Vec& w,
                                        std::span<const double> refs)
{
    Vec x = slice(w, 0, plant.n_x);
    Vec z = slice(w, plant.n_x, plant.n_z);
    Vec f = plant.slow(x, z, refs);

    StepEvaluation out;
    out.f_norm = norm2(f);
    if (mode.kind == SensitivityMode::Kind::none) {
        out.v = Vec(plant.n_inputs, 0.0);
        out.residual_norm = 0.0;
    } else {
        RealMatrix s = sensitivity_nonlinear(plant, x, z, refs);
        Vec target = conditioning_target(s, f);
        RealMatrix b = plant.input_matrix(x, z, refs);
        ConditioningResult res = solve_injection(b, target, mode);
        out.v = std::move(res.v);
        out.residual_norm = res.residual_norm;
    }
    out.zdot = plant.fast(x, z, refs, out.v);
    out.xdot = std::move(f);
    return out;
}

inline Vec rhs(const TwoTimescalePlant& plant, const SensitivityMode& mode, const Vec& w,
               std::span<const double> refs)
{
    StepEvaluation e = evaluate_dynamics(plant, mode, w, refs);
    return concat(e.xdot, e.zdot);
}

} // namespace detail

/// Resolve a mode string (none | exact | approx | auto) against the shape of
/// the injection matrix.
inline SensitivityMode resolve_mode(const std::string& name, const RealMatrix& b)
{
    if (name == "none") return SensitivityMode::none();
    if (name == "approx") return SensitivityMode::approximate();
    if (name == "exact") {
        if (b.cols() > b.rows()) return SensitivityMode::exact_wide();
        if (b.cols() == b.rows()) return SensitivityMode::exact_square();
        throw ModeShapeMismatch("exact conditioning needs at least as many inputs as fast "
                                "states (B is " + std::to_string(b.rows()) + "x"
                                + std::to_string(b.cols()) + "); use approx");
    }
    if (name == "auto") return auto_mode(b);
    throw ParseError("unknown mode '" + name + "' (expected none|exact|approx|auto)");
}

/// Damped Newton iteration for the v = 0 equilibrium of a plant at fixed
/// references. Converges in one step for linear plants.
inline Vec find_equilibrium(const TwoTimescalePlant& plant, std::span<const double> refs,
                            double tol = 1e-9, int max_iterations = 10000)
{
    Vec w = plant.equilibrium_guess ? plant.equilibrium_guess(refs)
                                    : Vec(plant.state_count(), 0.0);
    const SensitivityMode none = SensitivityMode::none();
    auto residual = [&](const Vec& state) { return detail::rhs(plant, none, state, refs); };

    for (int it = 0; it < max_iterations; ++it) {
        Vec f = residual(w);
        if (!all_finite(f))
            throw NonFiniteState("equilibrium: dynamics not finite at the iterate");
        RealMatrix jac = jacobian_fd(residual, w);
        Vec dw;
        try {
            dw = solve_linear(jac, scaled(f, -1.0));
        } catch (const SingularMatrix&) {
            throw NoConvergence("equilibrium: singular Jacobian in Newton step");
        }
        const double f0 = norm2(f);
        double alpha = 1.0;
        Vec trial;
        for (;;) {
            trial = add(w, scaled(dw, alpha));
            double ft;
            try {
                ft = norm2(residual(trial));
            } catch (const Error&) {
                ft = std::numeric_limits<double>::infinity();
            }
            if (ft < f0 || alpha < 1.0 / 1024.0) break;
            alpha *= 0.5;
        }
        w = trial;
        if (alpha * norm_inf(dw) <= tol * std::max(1.0, norm_inf(w))) return w;
    }
    throw NoConvergence("equilibrium: Newton iteration did not converge within "
                        + std::to_string(max_iterations) + " iterations");
}

struct IntegrationSetup {
    SensitivityMode mode;
    Vec initial_state;
    Vec initial_refs;          // aligned with plant.ref_names
    std::vector<Event> events; // keys must name ref channels; sorted by time
    double dt = 1e-6;
    double horizon = 0.0;
};

/// Classical fixed-step RK4. Events snap to the first grid point at or after
/// their time and apply between samples; the injection is recomputed inside
/// every stage evaluation (for the PMSM this rebuilds B and its pseudoinverse
/// from the instantaneous bus voltage).
inline Trajectory integrate_plant(const TwoTimescalePlant& plant, const IntegrationSetup& setup)
{
    if (!(setup.dt > 0.0)) throw InvalidParams("integrate: dt must be positive");
    if (setup.horizon < 0.0) throw InvalidParams("integrate: horizon must be nonnegative");
    if (setup.initial_state.size() != plant.state_count())
        throw DimensionMismatch("integrate: initial state has wrong length");
    if (setup.initial_refs.size() != plant.ref_names.size())
        throw DimensionMismatch("integrate: reference vector has wrong length");

    auto ref_index = [&](const std::string& key) -> std::size_t {
        for (std::size_t i = 0; i < plant.ref_names.size(); ++i)
            if (plant.ref_names[i] == key) return i;
        throw ParseError("unknown event key '" + key + "' for this plant");
    };

    const std::size_t steps = static_cast<std::size_t>(
        std::floor(setup.horizon / setup.dt + 1e-9));
    Trajectory traj;
    traj.state_names = plant.state_names;
    traj.injection_names = plant.injection_names;
    traj.times.reserve(steps + 1);
    traj.states.reserve(steps + 1);

    Vec w = setup.initial_state;
    Vec refs = setup.initial_refs;
    std::size_t next_event = 0;

    const double h = setup.dt;
    for (std::size_t k = 0; k <= steps; ++k) {
        const double t = static_cast<double>(k) * h;
        while (next_event < setup.events.size()
               && setup.events[next_event].time <= t + h * 1e-6) {
            refs[ref_index(setup.events[next_event].key)] = setup.events[next_event].value;
            ++next_event;
        }

        detail::StepEvaluation eval;
        try {
            eval = detail::evaluate_dynamics(plant, setup.mode, w, refs);
        } catch (const NonPhysicalState& e) {
            throw NonPhysicalState(std::string(e.what()) + " at t = " + std::to_string(t));
        }
        traj.times.push_back(t);
        traj.states.push_back(w);
        traj.injections.push_back(eval.v);
        traj.residual_norms.push_back(eval.residual_norm);
        traj.slow_derivative_norms.push_back(eval.f_norm);

        if (k == steps) break;

        try {
            Vec k1 = concat(eval.xdot, eval.zdot);
            Vec k2 = detail::rhs(plant, setup.mode, add(w, scaled(k1, h / 2.0)), refs);
            Vec k3 = detail::rhs(plant, setup.mode, add(w, scaled(k2, h / 2.0)), refs);
            Vec k4 = detail::rhs(plant, setup.mode, add(w, scaled(k3, h)), refs);
            for (std::size_t i = 0; i < w.size(); ++i)
                w[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        } catch (const NonPhysicalState& e) {
            throw NonPhysicalState(std::string(e.what()) + " at t = " + std::to_string(t));
        }
        if (!all_finite(w))
            throw NonFiniteState("integrate: state became non-finite at t = "
                                 + std::to_string(t + h));
    }
    return traj;
}

// ---------------------------------------------------------------------------
// Scenario plumbing
// ---------------------------------------------------------------------------

inline ScenarioConfig ScenarioConfig::from_keyvalues(const KeyValueFile& kv)
{
    ScenarioConfig sc;
    const std::string plant = kv.text("plant-id");
    if (plant == "buck") {
        sc.plant_id = PlantId::buck;
        sc.plant_params = BuckParams::from_keyvalues(kv);
        sc.buck_saturate = kv.number_or("saturate-duty", 0.0) != 0.0;
        sc.initial_refs["v-c-ref"] = kv.number("v-c-ref");
    } else if (plant == "pmsm") {
        sc.plant_id = PlantId::pmsm;
        PmsmParams p = PmsmParams::from_keyvalues(kv);
        const double v_ref = kv.number("v-dc-ref");
        sc.initial_refs["v-dc-ref"] = v_ref;
        if (kv.has("p-load"))
            p.i_load = pmsm_load_current(p, kv.number("p-load"), v_ref);
        sc.initial_refs["i-load"] = p.i_load;
        sc.plant_params = p;
    } else if (plant == "custom-linear") {
        sc.plant_id = PlantId::custom_linear;
        sc.plant_params = parse_linear_system(kv);
    } else {
        throw ParseError(kv.name() + ": unknown plant-id '" + plant + "'");
    }

    sc.mode = kv.text_or("mode", "none");
    sc.dt = kv.number("dt");
    sc.horizon = kv.number("horizon");
    if (!(sc.dt > 0.0)) throw ParseError(kv.name() + ": dt must be positive");
    if (sc.horizon < 0.0) throw ParseError(kv.name() + ": horizon must be nonnegative");

    const std::string init = kv.text("initial-state");
    if (init == "equilibrium") {
        sc.initial_state.reset();
    } else {
        const KeyValueFile::Entry* e = kv.find("initial-state");
        sc.initial_state = kv.split_numbers(init, e->line);
    }

    for (const auto& entry : kv.all("event")) {
        Vec head; // time is numeric; key is text; value numeric
        std::string item;
        std::istringstream in(entry.value);
        std::vector<std::string> parts;
        while (std::getline(in, item, ',')) parts.push_back(KeyValueFile::trim(item));
        if (parts.size() != 3)
            throw ParseError(kv.name() + ":" + std::to_string(entry.line)
                             + ": event needs '<time>,<key>,<value>'");
        Event ev{kv.to_number(parts[0], entry.line), parts[1],
                 kv.to_number(parts[2], entry.line)};
        if (ev.time < 0.0 || ev.time > sc.horizon)
            throw ParseError(kv.name() + ":" + std::to_string(entry.line)
                             + ": event time outside [0, horizon]");
        sc.events.push_back(std::move(ev));
    }
    std::stable_sort(sc.events.begin(), sc.events.end(),
                     [](const Event& a, const Event& b) { return a.time < b.time; });
    return sc;
}

inline TwoTimescalePlant build_plant(const ScenarioConfig& sc)
{
    switch (sc.plant_id) {
    case PlantId::buck:
        return make_buck_plant(std::get<BuckParams>(sc.plant_params), sc.buck_saturate);
    case PlantId::pmsm:
        return make_pmsm_plant(std::get<PmsmParams>(sc.plant_params));
    case PlantId::custom_linear:
        return make_linear_plant(std::get<PartitionedLinearSystem>(sc.plant_params));
    }
    throw InvalidParams("unknown plant id");
}

/// Run a scenario end to end: build the plant, resolve the mode and the
/// initial state ("equilibrium" solves the v = 0 fixed point), translate
/// pmsm p-load events into load-current steps, and integrate.
inline Trajectory integrate(const ScenarioConfig& sc)
{
    TwoTimescalePlant plant = build_plant(sc);

    IntegrationSetup setup;
    setup.dt = sc.dt;
    setup.horizon = sc.horizon;

    setup.initial_refs.resize(plant.ref_names.size(), 0.0);
    for (std::size_t i = 0; i < plant.ref_names.size(); ++i) {
        auto it = sc.initial_refs.find(plant.ref_names[i]);
        if (it != sc.initial_refs.end()) setup.initial_refs[i] = it->second;
    }

    setup.events = sc.events;
    if (sc.plant_id == PlantId::pmsm) {
        const PmsmParams& p = std::get<PmsmParams>(sc.plant_params);
        double v_ref = setup.initial_refs[0];
        for (auto& ev : setup.events) {
            if (ev.key == "v-dc-ref") v_ref = ev.value;
            if (ev.key == "p-load") {
                ev.key = "i-load";
                ev.value = pmsm_load_current(p, ev.value, v_ref);
            }
        }
    }

    Vec probe_x(plant.n_x, 1.0), probe_z(plant.n_z, 1.0);
    if (sc.plant_id == PlantId::pmsm) probe_x[0] = setup.initial_refs[0];
    setup.mode = resolve_mode(sc.mode, plant.input_matrix(probe_x, probe_z, setup.initial_refs));

    if (sc.initial_state) {
        setup.initial_state = *sc.initial_state;
        if (setup.initial_state.size() != plant.state_count())
            throw DimensionMismatch("scenario initial-state has wrong length");
    } else {
        setup.initial_state = find_equilibrium(plant, setup.initial_refs);
    }
    return integrate_plant(plant, setup);
}

// ---------------------------------------------------------------------------
// Metrics and comparisons
// ---------------------------------------------------------------------------

struct RefSchedule {
    double initial = 0.0;
    std::vector<std::pair<double, double>> steps; // (time, value), sorted

    double value_at(double t) const
    {
        double v = initial;
        for (const auto& [time, value] : steps) {
            if (time > t) break;
            v = value;
        }
        return v;
    }
    double final_value() const { return steps.empty() ? initial : steps.back().second; }
    double last_step_time(double t0) const { return steps.empty() ? t0 : steps.back().first; }
};

/// Schedule of the plant's tracked reference extracted from a scenario.
inline RefSchedule tracked_schedule(const ScenarioConfig& sc, const std::string& ref_key)
{
    RefSchedule sched;
    auto it = sc.initial_refs.find(ref_key);
    sched.initial = it == sc.initial_refs.end() ? 0.0 : it->second;
    for (const auto& ev : sc.events)
        if (ev.key == ref_key) sched.steps.emplace_back(ev.time, ev.value);
    return sched;
}

struct TransientMetrics {
    double ise = 0.0;              // integral of squared tracking error
    double overshoot_pct = 0.0;    // relative to the final reference step
    double settling_time = 0.0;    // time from the step into the 2% band
    bool settled = true;
};

inline TransientMetrics metrics(const Trajectory& traj, std::size_t tracked_index,
                                const RefSchedule& schedule)
{
    if (traj.size() == 0) throw InvalidParams("metrics: empty trajectory");
    if (tracked_index >= traj.states.front().size())
        throw DimensionMismatch("metrics: tracked index out of range");

    TransientMetrics m;
    for (std::size_t k = 1; k < traj.size(); ++k) {
        const double e0 = traj.states[k - 1][tracked_index] - schedule.value_at(traj.times[k - 1]);
        const double e1 = traj.states[k][tracked_index] - schedule.value_at(traj.times[k]);
        m.ise += 0.5 * (e0 * e0 + e1 * e1) * (traj.times[k] - traj.times[k - 1]);
    }

    const double t_step = schedule.last_step_time(traj.times.front());
    const double ref_final = schedule.final_value();
    std::size_t k_step = 0;
    while (k_step + 1 < traj.size() && traj.times[k_step] < t_step) ++k_step;
    const double base = traj.states[k_step][tracked_index];
    const double step = ref_final - base;

    if (std::abs(step) <= 1e-12 * std::max(1.0, std::abs(ref_final))) {
        m.overshoot_pct = 0.0;
        m.settling_time = 0.0;
        m.settled = true;
        return m;
    }

    const double band = 0.02 * std::abs(step);
    double overshoot = 0.0;
    std::size_t last_outside = k_step; // first sample counts as outside the band
    bool any_outside = false;
    for (std::size_t k = k_step; k < traj.size(); ++k) {
        const double dev = traj.states[k][tracked_index] - ref_final;
        overshoot = std::max(overshoot, dev * (step > 0.0 ? 1.0 : -1.0));
        if (std::abs(dev) > band) {
            last_outside = k;
            any_outside = true;
        }
    }
    m.overshoot_pct = 100.0 * overshoot / std::abs(step);
    if (!any_outside) {
        m.settling_time = 0.0;
        m.settled = true;
    } else if (last_outside + 1 < traj.size()) {
        m.settling_time = traj.times[last_outside + 1] - traj.times[k_step];
        m.settled = true;
    } else {
        m.settling_time = traj.times.back() - traj.times[k_step];
        m.settled = false;
    }
    return m;
}

struct ComparisonReport {
    TransientMetrics metrics_a;
    TransientMetrics metrics_b;
    double ise_delta = 0.0;
    double max_abs_deviation = 0.0;        // over all states and samples
    double max_normalized_deviation = 0.0; // per state, relative to its range in a
};

inline ComparisonReport compare_runs(const Trajectory& a, const Trajectory& b,
                                     std::size_t tracked_index, const RefSchedule& schedule)
{
    if (a.size() != b.size()) throw GridMismatch("compare_runs: sample counts differ");
    for (std::size_t k = 0; k < a.size(); ++k)
        if (a.times[k] != b.times[k]) throw GridMismatch("compare_runs: time grids differ");

    ComparisonReport report;
    report.metrics_a = metrics(a, tracked_index, schedule);
    report.metrics_b = metrics(b, tracked_index, schedule);
    report.ise_delta = std::abs(report.metrics_a.ise - report.metrics_b.ise);

    const std::size_t n = a.states.empty() ? 0 : a.states.front().size();
    for (std::size_t i = 0; i < n; ++i) {
        double scale = 0.0, dev = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) {
            scale = std::max(scale, std::abs(a.states[k][i]));
            dev = std::max(dev, std::abs(a.states[k][i] - b.states[k][i]));
        }
        report.max_abs_deviation = std::max(report.max_abs_deviation, dev);
        report.max_normalized_deviation =
            std::max(report.max_normalized_deviation, dev / std::max(1.0, scale));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Epsilon sweep
// ---------------------------------------------------------------------------

/// Relative impact of the conditioning feedforward on the fast dynamics at a
/// probe state, for each timescale ratio: ||eps * S f|| / ||g||, which is
/// linear in eps. Falls back to the absolute norm when g vanishes at the
/// probe.
inline std::vector<std::pair<double, double>>
epsilon_sweep(const PartitionedLinearSystem& base, const std::vector<double>& eps_list,
              const Vec& probe_state)
{
    if (probe_state.size() != base.nx() + base.nz())
        throw DimensionMismatch("epsilon_sweep: probe state has wrong length");
    for (double eps : eps_list)
        if (!(eps > 0.0)) throw InvalidEpsilon("epsilon_sweep: eps values must be positive");

    Vec x = slice(probe_state, 0, base.nx());
    Vec z = slice(probe_state, base.nx(), base.nz());
    RealMatrix s = sensitivity_linear(base);
    const double impact_base = norm2(s * add(base.a11 * x, base.a12 * z));
    const double g_norm = norm2(add(base.a21 * x, base.a22 * z));

    std::vector<std::pair<double, double>> out;
    out.reserve(eps_list.size());
    for (double eps : eps_list) {
        const double impact = eps * impact_base;
        out.emplace_back(eps, g_norm > 0.0 ? impact / g_norm : impact);
    }
    return out;
}

} // namespace spsim
