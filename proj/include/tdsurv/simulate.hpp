#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tdsurv/dataset.hpp"
#include "tdsurv/rng.hpp"

namespace tdsurv {

// Generator configuration for the four low-dimensional settings: linear or
// nonlinear covariate effect crossed with linear or quadratic trajectory
// trend. Defaults are the shared study parameters; the intercept shifts the
// risk score to hit the target censoring fraction.
struct SimScenario {
    int setting = 1;  // 1=lin/lin, 2=lin/quad, 3=nonlin/lin, 4=nonlin/quad
    double beta0 = 3.2;
    double beta1 = -0.07;
    double beta2 = 0.0;
    double var_b0 = 1.44;
    double var_b1 = 0.6;
    double var_b2 = 0.0;
    double meas_sd = 0.3;
    double weibull_shape = 1.4;       // rho
    double weibull_rate = 0.1;        // lambda
    double censor_rate = 1.0 / 7.0;   // exponential censoring, mean 7
    double target_censoring = 0.4;
    double intercept = 0.0;           // c, calibrated
    double horizon = 15.0;            // administrative cap, one past the grid
    int n_visits = 15;                // measurement grid t = 0, 1, ..., 14
    std::uint64_t seed = 1;

    bool nonlinear_effect() const { return setting >= 3; }

    static SimScenario for_setting(int setting, double target_censoring,
                                   std::uint64_t seed) {
        if (setting < 1 || setting > 4)
            throw error("SimScenario: setting must be in 1..4");
        SimScenario sc;
        sc.setting = setting;
        sc.target_censoring = target_censoring;
        sc.seed = seed;
        if (setting == 2 || setting == 4) {
            sc.beta2 = 0.004;
            sc.var_b2 = 0.09;
        }
        return sc;
    }
};

// True smooth longitudinal trajectory y*(t) for one subject.
struct Trajectory {
    double a0 = 0.0, a1 = 0.0, a2 = 0.0;
    double operator()(double t) const { return a0 + (a1 + a2 * t) * t; }
};

struct TrajectorySample {
    Trajectory truth;
    std::vector<Measurement> observed;  // one per grid visit, untruncated
};

// Draws the random effects and the noisy grid observations:
// y*(t) = (b0+beta0) + (b1+beta1) t + (b2+beta2) t^2, y(t) = y*(t) + eps.
inline TrajectorySample gen_trajectory(const SimScenario& sc, Rng& rng) {
    TrajectorySample out;
    out.truth.a0 = sc.beta0 + rng.normal(0.0, std::sqrt(sc.var_b0));
    out.truth.a1 = sc.beta1 + rng.normal(0.0, std::sqrt(sc.var_b1));
    out.truth.a2 = sc.beta2 + rng.normal(0.0, std::sqrt(sc.var_b2));
    out.observed.reserve(sc.n_visits);
    for (int t = 0; t < sc.n_visits; ++t) {
        const double y =
            out.truth(static_cast<double>(t)) + rng.normal(0.0, sc.meas_sd);
        out.observed.push_back(
            {static_cast<double>(t), std::vector<double>{y}});
    }
    return out;
}

// Risk score g(x, y*) + c. Settings 1-2 are linear; settings 3-4 square a
// nonlinear mix, with the signed cube root keeping negative radicands real.
inline double risk_score(int setting, std::span<const double> x, double ystar,
                         double c) {
    if (x.size() != 4) throw error("risk_score: expected 4 baseline covariates");
    if (setting >= 1 && setting <= 2)
        return x[0] + 2.0 * x[1] + 3.0 * x[2] + 4.0 * x[3] + 0.3 * ystar + c;
    if (setting >= 3 && setting <= 4) {
        if (x[2] <= -1.0)
            throw error("risk_score: x3 <= -1 outside the covariate law");
        const double inner = x[0] * x[0] * x[1] * x[1] * x[1] +
                             std::log(x[2] + 1.0) +
                             std::cbrt(0.3 * ystar * x[3] + 1.0) +
                             std::exp(x[3] / 2.0) + 0.3 * ystar;
        return inner * inner / 3.0 + c;
    }
    throw error("risk_score: setting must be in 1..4");
}

namespace detail {

// t^(shape-1) cached on the quarter-panel lattice the integrator visits;
// off-lattice points (refinement, root probes) fall back to std::pow.
struct PowLattice {
    double exponent = std::numeric_limits<double>::quiet_NaN();
    double step = 0.0;
    std::vector<double> values;

    void ensure(double exp_, double step_, double t_max) {
        const std::size_t need =
            static_cast<std::size_t>(t_max / step_) + 2;
        if (exponent == exp_ && step == step_ && values.size() >= need) return;
        exponent = exp_;
        step = step_;
        values.resize(need);
        for (std::size_t i = 0; i < need; ++i)
            values[i] = std::pow(static_cast<double>(i) * step_, exp_);
    }
};

inline thread_local PowLattice pow_lattice;

// Adaptive Simpson on [a, b] with Richardson acceptance. The relative floor
// keeps huge-magnitude panels from chasing an absolute tolerance below
// double resolution; the absolute floor bounds the recursion at the
// t^(shape-1) endpoint singularity.
template <class F>
double adaptive_simpson(const F& f, double a, double fa, double b, double fb,
                        double m, double fm, double whole, double tol,
                        double tol_floor, int depth) {
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    const double tol_eff =
        std::max(tol, 1e-14 * (std::abs(left) + std::abs(right)));
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol_eff)
        return left + right + delta / 15.0;
    const double child_tol = std::max(0.5 * tol, tol_floor);
    return adaptive_simpson(f, a, fa, m, fm, lm, flm, left, child_tol,
                            tol_floor, depth - 1) +
           adaptive_simpson(f, m, fm, b, fb, rm, frm, right, child_tol,
                            tol_floor, depth - 1);
}

template <class F>
double integrate(const F& f, double a, double b, double tol,
                 double tol_floor) {
    if (!(b > a)) return 0.0;
    const double m = 0.5 * (a + b);
    const double fa = f(a), fb = f(b), fm = f(m);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_simpson(f, a, fa, b, fb, m, fm, whole, tol, tol_floor, 45);
}

}  // namespace detail

struct SurvivalDraw {
    double time = 0.0;       // T*, capped at `cap`
    bool at_horizon = false; // root not reached below the cap
};

// Inverts H(T*) = -log U for the hazard lambda rho t^(rho-1) exp(g(t)).
// The cumulative hazard is accumulated over composite-Simpson panels of
// width 0.01; each panel is refined until its Richardson error estimate is
// below 1e-8 relative to the inversion target, and the bracketing panel is
// then solved by bisection to |H + log U| < 1e-9. The first panel carries
// the t^(rho-1) endpoint singularity and is integrated under the
// substitution v = t^rho, which makes its integrand bounded and smooth.
template <class G>
SurvivalDraw solve_survival_time_g(const SimScenario& sc, G&& g_of_t, double u,
                                   double cap) {
    if (!(u > 0.0 && u < 1.0))
        throw error("solve_survival_time: u must lie in (0,1)");
    const double target = -std::log(u);
    const double rho = sc.weibull_shape;
    const double lr = sc.weibull_rate * rho;
    const double sm1 = rho - 1.0;
    const auto hazard = [&](double t) {
        return lr * std::pow(t, sm1) * std::exp(g_of_t(t));
    };
    const double tol_scale = std::max(1.0, target);
    const double panel_tol = 1e-12 * tol_scale;
    const double tol_floor = 1e-16 * tol_scale;

    // H(tau) over [0, tau <= panel width] in the substituted variable
    const double inv_rho = 1.0 / rho;
    const auto head_integral = [&](double tau) {
        const auto f = [&](double v) {
            return std::exp(g_of_t(std::pow(v, inv_rho)));
        };
        return sc.weibull_rate *
               detail::integrate(f, 0.0, std::pow(tau, rho),
                                 panel_tol / sc.weibull_rate, tol_floor);
    };

    constexpr double kWidth = 0.01;
    constexpr double kQuarter = 0.25 * kWidth;
    detail::PowLattice& lattice = detail::pow_lattice;
    lattice.ensure(sm1, kQuarter, std::max(cap, sc.horizon));
    const auto hazard_at_quarter = [&](std::size_t q, double g_val) {
        return lr * lattice.values[q] * std::exp(g_val);
    };

    double cum = 0.0;
    std::size_t panel_idx = 0;  // panels are [k w, (k+1) w]; no float drift
    double f_a = hazard_at_quarter(0, g_of_t(0.0));
    bool have_root_panel = false;
    double panel_start = 0.0, panel_end = 0.0, panel_cum_before = 0.0;

    for (;;) {
        const double t = static_cast<double>(panel_idx) * kWidth;
        if (!(t < cap)) break;
        const std::size_t q = 4 * panel_idx;
        const bool full = t + kWidth <= cap;
        const double b = full ? t + kWidth : cap;
        double panel, f_b;
        if (panel_idx == 0) {
            panel = head_integral(b);
            f_b = full ? hazard_at_quarter(4, g_of_t(b)) : hazard(b);
        } else if (full) {
            const double flm = hazard_at_quarter(q + 1, g_of_t(t + kQuarter));
            const double fm = hazard_at_quarter(q + 2, g_of_t(t + 2 * kQuarter));
            const double frm = hazard_at_quarter(q + 3, g_of_t(t + 3 * kQuarter));
            f_b = hazard_at_quarter(q + 4, g_of_t(t + 4 * kQuarter));
            const double whole = kWidth / 6.0 * (f_a + 4.0 * fm + f_b);
            const double left =
                kWidth / 12.0 * (f_a + 4.0 * flm + fm);
            const double right =
                kWidth / 12.0 * (fm + 4.0 * frm + f_b);
            const double delta = left + right - whole;
            const double tol_eff = std::max(
                panel_tol, 1e-14 * (std::abs(left) + std::abs(right)));
            if (std::abs(delta) <= 15.0 * tol_eff) {
                panel = left + right + delta / 15.0;
            } else {
                const double m = t + 2 * kQuarter;
                panel = detail::adaptive_simpson(
                            hazard, t, f_a, m, fm, t + kQuarter, flm, left,
                            std::max(0.5 * panel_tol, tol_floor), tol_floor,
                            44) +
                        detail::adaptive_simpson(
                            hazard, m, fm, b, f_b, t + 3 * kQuarter, frm,
                            right, std::max(0.5 * panel_tol, tol_floor),
                            tol_floor, 44);
            }
        } else {
            panel = detail::integrate(hazard, t, b, panel_tol, tol_floor);
            f_b = hazard(b);
        }
        if (cum + panel >= target) {
            have_root_panel = true;
            panel_start = t;
            panel_end = b;
            panel_cum_before = cum;
            break;
        }
        cum += panel;
        f_a = f_b;
        ++panel_idx;
    }
    if (!have_root_panel) return {cap, true};

    const bool head = panel_start == 0.0;
    double lo = panel_start, hi = panel_end;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double h_mid =
            head ? head_integral(mid)
                 : detail::integrate(hazard, panel_start, mid, panel_tol,
                                     tol_floor);
        const double f_mid = panel_cum_before + h_mid - target;
        if (std::abs(f_mid) < 1e-9 || hi - lo <= 1e-12 * hi)
            return {mid, false};
        if (f_mid > 0.0) hi = mid;
        else lo = mid;
    }
    return {0.5 * (lo + hi), false};
}

inline SurvivalDraw solve_survival_time(const SimScenario& sc,
                                        std::span<const double> x,
                                        const Trajectory& traj, double u,
                                        double cap) {
    if (x.size() != 4)
        throw error("solve_survival_time: expected 4 baseline covariates");
    if (sc.setting >= 1 && sc.setting <= 2) {
        // linear effect: g(t) is the quadratic k0 + k1 t + k2 t^2
        const double k0 = x[0] + 2.0 * x[1] + 3.0 * x[2] + 4.0 * x[3] +
                          sc.intercept + 0.3 * traj.a0;
        const double k1 = 0.3 * traj.a1;
        const double k2 = 0.3 * traj.a2;
        return solve_survival_time_g(
            sc, [=](double t) { return k0 + (k1 + k2 * t) * t; }, u, cap);
    }
    if (x[2] <= -1.0)
        throw error("solve_survival_time: x3 <= -1 outside the covariate law");
    const double fixed = x[0] * x[0] * x[1] * x[1] * x[1] +
                         std::log(x[2] + 1.0) + std::exp(x[3] / 2.0);
    const double x4 = x[3];
    const double c = sc.intercept;
    const Trajectory tr = traj;
    return solve_survival_time_g(
        sc,
        [=](double t) {
            const double y = tr(t);
            const double inner =
                fixed + std::cbrt(0.3 * y * x4 + 1.0) + 0.3 * y;
            return inner * inner / 3.0 + c;
        },
        u, cap);
}

inline SurvivalDraw gen_survival_time(const SimScenario& sc,
                                      std::span<const double> x,
                                      const Trajectory& traj, Rng& rng) {
    return solve_survival_time(sc, x, traj, rng.uniform_open(), sc.horizon);
}

struct SimOutcome {
    std::vector<double> x;
    TrajectorySample traj;
    double obs_time = 0.0;
    int event = 0;
    bool at_horizon = false;
};

// One complete subject draw: covariates, trajectory, exponential censoring,
// true event time, administrative horizon. The draw order (4 uniforms,
// 3 normals, n_visits normals, U for C*, U for T*) is fixed so that settings
// with degenerate variances consume identical streams. The survival root
// search stops at min(C*, horizon): a root beyond that point cannot change
// the observed outcome.
inline SimOutcome sim_subject(const SimScenario& sc, Rng& rng) {
    SimOutcome out;
    out.x = {rng.uniform(-0.5, 1.5), rng.uniform(-0.5, 1.5),
             rng.uniform(-0.5, 1.5), rng.uniform(-0.5, 1.5)};
    out.traj = gen_trajectory(sc, rng);
    const double c_star = rng.exponential(1.0 / sc.censor_rate);
    const double cap = std::min(c_star, sc.horizon);
    const SurvivalDraw draw =
        solve_survival_time(sc, out.x, out.traj.truth, rng.uniform_open(), cap);
    out.at_horizon = draw.at_horizon;
    const bool event = !draw.at_horizon;  // root found at T* <= min(C*, horizon)
    out.event = event ? 1 : 0;
    // extreme risk scores can push T* below the time quantum; keep the
    // observed time one quantum above zero
    out.obs_time =
        std::max(quantize_time(event ? draw.time : cap), 1e-10);
    return out;
}

// Bisection on the risk-score intercept c over [-20, 20] until a pilot run
// of n_pilot subjects hits the target censoring fraction. Every evaluation
// replays the same pilot stream (common random numbers), which makes the
// empirical fraction monotone in c.
inline double calibrate_intercept(SimScenario sc, double target, int n_pilot,
                                  Rng& rng) {
    if (!(target > 0.0 && target < 1.0))
        throw error("calibrate_intercept: target must lie in (0,1)");
    if (n_pilot < 1) throw error("calibrate_intercept: n_pilot must be >= 1");
    const std::uint64_t pilot_seed = rng.next_u64();

    const auto censoring_at = [&](double c) {
        SimScenario trial = sc;
        trial.intercept = c;
        Rng pilot(pilot_seed);
        int censored = 0;
        for (int i = 0; i < n_pilot; ++i)
            if (sim_subject(trial, pilot).event == 0) ++censored;
        return static_cast<double>(censored) / n_pilot;
    };

    double lo = -20.0, hi = 20.0;
    const double f_lo = censoring_at(lo);  // censoring decreases in c
    const double f_hi = censoring_at(hi);
    if (target > f_lo || target < f_hi)
        throw error("calibrate_intercept: target " + std::to_string(target) +
                    " outside achievable range [" + std::to_string(f_hi) +
                    ", " + std::to_string(f_lo) + "]");
    double c = 0.0, achieved = 0.0;
    for (int it = 0; it < 60; ++it) {
        c = 0.5 * (lo + hi);
        achieved = censoring_at(c);
        if (std::abs(achieved - target) <= 0.002 || hi - lo < 1e-3) break;
        if (achieved > target) lo = c;
        else hi = c;
    }
    if (std::abs(achieved - target) > 0.01)
        throw error("calibrate_intercept: calibration landed at censoring "
                    "fraction " + std::to_string(achieved) +
                    ", outside +/-0.01 of target " + std::to_string(target));
    return c;
}

// Full dataset draw: n subjects with observed measurements truncated to grid
// times strictly before the observed time.
inline Dataset gen_dataset(const SimScenario& sc, int n, Rng& rng) {
    if (n < 1) throw error("gen_dataset: n must be >= 1");
    std::vector<Subject> subjects;
    subjects.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const SimOutcome draw = sim_subject(sc, rng);
        Subject s;
        s.id = i + 1;
        s.baseline = draw.x;
        s.obs_time = draw.obs_time;
        s.event = draw.event;
        for (const Measurement& m : draw.traj.observed)
            if (m.time < draw.obs_time) s.history.push_back(m);
        subjects.push_back(std::move(s));
    }
    return make_dataset(std::move(subjects), 4, 1);
}

}  // namespace tdsurv
