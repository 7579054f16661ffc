#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "tdsurv/dataset.hpp"

namespace tdsurv {

// Kaplan-Meier estimate of the censoring survivor function G(t): censorings
// (delta = 0) act as events, events act as censorings, computed on the
// subject level.
struct CensoringKM {
    std::vector<double> times;  // jump times, strictly increasing
    std::vector<double> surv;   // G right after each jump

    double at(double t) const {  // right-continuous
        const auto it = std::upper_bound(times.begin(), times.end(), t);
        if (it == times.begin()) return 1.0;
        return surv[static_cast<std::size_t>(it - times.begin()) - 1];
    }
    double at_left(double t) const {  // left limit G(t-)
        const auto it = std::lower_bound(times.begin(), times.end(), t);
        if (it == times.begin()) return 1.0;
        return surv[static_cast<std::size_t>(it - times.begin()) - 1];
    }
};

inline CensoringKM km_censoring(const Dataset& data) {
    if (data.subjects.empty()) throw error("km_censoring: empty dataset");
    std::vector<std::pair<double, int>> obs;  // (T, censoring indicator)
    obs.reserve(data.subjects.size());
    for (const Subject& s : data.subjects)
        obs.emplace_back(s.obs_time, 1 - s.event);
    std::sort(obs.begin(), obs.end());

    CensoringKM km;
    const std::size_t n = obs.size();
    double g = 1.0;
    std::size_t k = 0;
    while (k < n) {
        const double t = obs[k].first;
        int d = 0;
        std::size_t tied = 0;
        while (k + tied < n && obs[k + tied].first == t) {
            d += obs[k + tied].second;
            ++tied;
        }
        const double at_risk = static_cast<double>(n - k);
        if (d > 0) {
            g *= 1.0 - static_cast<double>(d) / at_risk;
            km.times.push_back(t);
            km.surv.push_back(g);
        }
        k += tied;
    }
    return km;
}

struct MetricValue {
    double value = 0.0;
    bool defined = false;
    int n_eval = 0;      // subjects (or pairs) entering the estimate
    int n_excluded = 0;  // dropped because a required G value was zero
};

namespace detail {

struct IpcwWeights {
    std::vector<double> w;        // one per at-risk subject, 0 if excluded
    std::vector<double> time;     // T_i
    std::vector<int> event;       // delta_i
    std::vector<bool> excluded;   // required G evaluation was zero
    int n_at_risk = 0;
};

// IPCW weights over the landmark cohort {T > s}:
//   W_i = 1(T_i > s+dt) / G(s+dt|s) + 1(T_i <= s+dt) delta_i / G(T_i-|s)
// with G(u|s) = G(u)/G(s). Subjects whose required G value is zero are
// flagged excluded.
inline IpcwWeights ipcw_weights(const Dataset& test, double s, double dt) {
    const CensoringKM km = km_censoring(test);
    const double g_s = km.at(s);
    const double horizon = s + dt;
    IpcwWeights out;
    for (const Subject& subj : test.subjects) {
        if (!(subj.obs_time > s)) continue;
        ++out.n_at_risk;
        out.time.push_back(subj.obs_time);
        out.event.push_back(subj.event);
        double w = 0.0;
        bool excluded = false;
        if (g_s <= 0.0) {
            excluded = true;
        } else if (subj.obs_time > horizon) {
            const double g_h = km.at(horizon) / g_s;
            if (g_h <= 0.0) excluded = true;
            else w = 1.0 / g_h;
        } else if (subj.event == 1) {
            const double g_t = km.at_left(subj.obs_time) / g_s;
            if (g_t <= 0.0) excluded = true;
            else w = 1.0 / g_t;
        }  // censored inside the window: weight stays 0
        out.w.push_back(w);
        out.excluded.push_back(excluded);
    }
    return out;
}

}  // namespace detail

// Time-dependent Brier score with IPCW over the window (s, s+dt].
// `predictions` holds pi_i(s+dt|s) aligned with the dataset's subject order
// restricted to T > s.
inline MetricValue brier(double s, double dt,
                         std::span<const double> predictions,
                         const Dataset& test) {
    const detail::IpcwWeights ip = detail::ipcw_weights(test, s, dt);
    if (static_cast<int>(predictions.size()) != ip.n_at_risk)
        throw error("brier: need one prediction per subject with T > s (" +
                    std::to_string(ip.n_at_risk) + "), got " +
                    std::to_string(predictions.size()));
    MetricValue m;
    double sum = 0.0;
    for (int i = 0; i < ip.n_at_risk; ++i) {
        if (ip.excluded[static_cast<std::size_t>(i)]) {
            ++m.n_excluded;
            continue;
        }
        const double indicator = ip.time[static_cast<std::size_t>(i)] > s + dt
                                     ? 1.0
                                     : 0.0;
        const double diff =
            indicator - predictions[static_cast<std::size_t>(i)];
        sum += ip.w[static_cast<std::size_t>(i)] * diff * diff;
        ++m.n_eval;
    }
    if (m.n_excluded > 0)
        warn("brier(s=" + std::to_string(s) + ", dt=" + std::to_string(dt) +
             "): excluded " + std::to_string(m.n_excluded) +
             " subject(s) with zero censoring-survival weight");
    if (m.n_eval == 0) return m;
    m.value = sum / static_cast<double>(m.n_eval);
    m.defined = true;
    return m;
}

// IPCW cumulative/dynamic AUC over (s, s+dt]. Cases are events inside the
// window, controls survive past it; the strict indicator gives prediction
// ties zero credit. Undefined (not 0) when no comparable pair exists.
inline MetricValue cdauc(double s, double dt,
                         std::span<const double> predictions,
                         const Dataset& test) {
    const detail::IpcwWeights ip = detail::ipcw_weights(test, s, dt);
    if (static_cast<int>(predictions.size()) != ip.n_at_risk)
        throw error("cdauc: need one prediction per subject with T > s (" +
                    std::to_string(ip.n_at_risk) + "), got " +
                    std::to_string(predictions.size()));
    MetricValue m;
    const auto is_case = [&](std::size_t k) {
        return ip.event[k] == 1 && ip.time[k] > s && ip.time[k] <= s + dt;
    };
    const auto is_control = [&](std::size_t k) { return ip.time[k] > s + dt; };
    for (int k = 0; k < ip.n_at_risk; ++k) {
        const auto uk = static_cast<std::size_t>(k);
        if (ip.excluded[uk] && (is_case(uk) || is_control(uk)))
            ++m.n_excluded;
    }
    double num = 0.0, den = 0.0;
    for (int i = 0; i < ip.n_at_risk; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        if (!is_case(ui) || ip.excluded[ui]) continue;
        for (int j = 0; j < ip.n_at_risk; ++j) {
            const auto uj = static_cast<std::size_t>(j);
            if (!is_control(uj) || ip.excluded[uj]) continue;
            const double wij = ip.w[ui] * ip.w[uj];
            den += wij;
            if (predictions[ui] < predictions[uj]) num += wij;
            ++m.n_eval;
        }
    }
    if (den <= 0.0) return m;
    m.value = num / den;
    m.defined = true;
    return m;
}

// Harrell-type concordance at landmark s over subjects with T > s. `risk`
// is any risk ordering (higher = riskier), aligned like `predictions`
// above; prediction ties earn the conventional half credit.
inline MetricValue dynamic_cindex(double s, std::span<const double> risk,
                                  const Dataset& test) {
    std::vector<double> time;
    std::vector<int> event;
    for (const Subject& subj : test.subjects) {
        if (!(subj.obs_time > s)) continue;
        time.push_back(subj.obs_time);
        event.push_back(subj.event);
    }
    if (risk.size() != time.size())
        throw error("dynamic_cindex: need one risk value per subject with "
                    "T > s (" + std::to_string(time.size()) + "), got " +
                    std::to_string(risk.size()));
    MetricValue m;
    double credit = 0.0;
    long pairs = 0;
    for (std::size_t i = 0; i < time.size(); ++i) {
        if (event[i] != 1) continue;
        for (std::size_t j = 0; j < time.size(); ++j) {
            if (!(time[i] < time[j])) continue;
            ++pairs;
            if (risk[i] > risk[j]) credit += 1.0;
            else if (risk[i] == risk[j]) credit += 0.5;
        }
    }
    if (pairs == 0) return m;
    m.value = credit / static_cast<double>(pairs);
    m.n_eval = static_cast<int>(pairs);
    m.defined = true;
    return m;
}

}  // namespace tdsurv
