#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tdsurv {

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Warnings (dropped measurements, skipped batches, metric exclusions) go
// through a replaceable sink so tests can capture them.
using WarnHandler = std::function<void(const std::string&)>;

inline WarnHandler& warn_handler() {
    static WarnHandler handler = [](const std::string& msg) {
        std::cerr << "[tdsurv] warning: " << msg << '\n';
    };
    return handler;
}

inline void warn(const std::string& msg) {
    if (warn_handler()) warn_handler()(msg);
}

// Times are quantized to 10 decimal places at ingestion and generation so
// that tied event times compare equal exactly.
inline double quantize_time(double t) {
    return std::round(t * 1e10) / 1e10;
}

// One longitudinal visit: all q longitudinal covariates observed jointly.
struct Measurement {
    double time = 0.0;
    std::vector<double> values;
};

struct Subject {
    long long id = 0;
    std::vector<double> baseline;       // p time-invariant covariates
    std::vector<Measurement> history;   // strictly increasing in time
    double obs_time = 0.0;              // event or censoring time
    int event = 0;                      // 1 = event, 0 = censored
};

// One counting-process row. The interval is left-open/right-closed
// (tstart, tstop]; covariates hold the values in force on that interval.
struct LongRecord {
    long long id = 0;
    double tstart = 0.0;
    double tstop = 0.0;
    int event = 0;
    std::vector<double> covariates;     // baseline (p) then longitudinal (q)
};

struct Dataset {
    int p = 0;
    int q = 0;
    std::vector<Subject> subjects;
    std::vector<LongRecord> long_records;   // derived from subjects
};

inline bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(),
                       [](double x) { return std::isfinite(x); });
}

// Validates one subject in place: sorts nothing (order is part of the
// contract), drops measurements at or after obs_time with a warning.
inline void validate_subject(Subject& s, int p, int q) {
    if (static_cast<int>(s.baseline.size()) != p)
        throw error("subject " + std::to_string(s.id) + ": expected " +
                    std::to_string(p) + " baseline covariates, got " +
                    std::to_string(s.baseline.size()));
    if (!all_finite(s.baseline))
        throw error("subject " + std::to_string(s.id) +
                    ": non-finite baseline covariate");
    if (!(s.obs_time > 0.0))
        throw error("subject " + std::to_string(s.id) +
                    ": obs_time must be positive");
    if (s.event != 0 && s.event != 1)
        throw error("subject " + std::to_string(s.id) +
                    ": event flag must be 0 or 1");
    if (s.history.empty())
        throw error("subject " + std::to_string(s.id) + ": empty history");

    for (std::size_t i = 0; i < s.history.size(); ++i) {
        const Measurement& m = s.history[i];
        if (static_cast<int>(m.values.size()) != q)
            throw error("subject " + std::to_string(s.id) + ": visit at t=" +
                        std::to_string(m.time) + " has " +
                        std::to_string(m.values.size()) +
                        " longitudinal values, expected " + std::to_string(q));
        if (!std::isfinite(m.time) || m.time < 0.0)
            throw error("subject " + std::to_string(s.id) +
                        ": invalid measurement time");
        if (!all_finite(m.values))
            throw error("subject " + std::to_string(s.id) +
                        ": non-finite longitudinal value at t=" +
                        std::to_string(m.time));
        if (i > 0 && !(s.history[i - 1].time < m.time))
            throw error("subject " + std::to_string(s.id) +
                        ": measurement times not strictly increasing");
    }
    if (s.history.front().time != 0.0)
        throw error("subject " + std::to_string(s.id) +
                    ": missing baseline measurement at time 0");

    // measurements at or after the observed time carry no risk interval
    const auto cut = std::find_if(
        s.history.begin(), s.history.end(),
        [&](const Measurement& m) { return m.time >= s.obs_time; });
    if (cut != s.history.end()) {
        warn("subject " + std::to_string(s.id) + ": dropped " +
             std::to_string(s.history.end() - cut) +
             " measurement(s) at or after obs_time");
        s.history.erase(cut, s.history.end());
    }
    if (s.history.empty())
        throw error("subject " + std::to_string(s.id) +
                    ": obs_time not after the first measurement");
}

// LOCF lookup. Interior queries take the measurement with the largest time
// <= t; at_event_boundary applies the (tstart, tstop] rule, i.e. the value
// in force on the interval that ends at t (largest time strictly < t).
inline const std::vector<double>& covariate_at(const Subject& s, double t,
                                               bool at_event_boundary = false) {
    const Measurement* best = nullptr;
    for (const Measurement& m : s.history) {
        const bool ok = at_event_boundary ? (m.time < t) : (m.time <= t);
        if (ok) best = &m;
        else break;
    }
    if (best == nullptr)
        throw error("subject " + std::to_string(s.id) +
                    ": no measurement in force at t=" + std::to_string(t));
    return best->values;
}

// Concatenated (baseline, longitudinal-at-t) vector, the network input row.
inline std::vector<double> input_row_at(const Subject& s, double t,
                                        bool at_event_boundary = false) {
    std::vector<double> row = s.baseline;
    const std::vector<double>& y = covariate_at(s, t, at_event_boundary);
    row.insert(row.end(), y.begin(), y.end());
    return row;
}

// Splits each subject into counting-process records: measurement times
// t1=0 < ... < tm < T give intervals (t1,t2], ..., (tm,T], each carrying
// the values measured at its left endpoint; the event flag sits on the
// final record only.
inline std::vector<LongRecord> build_long_format(
    const std::vector<Subject>& subjects) {
    std::vector<LongRecord> out;
    for (const Subject& s : subjects) {
        if (s.history.empty())
            throw error("subject " + std::to_string(s.id) + ": empty history");
        for (std::size_t k = 0; k < s.history.size(); ++k) {
            LongRecord r;
            r.id = s.id;
            r.tstart = s.history[k].time;
            r.tstop = (k + 1 < s.history.size()) ? s.history[k + 1].time
                                                 : s.obs_time;
            if (!(r.tstart < r.tstop))
                throw error("subject " + std::to_string(s.id) +
                            ": degenerate interval at t=" +
                            std::to_string(r.tstart));
            r.event = (k + 1 == s.history.size()) ? s.event : 0;
            r.covariates = s.baseline;
            r.covariates.insert(r.covariates.end(), s.history[k].values.begin(),
                                s.history[k].values.end());
            out.push_back(std::move(r));
        }
    }
    return out;
}

// Validates subjects, derives the long format, and assembles the dataset.
inline Dataset make_dataset(std::vector<Subject> subjects, int p, int q) {
    Dataset d;
    d.p = p;
    d.q = q;
    for (Subject& s : subjects) validate_subject(s, p, q);
    d.long_records = build_long_format(subjects);
    d.subjects = std::move(subjects);
    return d;
}

// Evaluation cohort at landmark s: subjects still event-free, strictly T > s.
inline Dataset filter_at_risk(const Dataset& d, double s) {
    if (s < 0.0) throw error("landmark must be nonnegative");
    Dataset out;
    out.p = d.p;
    out.q = d.q;
    for (const Subject& subj : d.subjects)
        if (subj.obs_time > s) out.subjects.push_back(subj);
    out.long_records = build_long_format(out.subjects);
    return out;
}

}  // namespace tdsurv
