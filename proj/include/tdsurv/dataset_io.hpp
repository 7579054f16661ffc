#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "tdsurv/csv.hpp"
#include "tdsurv/dataset.hpp"

namespace tdsurv {

namespace detail {

// Counts trailing covariate columns named <prefix>1..<prefix>k.
inline int count_prefixed(const std::vector<std::string>& header,
                          std::size_t offset, char prefix) {
    int n = 0;
    for (std::size_t i = offset; i < header.size(); ++i) {
        const std::string expected = std::string(1, prefix) +
                                     std::to_string(n + 1);
        if (header[i] != expected) break;
        ++n;
    }
    return n;
}

struct SchemaInfo {
    bool long_format = false;
    int p = 0;
    int q = 0;
};

inline SchemaInfo detect_schema(const std::vector<std::string>& header) {
    SchemaInfo info;
    if (header.size() >= 4 && header[0] == "id" && header[1] == "tstart" &&
        header[2] == "tstop" && header[3] == "event") {
        info.long_format = true;
    } else if (header.size() >= 4 && header[0] == "id" &&
               header[1] == "time" && header[2] == "event_time" &&
               header[3] == "event") {
        info.long_format = false;
    } else {
        throw error("unrecognized CSV header; expected "
                    "'id,tstart,tstop,event,x1..,y1..' or "
                    "'id,time,event_time,event,x1..,y1..'");
    }
    info.p = count_prefixed(header, 4, 'x');
    info.q = count_prefixed(header, 4 + info.p, 'y');
    if (4 + info.p + info.q != static_cast<int>(header.size()))
        throw error("CSV header has unrecognized trailing columns after x/y "
                    "covariates");
    if (info.q < 1)
        throw error("CSV schema requires at least one longitudinal column y1");
    return info;
}

inline int parse_event_flag(const std::string& cell, std::size_t row) {
    if (cell == "0") return 0;
    if (cell == "1") return 1;
    throw error("row " + std::to_string(row) + ": event flag must be 0 or 1, "
                "got '" + cell + "'");
}

}  // namespace detail

// Reads either schema, validates, reconstructs subjects, and rebuilds the
// long format deterministically (rows must arrive sorted by (id, tstart) /
// (id, time)).
inline Dataset load_csv(const std::string& path) {
    const std::vector<std::string> lines = csv::read_lines(path);
    if (lines.empty()) throw error(path + ": empty file");
    const std::vector<std::string> header = csv::split(lines[0]);
    const detail::SchemaInfo schema = detail::detect_schema(header);
    const std::size_t ncol = header.size();

    std::vector<Subject> subjects;
    Subject* cur = nullptr;
    double prev_sort_time = 0.0;
    std::size_t cur_first_row = 0;

    for (std::size_t row = 1; row < lines.size(); ++row) {
        if (lines[row].empty()) continue;
        const std::vector<std::string> cells = csv::split(lines[row]);
        if (cells.size() != ncol)
            throw error("row " + std::to_string(row + 1) + ": expected " +
                        std::to_string(ncol) + " columns, got " +
                        std::to_string(cells.size()));
        const long long id = csv::parse_id(cells[0], row + 1);
        std::vector<double> x(schema.p), y(schema.q);
        for (int j = 0; j < schema.p; ++j)
            x[j] = csv::parse_double(cells[4 + j], row + 1, 4 + j);
        for (int j = 0; j < schema.q; ++j)
            y[j] = csv::parse_double(cells[4 + schema.p + j], row + 1,
                                     4 + schema.p + j);

        if (cur == nullptr || cur->id != id) {
            if (cur != nullptr && cur->id > id)
                throw error("row " + std::to_string(row + 1) +
                            ": rows not sorted by id");
            subjects.emplace_back();
            cur = &subjects.back();
            cur->id = id;
            cur->baseline = x;
            cur_first_row = row + 1;
            prev_sort_time = -1.0;
        } else if (cur->baseline != x) {
            throw error("row " + std::to_string(row + 1) + ": baseline "
                        "covariates differ from earlier rows of subject " +
                        std::to_string(id));
        }

        if (schema.long_format) {
            const double tstart =
                quantize_time(csv::parse_double(cells[1], row + 1, 1));
            const double tstop =
                quantize_time(csv::parse_double(cells[2], row + 1, 2));
            const int event = detail::parse_event_flag(cells[3], row + 1);
            if (!(tstart < tstop))
                throw error("row " + std::to_string(row + 1) +
                            ": interval (" + cells[1] + "," + cells[2] +
                            "] is empty or reversed");
            if (cur->history.empty()) {
                if (tstart != 0.0)
                    throw error("row " + std::to_string(row + 1) +
                                ": first interval of subject " +
                                std::to_string(id) + " must start at 0");
            } else {
                if (cur->event == 1)
                    throw error("row " + std::to_string(row + 1) +
                                ": subject " + std::to_string(id) +
                                " has an interval after its event row " +
                                std::to_string(cur_first_row));
                if (tstart != prev_sort_time)
                    throw error("rows " + std::to_string(row) + " and " +
                                std::to_string(row + 1) + ": intervals of "
                                "subject " + std::to_string(id) +
                                " do not tile; (" + cells[1] + "," + cells[2] +
                                "] should start at " +
                                csv::format_double(prev_sort_time));
            }
            cur->history.push_back({tstart, y});
            cur->obs_time = tstop;
            cur->event = event;
            prev_sort_time = tstop;
            cur_first_row = row + 1;
        } else {
            const double time =
                quantize_time(csv::parse_double(cells[1], row + 1, 1));
            const double event_time =
                quantize_time(csv::parse_double(cells[2], row + 1, 2));
            const int event = detail::parse_event_flag(cells[3], row + 1);
            if (!cur->history.empty()) {
                if (time <= prev_sort_time)
                    throw error("row " + std::to_string(row + 1) +
                                ": visit times of subject " +
                                std::to_string(id) +
                                " not strictly increasing");
                if (event_time != cur->obs_time || event != cur->event)
                    throw error("row " + std::to_string(row + 1) +
                                ": event_time/event differ across rows of "
                                "subject " + std::to_string(id));
            } else {
                cur->obs_time = event_time;
                cur->event = event;
            }
            cur->history.push_back({time, y});
            prev_sort_time = time;
        }
    }
    if (subjects.empty()) throw error(path + ": no data rows");
    return make_dataset(std::move(subjects), schema.p, schema.q);
}

// Long-format export, schema `id,tstart,tstop,event,x1..xp,y1..yq`.
inline void save_csv(const Dataset& d, const std::string& path) {
    csv::Writer w(path);
    std::vector<std::string> header = {"id", "tstart", "tstop", "event"};
    for (int j = 0; j < d.p; ++j) header.push_back("x" + std::to_string(j + 1));
    for (int j = 0; j < d.q; ++j) header.push_back("y" + std::to_string(j + 1));
    w.row(header);
    for (const LongRecord& r : d.long_records) {
        std::vector<std::string> cells = {
            std::to_string(r.id), csv::format_double(r.tstart),
            csv::format_double(r.tstop), std::to_string(r.event)};
        for (double v : r.covariates) cells.push_back(csv::format_double(v));
        w.row(cells);
    }
}

inline nlohmann::json to_json(const Dataset& d) {
    nlohmann::json subjects = nlohmann::json::array();
    for (const Subject& s : d.subjects) {
        nlohmann::json visits = nlohmann::json::array();
        for (const Measurement& m : s.history)
            visits.push_back({{"time", m.time}, {"values", m.values}});
        subjects.push_back({{"id", s.id},
                            {"baseline", s.baseline},
                            {"obs_time", s.obs_time},
                            {"event", s.event},
                            {"visits", std::move(visits)}});
    }
    return {{"format_version", 1},
            {"p", d.p},
            {"q", d.q},
            {"subjects", std::move(subjects)}};
}

inline Dataset dataset_from_json(const nlohmann::json& j) {
    if (j.at("format_version").get<int>() != 1)
        throw error("unsupported dataset format_version");
    std::vector<Subject> subjects;
    for (const auto& js : j.at("subjects")) {
        Subject s;
        s.id = js.at("id").get<long long>();
        s.baseline = js.at("baseline").get<std::vector<double>>();
        s.obs_time = js.at("obs_time").get<double>();
        s.event = js.at("event").get<int>();
        for (const auto& jv : js.at("visits"))
            s.history.push_back({jv.at("time").get<double>(),
                                 jv.at("values").get<std::vector<double>>()});
        subjects.push_back(std::move(s));
    }
    return make_dataset(std::move(subjects), j.at("p").get<int>(),
                        j.at("q").get<int>());
}

}  // namespace tdsurv
