#pragma once

#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "tdsurv/breslow.hpp"
#include "tdsurv/coxph.hpp"
#include "tdsurv/csv.hpp"
#include "tdsurv/dataset.hpp"
#include "tdsurv/network.hpp"
#include "tdsurv/training.hpp"

namespace tdsurv {

namespace detail {

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
    const auto rows = static_cast<Eigen::Index>(j.size());
    if (rows == 0) return {};
    const auto cols = static_cast<Eigen::Index>(j[0].size());
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c)
            m(r, c) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]
                          .get<double>();
    return m;
}

inline nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
    nlohmann::json out = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i)
        v(i) = j[static_cast<std::size_t>(i)].get<double>();
    return v;
}

}  // namespace detail

inline nlohmann::json spec_to_json(const NetworkSpec& s) {
    return {{"input_dim", s.input_dim},       {"hidden_nodes", s.hidden_nodes},
            {"dropout_rate", s.dropout_rate}, {"bn_momentum", s.bn_momentum},
            {"bn_epsilon", s.bn_epsilon},     {"seed", s.seed}};
}

inline NetworkSpec spec_from_json(const nlohmann::json& j) {
    NetworkSpec s;
    s.input_dim = j.at("input_dim").get<int>();
    s.hidden_nodes = j.at("hidden_nodes").get<int>();
    s.dropout_rate = j.at("dropout_rate").get<double>();
    s.bn_momentum = j.at("bn_momentum").get<double>();
    s.bn_epsilon = j.at("bn_epsilon").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    return s;
}

inline nlohmann::json params_to_json(const NetworkParams& p) {
    return {{"w1", detail::matrix_to_json(p.w1)},
            {"b1", detail::vector_to_json(p.b1)},
            {"bn_scale", detail::vector_to_json(p.bn_scale)},
            {"bn_shift", detail::vector_to_json(p.bn_shift)},
            {"w2", detail::vector_to_json(p.w2)},
            {"b2", p.b2},
            {"running_mean", detail::vector_to_json(p.running_mean)},
            {"running_var", detail::vector_to_json(p.running_var)}};
}

inline NetworkParams params_from_json(const nlohmann::json& j) {
    NetworkParams p;
    p.w1 = detail::matrix_from_json(j.at("w1"));
    p.b1 = detail::vector_from_json(j.at("b1"));
    p.bn_scale = detail::vector_from_json(j.at("bn_scale"));
    p.bn_shift = detail::vector_from_json(j.at("bn_shift"));
    p.w2 = detail::vector_from_json(j.at("w2"));
    p.b2 = j.at("b2").get<double>();
    p.running_mean = detail::vector_from_json(j.at("running_mean"));
    p.running_var = detail::vector_from_json(j.at("running_var"));
    return p;
}

class SnnScorer : public RiskScorer {
public:
    SnnScorer(NetworkSpec spec, NetworkParams params)
        : spec_(std::move(spec)), params_(std::move(params)) {}
    double score(std::span<const double> covariates) const override {
        return score_one(spec_, params_, covariates);
    }

private:
    NetworkSpec spec_;
    NetworkParams params_;
};

// On-disk model document; `type` selects which half is populated.
struct ModelFile {
    std::string type;  // "tdcoxsnn" or "tdcoxph"
    int p = 0, q = 0;
    NetworkSpec spec;      // tdcoxsnn
    NetworkParams params;  // tdcoxsnn
    Eigen::VectorXd beta;  // tdcoxph

    std::unique_ptr<RiskScorer> make_scorer() const {
        if (type == "tdcoxsnn")
            return std::make_unique<SnnScorer>(spec, params);
        if (type == "tdcoxph") return std::make_unique<LinearScorer>(beta);
        throw error("unknown model type: " + type);
    }
};

inline void save_model(const ModelFile& m, const std::string& path) {
    nlohmann::json j = {{"format_version", 1},
                        {"type", m.type},
                        {"p", m.p},
                        {"q", m.q}};
    if (m.type == "tdcoxsnn") {
        j["spec"] = spec_to_json(m.spec);
        j["params"] = params_to_json(m.params);
    } else if (m.type == "tdcoxph") {
        j["beta"] = detail::vector_to_json(m.beta);
    } else {
        throw error("save_model: unknown model type: " + m.type);
    }
    std::ofstream out(path);
    if (!out) throw error("cannot open file for writing: " + path);
    out << j.dump(2) << '\n';
}

inline ModelFile load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw error("cannot open file: " + path);
    nlohmann::json j;
    in >> j;
    if (j.at("format_version").get<int>() != 1)
        throw error("unsupported model format_version");
    ModelFile m;
    m.type = j.at("type").get<std::string>();
    m.p = j.at("p").get<int>();
    m.q = j.at("q").get<int>();
    if (m.type == "tdcoxsnn") {
        m.spec = spec_from_json(j.at("spec"));
        m.params = params_from_json(j.at("params"));
    } else if (m.type == "tdcoxph") {
        m.beta = detail::vector_from_json(j.at("beta"));
    } else {
        throw error("unknown model type: " + m.type);
    }
    return m;
}

inline void save_baseline(const BaselineHazard& h0, const std::string& path) {
    csv::Writer w(path);
    w.row({"time", "cumhaz"});
    for (std::size_t k = 0; k < h0.times.size(); ++k)
        w.row({csv::format_double(h0.times[k]),
               csv::format_double(h0.cumhaz[k])});
}

inline BaselineHazard load_baseline(const std::string& path) {
    const auto lines = csv::read_lines(path);
    if (lines.empty() || csv::split(lines[0]) !=
                             std::vector<std::string>{"time", "cumhaz"})
        throw error(path + ": expected header 'time,cumhaz'");
    BaselineHazard h0;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        if (lines[r].empty()) continue;
        const auto cells = csv::split(lines[r]);
        if (cells.size() != 2)
            throw error(path + ": row " + std::to_string(r + 1) +
                        " must have 2 columns");
        h0.times.push_back(csv::parse_double(cells[0], r + 1, 0));
        h0.cumhaz.push_back(csv::parse_double(cells[1], r + 1, 1));
    }
    return h0;
}

inline void save_training_log(const std::vector<EpochLog>& log,
                              const std::string& path) {
    csv::Writer w(path);
    w.row({"epoch", "mean_batch_loss", "seconds"});
    for (const EpochLog& e : log)
        w.row({std::to_string(e.epoch), csv::format_double(e.mean_loss),
               csv::format_double(e.seconds)});
}

inline nlohmann::json coxfit_report(const CoxFit& fit) {
    nlohmann::json se = nlohmann::json::array();
    for (Eigen::Index j = 0; j < fit.std_errors.size(); ++j) {
        if (std::isfinite(fit.std_errors(j))) se.push_back(fit.std_errors(j));
        else se.push_back(nullptr);
    }
    return {{"coefficients", detail::vector_to_json(fit.beta)},
            {"std_errors", std::move(se)},
            {"neg_mean_loglik", fit.neg_mean_loglik},
            {"converged", fit.converged},
            {"iterations", fit.iterations},
            {"identifiable", fit.identifiable},
            {"dropped_columns", fit.dropped_columns}};
}

}  // namespace tdsurv
