// Batch CLI for the dynamic survival engine: data simulation, model
// training, dynamic prediction, prospective-accuracy evaluation, replicate
// studies, and subject-level cross-validation.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tdsurv/tdsurv.hpp"

namespace fs = std::filesystem;
using namespace tdsurv;

namespace {

constexpr std::uint64_t kTestStreamSalt = 0x517cc1b727220a95ULL;
constexpr std::uint64_t kCalibrationSalt = 0x2545f4914f6cdd1dULL;

struct MetricRow {
    std::string model;
    double s = 0.0;
    double dt = 0.0;
    std::string metric;
    MetricValue value;
};

std::string metric_cell(const MetricValue& v) {
    return v.defined ? csv::format_double(v.value) : "NA";
}

double achieved_censoring(const Dataset& d) {
    int censored = 0;
    for (const Subject& s : d.subjects) censored += 1 - s.event;
    return static_cast<double>(censored) /
           static_cast<double>(d.subjects.size());
}

// Conditional survival probabilities for every at-risk subject at landmark
// s, one column per horizon dt; LOCF covariates at s.
struct LandmarkPredictions {
    std::vector<long long> ids;
    std::vector<std::vector<double>> probs;  // [subject][horizon]
};

LandmarkPredictions predict_at_landmark(const RiskScorer& model,
                                        const BaselineHazard& h0,
                                        const Dataset& test, double s,
                                        const std::vector<double>& horizons) {
    std::vector<double> grid;
    for (double dt : horizons) grid.push_back(s + dt);
    LandmarkPredictions out;
    for (const Subject& subj : test.subjects) {
        if (!(subj.obs_time > s)) continue;
        PredictionCurve curve = predict_survival(model, h0, subj, s, grid);
        out.ids.push_back(subj.id);
        out.probs.push_back(std::move(curve.probs));
    }
    return out;
}

std::vector<MetricRow> evaluate_model(const std::string& name,
                                      const RiskScorer& model,
                                      const BaselineHazard& h0,
                                      const Dataset& test,
                                      const std::vector<double>& landmarks,
                                      const std::vector<double>& horizons,
                                      bool include_cindex) {
    std::vector<MetricRow> rows;
    for (double s : landmarks) {
        const LandmarkPredictions pred =
            predict_at_landmark(model, h0, test, s, horizons);
        for (std::size_t k = 0; k < horizons.size(); ++k) {
            std::vector<double> pi;
            pi.reserve(pred.probs.size());
            for (const auto& row : pred.probs) pi.push_back(row[k]);
            rows.push_back(
                {name, s, horizons[k], "brier", brier(s, horizons[k], pi, test)});
            rows.push_back(
                {name, s, horizons[k], "cdauc", cdauc(s, horizons[k], pi, test)});
            if (include_cindex) {
                std::vector<double> risk;
                risk.reserve(pi.size());
                for (double p : pi) risk.push_back(-p);
                rows.push_back({name, s, horizons[k], "cindex",
                                dynamic_cindex(s, risk, test)});
            }
        }
    }
    return rows;
}

void write_metric_rows(const std::vector<MetricRow>& rows,
                       const std::string& path, bool with_model) {
    csv::Writer w(path);
    if (with_model)
        w.row({"model", "s", "dt", "metric", "value", "n_eval", "n_excluded"});
    else
        w.row({"s", "dt", "metric", "value", "n_eval", "n_excluded"});
    for (const MetricRow& r : rows) {
        std::vector<std::string> cells;
        if (with_model) cells.push_back(r.model);
        cells.push_back(csv::format_double(r.s));
        cells.push_back(csv::format_double(r.dt));
        cells.push_back(r.metric);
        cells.push_back(metric_cell(r.value));
        cells.push_back(std::to_string(r.value.n_eval));
        cells.push_back(std::to_string(r.value.n_excluded));
        w.row(cells);
    }
}

struct TrainedArtifacts {
    ModelFile model;
    BaselineHazard baseline;
    std::vector<EpochLog> log;     // tdcoxsnn
    std::optional<CoxFit> coxfit;  // tdcoxph
};

TrainedArtifacts train_model(const Dataset& data, const std::string& type,
                             const NetworkSpec& spec_in, const TrainConfig& cfg) {
    TrainedArtifacts out;
    out.model.type = type;
    out.model.p = data.p;
    out.model.q = data.q;
    if (type == "tdcoxsnn") {
        FittedModel fitted = fit(data, spec_in, cfg);
        out.model.spec = fitted.spec;
        out.model.params = fitted.params;
        out.log = fitted.log;
        const std::vector<double> scores =
            record_scores(fitted.spec, fitted.params, data);
        out.baseline = breslow(data.long_records, scores);
    } else if (type == "tdcoxph") {
        CoxFit cox = fit_coxph(data.long_records);
        out.model.beta = cox.beta;
        out.baseline = breslow(data.long_records,
                               linear_scores(data.long_records, cox.beta));
        out.coxfit = std::move(cox);
    } else {
        throw error("unknown model type: " + type);
    }
    return out;
}

void save_artifacts(const TrainedArtifacts& art, const fs::path& dir) {
    save_model(art.model, (dir / "model.json").string());
    save_baseline(art.baseline, (dir / "baseline.csv").string());
    if (art.model.type == "tdcoxsnn")
        save_training_log(art.log, (dir / "training_log.csv").string());
    if (art.coxfit) {
        std::ofstream rep(dir / "fit_report.json");
        rep << coxfit_report(*art.coxfit).dump(2) << '\n';
    }
}

struct SummaryKey {
    std::string model, metric;
    double s, dt;
    bool operator<(const SummaryKey& o) const {
        return std::tie(model, metric, s, dt) <
               std::tie(o.model, o.metric, o.s, o.dt);
    }
};

// Replicate summary shaped for the benchmark tables: one row per
// (model, metric, s, dt) with mean and sd over the runs where the metric
// was defined.
void write_summary(const std::vector<std::vector<MetricRow>>& per_run,
                   const std::string& path) {
    std::map<SummaryKey, std::vector<double>> cells;
    for (const auto& run : per_run)
        for (const MetricRow& r : run)
            if (r.value.defined)
                cells[{r.model, r.metric, r.s, r.dt}].push_back(r.value.value);
    csv::Writer w(path);
    w.row({"model", "metric", "s", "dt", "mean", "sd", "n_runs"});
    for (const auto& [key, values] : cells) {
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(values.size());
        double var = 0.0;
        for (double v : values) var += (v - mean) * (v - mean);
        const double sd = values.size() > 1
                              ? std::sqrt(var / (values.size() - 1.0))
                              : 0.0;
        w.row({key.model, key.metric, csv::format_double(key.s),
               csv::format_double(key.dt), csv::format_double(mean),
               csv::format_double(sd), std::to_string(values.size())});
    }
}

nlohmann::json scenario_to_json(const SimScenario& sc) {
    return {{"setting", sc.setting},
            {"beta0", sc.beta0},
            {"beta1", sc.beta1},
            {"beta2", sc.beta2},
            {"var_b0", sc.var_b0},
            {"var_b1", sc.var_b1},
            {"var_b2", sc.var_b2},
            {"meas_sd", sc.meas_sd},
            {"weibull_shape", sc.weibull_shape},
            {"weibull_rate", sc.weibull_rate},
            {"censor_rate", sc.censor_rate},
            {"target_censoring", sc.target_censoring},
            {"intercept", sc.intercept},
            {"horizon", sc.horizon},
            {"n_visits", sc.n_visits}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tdsurv: dynamic survival prediction with time-dependent "
                 "Cox models and risk-score networks"};
    app.require_subcommand(1);

    // shared option state
    int scenario_id = 1;
    double censoring = 0.4;
    int n_train = 500, n_test = 200;
    std::uint64_t seed = 1;
    int pilot = 10000;
    std::string out_dir = ".";
    std::string input_path, model_path, baseline_path;
    std::string model_type = "tdcoxsnn";
    std::vector<double> landmarks = {1.0};
    std::vector<double> horizons = {1.0, 2.0, 3.0, 4.0};
    int epochs = 20, batch_size = 50, hidden = 30;
    double lr = 0.01, dropout = 0.2;
    int folds = 5, runs = 20;
    bool include_cindex = false;

    const auto add_train_opts = [&](CLI::App* cmd) {
        cmd->add_option("--epochs", epochs, "training epochs");
        cmd->add_option("--batch-size", batch_size, "records per mini-batch");
        cmd->add_option("--lr", lr, "Adam learning rate");
        cmd->add_option("--hidden", hidden, "hidden nodes");
        cmd->add_option("--dropout", dropout, "dropout rate");
    };
    const auto add_eval_opts = [&](CLI::App* cmd) {
        cmd->add_option("--landmarks", landmarks, "landmark times s")
            ->delimiter(',');
        cmd->add_option("--horizons", horizons, "horizons dt past s")
            ->delimiter(',');
    };

    CLI::App* sim = app.add_subcommand(
        "simulate", "generate train/test datasets from a scenario");
    sim->add_option("--scenario", scenario_id, "setting 1..4")
        ->check(CLI::Range(1, 4));
    sim->add_option("--censoring", censoring, "target censoring fraction");
    sim->add_option("--n-train", n_train, "training subjects");
    sim->add_option("--n-test", n_test, "test subjects");
    sim->add_option("--seed", seed, "base seed");
    sim->add_option("--pilot", pilot, "pilot size for intercept calibration");
    sim->add_option("--out", out_dir, "output directory")->required();

    CLI::App* train =
        app.add_subcommand("train", "fit a model on a long-format CSV");
    train->add_option("--input", input_path, "training CSV")->required();
    train->add_option("--model", model_type, "tdcoxsnn or tdcoxph");
    train->add_option("--seed", seed, "training seed");
    add_train_opts(train);
    train->add_option("--out", out_dir, "output directory")->required();

    CLI::App* predict = app.add_subcommand(
        "predict", "conditional survival curves at landmark times");
    predict->add_option("--model", model_path, "model.json")->required();
    predict->add_option("--baseline", baseline_path, "baseline.csv")
        ->required();
    predict->add_option("--input", input_path, "subjects CSV")->required();
    add_eval_opts(predict);
    predict->add_option("--out", out_dir, "output directory")->required();

    CLI::App* evaluate = app.add_subcommand(
        "evaluate", "prospective accuracy over the (s, dt) grid");
    evaluate->add_option("--model", model_path, "model.json")->required();
    evaluate->add_option("--baseline", baseline_path, "baseline.csv")
        ->required();
    evaluate->add_option("--input", input_path, "test CSV")->required();
    add_eval_opts(evaluate);
    evaluate->add_flag("--cindex", include_cindex,
                       "also report the dynamic c-index");
    evaluate->add_option("--out", out_dir, "output directory")->required();

    CLI::App* replicate = app.add_subcommand(
        "replicate",
        "repeated simulate/train/evaluate cycles with a mean/sd table");
    replicate->add_option("--scenario", scenario_id, "setting 1..4")
        ->check(CLI::Range(1, 4));
    replicate->add_option("--censoring", censoring, "target censoring");
    replicate->add_option("--n-train", n_train, "training subjects");
    replicate->add_option("--n-test", n_test, "test subjects");
    replicate->add_option("--runs", runs, "replicate count");
    replicate->add_option("--seed", seed, "base seed");
    replicate->add_option("--pilot", pilot, "calibration pilot size");
    add_train_opts(replicate);
    add_eval_opts(replicate);
    replicate->add_option("--out", out_dir, "output directory")->required();

    CLI::App* cv = app.add_subcommand(
        "cv", "subject-level k-fold cross-validation");
    cv->add_option("--input", input_path, "dataset CSV")->required();
    cv->add_option("--model", model_type, "tdcoxsnn or tdcoxph");
    cv->add_option("--folds", folds, "fold count")->check(CLI::Range(2, 50));
    cv->add_option("--seed", seed, "fold-assignment and training seed");
    add_train_opts(cv);
    add_eval_opts(cv);
    cv->add_option("--out", out_dir, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        fs::create_directories(out_dir);
        const fs::path dir(out_dir);

        NetworkSpec spec;
        spec.hidden_nodes = hidden;
        spec.dropout_rate = dropout;
        spec.seed = seed;
        TrainConfig cfg;
        cfg.epochs = epochs;
        cfg.batch_size = batch_size;
        cfg.learning_rate = lr;
        cfg.seed = seed;

        if (sim->parsed()) {
            SimScenario sc =
                SimScenario::for_setting(scenario_id, censoring, seed);
            Rng cal_rng(seed ^ kCalibrationSalt);
            sc.intercept = calibrate_intercept(sc, censoring, pilot, cal_rng);
            Rng train_rng(seed);
            Dataset train_data = gen_dataset(sc, n_train, train_rng);
            Rng test_rng(seed ^ kTestStreamSalt);
            Dataset test_data = gen_dataset(sc, n_test, test_rng);
            save_csv(train_data, (dir / "train.csv").string());
            save_csv(test_data, (dir / "test.csv").string());
            nlohmann::json manifest = {
                {"format_version", 1},
                {"scenario", scenario_to_json(sc)},
                {"seed", seed},
                {"calibrated_c", sc.intercept},
                {"achieved_censoring",
                 {{"train", achieved_censoring(train_data)},
                  {"test", achieved_censoring(test_data)}}},
                {"n_train", n_train},
                {"n_test", n_test}};
            std::ofstream mout(dir / "manifest.json");
            mout << manifest.dump(2) << '\n';
        } else if (train->parsed()) {
            Dataset data = load_csv(input_path);
            TrainedArtifacts art = train_model(data, model_type, spec, cfg);
            save_artifacts(art, dir);
        } else if (predict->parsed()) {
            const ModelFile model = load_model(model_path);
            const BaselineHazard h0 = load_baseline(baseline_path);
            Dataset data = load_csv(input_path);
            auto scorer = model.make_scorer();
            if (!h0.times.empty()) {
                double u_max = 0.0;
                for (double s : landmarks)
                    for (double dt : horizons) u_max = std::max(u_max, s + dt);
                if (u_max > h0.times.back())
                    warn("horizons beyond the last training event time (" +
                         csv::format_double(h0.times.back()) +
                         "); the cumulative hazard is constant there and the "
                         "curves flatten");
            }
            csv::Writer w((dir / "predictions.csv").string());
            w.row({"id", "s", "u", "prob"});
            for (double s : landmarks) {
                LandmarkPredictions pred =
                    predict_at_landmark(*scorer, h0, data, s, horizons);
                for (std::size_t i = 0; i < pred.ids.size(); ++i)
                    for (std::size_t k = 0; k < horizons.size(); ++k)
                        w.row({std::to_string(pred.ids[i]),
                               csv::format_double(s),
                               csv::format_double(s + horizons[k]),
                               csv::format_double(pred.probs[i][k])});
            }
        } else if (evaluate->parsed()) {
            const ModelFile model = load_model(model_path);
            const BaselineHazard h0 = load_baseline(baseline_path);
            Dataset data = load_csv(input_path);
            auto scorer = model.make_scorer();
            const std::vector<MetricRow> rows =
                evaluate_model(model.type, *scorer, h0, data, landmarks,
                               horizons, include_cindex);
            write_metric_rows(rows, (dir / "metrics.csv").string(), false);
        } else if (replicate->parsed()) {
            SimScenario base_sc =
                SimScenario::for_setting(scenario_id, censoring, seed);
            Rng cal_rng(seed ^ kCalibrationSalt);
            base_sc.intercept =
                calibrate_intercept(base_sc, censoring, pilot, cal_rng);

            std::vector<std::vector<MetricRow>> per_run(
                static_cast<std::size_t>(runs));
            parallel_for(runs, [&](int r) {
                const std::uint64_t run_seed =
                    seed ^ static_cast<std::uint64_t>(r);
                SimScenario sc = base_sc;
                sc.seed = run_seed;
                Rng train_rng(run_seed);
                Dataset train_data = gen_dataset(sc, n_train, train_rng);
                Rng test_rng(run_seed ^ kTestStreamSalt);
                Dataset test_data = gen_dataset(sc, n_test, test_rng);

                NetworkSpec rspec = spec;
                rspec.seed = run_seed;
                rspec.input_dim = 0;
                TrainConfig rcfg = cfg;
                rcfg.seed = run_seed;

                std::vector<MetricRow> rows;
                for (const std::string type : {"tdcoxsnn", "tdcoxph"}) {
                    TrainedArtifacts art =
                        train_model(train_data, type, rspec, rcfg);
                    auto scorer = art.model.make_scorer();
                    auto r2 = evaluate_model(type, *scorer, art.baseline,
                                             test_data, landmarks, horizons,
                                             include_cindex);
                    rows.insert(rows.end(), r2.begin(), r2.end());
                }
                per_run[static_cast<std::size_t>(r)] = std::move(rows);
            });

            csv::Writer w((dir / "runs.csv").string());
            w.row({"run", "model", "s", "dt", "metric", "value", "n_eval",
                   "n_excluded"});
            for (int r = 0; r < runs; ++r)
                for (const MetricRow& row : per_run[static_cast<std::size_t>(r)])
                    w.row({std::to_string(r), row.model,
                           csv::format_double(row.s),
                           csv::format_double(row.dt), row.metric,
                           metric_cell(row.value),
                           std::to_string(row.value.n_eval),
                           std::to_string(row.value.n_excluded)});
            write_summary(per_run, (dir / "summary.csv").string());
        } else if (cv->parsed()) {
            Dataset data = load_csv(input_path);
            std::vector<long long> ids;
            for (const Subject& s : data.subjects) ids.push_back(s.id);
            Rng fold_rng(seed);
            fold_rng.shuffle(ids);
            std::map<long long, int> fold_of;
            for (std::size_t i = 0; i < ids.size(); ++i)
                fold_of[ids[i]] = static_cast<int>(i % static_cast<std::size_t>(
                                                           folds));

            std::vector<std::vector<MetricRow>> per_fold(
                static_cast<std::size_t>(folds));
            parallel_for(folds, [&](int f) {
                std::vector<Subject> train_subs, test_subs;
                for (const Subject& s : data.subjects) {
                    if (fold_of.at(s.id) == f) test_subs.push_back(s);
                    else train_subs.push_back(s);
                }
                if (train_subs.empty() || test_subs.empty())
                    throw error("cv: empty fold " + std::to_string(f));
                Dataset train_data =
                    make_dataset(std::move(train_subs), data.p, data.q);
                Dataset test_data =
                    make_dataset(std::move(test_subs), data.p, data.q);

                NetworkSpec fspec = spec;
                fspec.seed = seed ^ static_cast<std::uint64_t>(f);
                fspec.input_dim = 0;
                TrainConfig fcfg = cfg;
                fcfg.seed = fspec.seed;
                TrainedArtifacts art =
                    train_model(train_data, model_type, fspec, fcfg);
                auto scorer = art.model.make_scorer();
                per_fold[static_cast<std::size_t>(f)] =
                    evaluate_model(model_type, *scorer, art.baseline,
                                   test_data, landmarks, horizons, true);
            });

            csv::Writer w((dir / "folds.csv").string());
            w.row({"fold", "model", "s", "dt", "metric", "value", "n_eval",
                   "n_excluded"});
            for (int f = 0; f < folds; ++f)
                for (const MetricRow& row : per_fold[static_cast<std::size_t>(f)])
                    w.row({std::to_string(f), row.model,
                           csv::format_double(row.s),
                           csv::format_double(row.dt), row.metric,
                           metric_cell(row.value),
                           std::to_string(row.value.n_eval),
                           std::to_string(row.value.n_excluded)});
            write_summary(per_fold, (dir / "summary.csv").string());
        }
    } catch (const std::exception& e) {
        nlohmann::json err = {{"error", e.what()}};
        std::cerr << err.dump() << '\n';
        return 1;
    }
    return 0;
}
