#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "renf/checkpoint.hpp"
#include "renf/data.hpp"
#include "renf/eval.hpp"
#include "renf/model.hpp"
#include "renf/training.hpp"

namespace renf {

/**
 * Flat run configuration, one JSON object with exactly these keys. Unknown
 * keys are rejected so typos cannot silently fall back to defaults.
 */
struct RunConfig {
    std::string data_path;
    std::string date_column = "date";
    SplitSpec split{6.0, 2.0, 2.0};
    std::size_t lookback = 336;
    std::size_t horizon = 96;
    std::size_t stages = 2;
    std::string variant = "alpha";
    std::size_t d_model = 512;
    double dropout = 0.1;
    double lr = 1e-3;
    double ema_decay = 0.995;
    bool ema_enabled = true;
    double alpha_mix = 0.5;
    double gamma_stage = 1.0;
    std::size_t batch_size = 32;
    std::size_t epochs = 30;
    std::size_t patience = 5;
    std::uint64_t seed = 2021;
    std::string out_dir;
    std::string activation = "gelu";
    bool revin_affine = false;
    bool detach_concat = false;
    bool feed_forecast = true;
    bool supervise_prefixes = true;
    bool track_test_curve = true;
};

inline nlohmann::json run_config_json(const RunConfig& c) {
    return nlohmann::json{{"data_path", c.data_path},
                          {"date_column", c.date_column},
                          {"split_ratios", {c.split.train, c.split.val, c.split.test}},
                          {"lookback", c.lookback},
                          {"horizon", c.horizon},
                          {"stages", c.stages},
                          {"variant", c.variant},
                          {"d_model", c.d_model},
                          {"dropout", c.dropout},
                          {"lr", c.lr},
                          {"ema_decay", c.ema_decay},
                          {"ema_enabled", c.ema_enabled},
                          {"alpha_mix", c.alpha_mix},
                          {"gamma_stage", c.gamma_stage},
                          {"batch_size", c.batch_size},
                          {"epochs", c.epochs},
                          {"patience", c.patience},
                          {"seed", c.seed},
                          {"out_dir", c.out_dir},
                          {"activation", c.activation},
                          {"revin_affine", c.revin_affine},
                          {"detach_concat", c.detach_concat},
                          {"feed_forecast", c.feed_forecast},
                          {"supervise_prefixes", c.supervise_prefixes},
                          {"track_test_curve", c.track_test_curve}};
}

inline RunConfig parse_run_config(const nlohmann::json& j) {
    static const std::set<std::string> known = {
        "data_path",  "date_column", "split_ratios", "lookback",     "horizon",
        "stages",     "variant",     "d_model",      "dropout",      "lr",
        "ema_decay",  "ema_enabled", "alpha_mix",    "gamma_stage",  "batch_size",
        "epochs",     "patience",    "seed",         "out_dir",      "activation",
        "revin_affine", "detach_concat", "feed_forecast", "supervise_prefixes",
        "track_test_curve"};
    require(j.is_object(), "config: top level must be a JSON object");
    for (const auto& [key, _] : j.items())
        require(known.count(key) > 0, "config: unknown key '" + key + "'");

    RunConfig c;
    require(j.contains("data_path"), "config: missing required key 'data_path'");
    require(j.contains("out_dir"), "config: missing required key 'out_dir'");
    c.data_path = j.at("data_path").get<std::string>();
    c.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("date_column")) c.date_column = j.at("date_column").get<std::string>();
    if (j.contains("split_ratios")) {
        const auto& r = j.at("split_ratios");
        require(r.is_array() && r.size() == 3, "config: split_ratios must be [train, val, test]");
        c.split = SplitSpec{r[0].get<double>(), r[1].get<double>(), r[2].get<double>()};
    }
    if (j.contains("lookback")) c.lookback = j.at("lookback").get<std::size_t>();
    if (j.contains("horizon")) c.horizon = j.at("horizon").get<std::size_t>();
    if (j.contains("stages")) c.stages = j.at("stages").get<std::size_t>();
    if (j.contains("variant")) c.variant = j.at("variant").get<std::string>();
    if (j.contains("d_model")) c.d_model = j.at("d_model").get<std::size_t>();
    if (j.contains("dropout")) c.dropout = j.at("dropout").get<double>();
    if (j.contains("lr")) c.lr = j.at("lr").get<double>();
    if (j.contains("ema_decay")) c.ema_decay = j.at("ema_decay").get<double>();
    if (j.contains("ema_enabled")) c.ema_enabled = j.at("ema_enabled").get<bool>();
    if (j.contains("alpha_mix")) c.alpha_mix = j.at("alpha_mix").get<double>();
    if (j.contains("gamma_stage")) c.gamma_stage = j.at("gamma_stage").get<double>();
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<std::size_t>();
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<std::size_t>();
    if (j.contains("patience")) c.patience = j.at("patience").get<std::size_t>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("activation")) c.activation = j.at("activation").get<std::string>();
    if (j.contains("revin_affine")) c.revin_affine = j.at("revin_affine").get<bool>();
    if (j.contains("detach_concat")) c.detach_concat = j.at("detach_concat").get<bool>();
    if (j.contains("feed_forecast")) c.feed_forecast = j.at("feed_forecast").get<bool>();
    if (j.contains("supervise_prefixes"))
        c.supervise_prefixes = j.at("supervise_prefixes").get<bool>();
    if (j.contains("track_test_curve"))
        c.track_test_curve = j.at("track_test_curve").get<bool>();

    require(c.variant == "alpha" || c.variant == "beta",
            "config: variant must be 'alpha' or 'beta', got '" + c.variant + "'");
    require(c.activation == "gelu" || c.activation == "relu",
            "config: activation must be 'gelu' or 'relu', got '" + c.activation + "'");
    require(c.stages >= 1, "config: stages must be >= 1");
    require(c.horizon % c.stages == 0, "config: stages (" + std::to_string(c.stages) +
                                           ") must divide horizon (" + std::to_string(c.horizon) +
                                           ")");
    require(c.lr > 0.0, "config: lr must be positive");
    require(c.ema_decay >= 0.0 && c.ema_decay <= 1.0, "config: ema_decay outside [0,1]");
    require(c.alpha_mix >= 0.0 && c.alpha_mix <= 1.0, "config: alpha_mix outside [0,1]");
    require(c.dropout >= 0.0 && c.dropout < 1.0, "config: dropout outside [0,1)");
    require(c.batch_size >= 1 && c.epochs >= 1 && c.patience >= 1,
            "config: batch_size, epochs, patience must be >= 1");
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "config: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("config: invalid JSON in " + path + ": " + e.what());
    }
    RunConfig c = parse_run_config(j);
    require(std::filesystem::exists(c.data_path),
            "config: data_path does not exist: " + c.data_path);
    return c;
}

inline ModelConfig model_config_from_run(const RunConfig& c, std::size_t n_variates) {
    ModelConfig mc;
    mc.variant = c.variant == "beta" ? Variant::Beta : Variant::Alpha;
    mc.stages = c.stages;
    mc.lookback = c.lookback;
    mc.horizon = c.horizon;
    mc.d_model = c.d_model;
    mc.n_variates = n_variates;
    mc.dropout = c.dropout;
    mc.alpha_mix = c.alpha_mix;
    mc.gamma_stage = c.gamma_stage;
    mc.activation = c.activation == "relu" ? Activation::Relu : Activation::Gelu;
    mc.revin_affine = c.revin_affine;
    mc.detach_concat = c.detach_concat;
    mc.feed_forecast = c.feed_forecast;
    mc.supervise_prefixes = c.supervise_prefixes;
    mc.seed = c.seed;
    return mc;
}

inline TrainConfig train_config_from_run(const RunConfig& c) {
    TrainConfig tc;
    tc.lr = c.lr;
    tc.ema_decay = c.ema_decay;
    tc.ema_enabled = c.ema_enabled;
    tc.epochs = c.epochs;
    tc.patience = c.patience;
    tc.batch_size = c.batch_size;
    tc.track_test_curve = c.track_test_curve;
    return tc;
}

// ---------------------------------------------------------------------------
// Split evaluation with the full report: final metrics, per-stage metrics
// over each stage's own region, and the per-window oracle Re-Bound.
// ---------------------------------------------------------------------------

struct EvalReport {
    std::string split;
    std::size_t horizon = 0;
    std::size_t windows = 0;
    double mse = 0.0;
    double mae = 0.0;
    double rebound_mse = 0.0;
    double rebound_mae = 0.0;
    std::vector<double> stage_mse;
    std::vector<double> stage_mae;
};

inline EvalReport evaluate_full(ReNFModel& model, const TimeSeriesDataset& ds, Split split,
                                std::size_t batch_size) {
    auto starts = dataset_windows(ds, split);
    require(!starts.empty(), std::string("evaluate: no windows in split ") + split_name(split));
    BatchIterator it(ds, starts, batch_size, /*shuffle=*/false, /*seed=*/0);

    const std::size_t n_stages = model.config.stages;
    EvalReport rep;
    rep.split = split_name(split);
    rep.horizon = model.config.horizon;
    std::vector<double> stage_se(n_stages, 0.0), stage_ae(n_stages, 0.0);
    std::vector<std::size_t> stage_n(n_stages, 0);
    double se = 0.0, ae = 0.0, rb_se = 0.0, rb_ae = 0.0;
    std::size_t n_points = 0;

    while (auto batch = it.next()) {
        ForecastBundle bundle = bdo_forward(model, batch->inputs, /*training=*/false);
        const Matrix target = to_rows(batch->targets);
        const std::size_t vars = batch->inputs.vars;
        for (std::size_t s = 0; s < n_stages; ++s) {
            const Matrix& pred = bundle.prefixes[s];
            for (std::size_t r = 0; r < pred.rows; ++r)
                for (std::size_t t = 0; t < pred.cols; ++t) {
                    const double d = pred.at(r, t) - target.at(r, t);
                    stage_se[s] += d * d;
                    stage_ae[s] += std::abs(d);
                }
            stage_n[s] += pred.size();
        }
        const Matrix& fin = bundle.final_forecast();
        for (std::size_t i = 0; i < fin.size(); ++i) {
            const double d = fin.data[i] - target.data[i];
            se += d * d;
            ae += std::abs(d);
        }
        n_points += fin.size();

        // Re-Bound: per-window oracle combination of the stage prefixes.
        for (std::size_t b = 0; b < batch->size(); ++b) {
            ForecastBundle window;
            window.batch = 1;
            window.vars = vars;
            for (std::size_t s = 0; s < n_stages; ++s) {
                Matrix slice(vars, bundle.prefixes[s].cols);
                for (std::size_t v = 0; v < vars; ++v)
                    for (std::size_t t = 0; t < slice.cols; ++t)
                        slice.at(v, t) = bundle.prefixes[s].at(b * vars + v, t);
                window.prefixes.push_back(std::move(slice));
            }
            Matrix truth(vars, target.cols);
            for (std::size_t v = 0; v < vars; ++v)
                for (std::size_t t = 0; t < target.cols; ++t)
                    truth.at(v, t) = target.at(b * vars + v, t);
            CombineResult comb = oracle_combine(window, truth);
            rb_se += comb.combined_mse;
            rb_ae += comb.combined_mae;
        }
        rep.windows += batch->size();
    }

    rep.mse = se / static_cast<double>(n_points);
    rep.mae = ae / static_cast<double>(n_points);
    rep.rebound_mse = rb_se / static_cast<double>(rep.windows);
    rep.rebound_mae = rb_ae / static_cast<double>(rep.windows);
    for (std::size_t s = 0; s < n_stages; ++s) {
        rep.stage_mse.push_back(stage_se[s] / static_cast<double>(stage_n[s]));
        rep.stage_mae.push_back(stage_ae[s] / static_cast<double>(stage_n[s]));
    }
    return rep;
}

inline nlohmann::json eval_report_json(const EvalReport& r) {
    return nlohmann::json{{"split", r.split},         {"horizon", r.horizon},
                          {"windows", r.windows},     {"mse", r.mse},
                          {"mae", r.mae},             {"rebound_mse", r.rebound_mse},
                          {"rebound_mae", r.rebound_mae}, {"stage_mse", r.stage_mse},
                          {"stage_mae", r.stage_mae}};
}

// ---------------------------------------------------------------------------
// Commands. Each returns the payload it produced; the CLI binary only parses
// arguments and prints.
// ---------------------------------------------------------------------------

namespace detail {

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot write " + path);
    out << text;
    require(out.good(), "write failed for " + path);
}

inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

struct TrainOutcome {
    std::string run_dir;
    EvalReport test_report;
    FitResult fit_result;
};

/// train <config.json>: fits the model, writes config echo, checkpoint,
/// history CSV and test metrics JSON into the run directory.
inline TrainOutcome cmd_train(const std::string& config_path) {
    const RunConfig cfg = load_run_config(config_path);
    const RawSeries raw = load_csv(cfg.data_path, cfg.date_column);
    const TimeSeriesDataset ds = split_and_standardize(raw, cfg.split, cfg.lookback, cfg.horizon);

    ReNFModel model = build_model(model_config_from_run(cfg, ds.n_variates()));
    TrainState state = init_train_state(model, cfg.seed);
    const TrainConfig tc = train_config_from_run(cfg);
    FitResult fitres = fit(model, state, ds, tc);

    std::filesystem::create_directories(cfg.out_dir);
    detail::write_text(cfg.out_dir + "/config.json", run_config_json(cfg).dump(2) + "\n");
    save_checkpoint(cfg.out_dir + "/checkpoint.bin", model, state);

    std::string csv = "epoch,train_loss,val_online,val_shadow,test_mse,test_mae\n";
    for (const auto& row : fitres.history) {
        csv += std::to_string(row.epoch) + "," + detail::fmt_double(row.train_loss) + "," +
               detail::fmt_double(row.val_online) + "," + detail::fmt_double(row.val_shadow) +
               "," + detail::fmt_double(row.test_mse) + "," + detail::fmt_double(row.test_mae) +
               "\n";
    }
    detail::write_text(cfg.out_dir + "/history.csv", csv);

    load_best_shadow(model, state);
    EvalReport test = evaluate_full(model, ds, Split::Test, cfg.batch_size);
    nlohmann::json metrics = eval_report_json(test);
    metrics["best_epoch"] = fitres.best_epoch;
    metrics["best_val_mse"] = fitres.best_val_mse;
    metrics["epochs_run"] = state.epochs_run;
    detail::write_text(cfg.out_dir + "/metrics.json", metrics.dump(2) + "\n");

    return {cfg.out_dir, test, fitres};
}

/// evaluate <run_dir> --split val|test: shadow-model metrics from the stored
/// checkpoint, every window included.
inline nlohmann::json cmd_evaluate(const std::string& run_dir, const std::string& split) {
    require(split == "val" || split == "test", "evaluate: split must be 'val' or 'test'");
    const std::string ckpt_path = run_dir + "/checkpoint.bin";
    require(std::filesystem::exists(ckpt_path), "evaluate: missing checkpoint " + ckpt_path);
    const RunConfig cfg = load_run_config(run_dir + "/config.json");

    LoadedCheckpoint loaded = load_checkpoint(ckpt_path);
    const RawSeries raw = load_csv(cfg.data_path, cfg.date_column);
    const TimeSeriesDataset ds = split_and_standardize(raw, cfg.split, cfg.lookback, cfg.horizon);
    require(ds.n_variates() == loaded.model.config.n_variates,
            "evaluate: dataset has " + std::to_string(ds.n_variates()) +
                " variates but checkpoint was trained with " +
                std::to_string(loaded.model.config.n_variates));

    EvalReport rep = evaluate_full(loaded.model, ds, split == "val" ? Split::Val : Split::Test,
                                   cfg.batch_size);
    return eval_report_json(rep);
}

/// simulate <scenario.json>: MNFP bound vs Monte Carlo error over a grid of
/// candidate counts; writes a JSON report and a plottable per-c CSV.
inline nlohmann::json cmd_simulate(const std::string& scenario_path) {
    std::ifstream in(scenario_path);
    require(in.good(), "simulate: cannot open " + scenario_path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("simulate: invalid JSON in " + scenario_path + ": " + e.what());
    }
    static const std::set<std::string> known = {"T",      "lambda", "b",    "sigma", "c_values",
                                                "trials", "process", "seed", "out_dir"};
    for (const auto& [key, _] : j.items())
        require(known.count(key) > 0, "scenario: unknown key '" + key + "'");

    MnfpScenario base;
    if (j.contains("T")) base.T = j.at("T").get<std::size_t>();
    if (j.contains("lambda")) base.lambda = j.at("lambda").get<double>();
    if (j.contains("b")) base.bias = j.at("b").get<double>();
    if (j.contains("sigma")) base.sigma = j.at("sigma").get<double>();
    if (j.contains("trials")) base.trials = j.at("trials").get<std::size_t>();
    if (j.contains("process")) base.process = j.at("process").get<std::string>();
    if (j.contains("seed")) base.seed = j.at("seed").get<std::uint64_t>();
    std::vector<std::size_t> c_values = {1, 4, 16, 64};
    if (j.contains("c_values")) c_values = j.at("c_values").get<std::vector<std::size_t>>();
    require(!c_values.empty(), "scenario: c_values must be non-empty");
    const std::string out_dir = j.contains("out_dir") ? j.at("out_dir").get<std::string>() : ".";

    nlohmann::json rows = nlohmann::json::array();
    std::string csv = "c,bound,mean_total_error,violation_rate,clipped_fraction\n";
    for (std::size_t c : c_values) {
        MnfpScenario sc = base;
        sc.candidates = c;
        MnfpReport rep = mnfp_simulate(sc);
        rows.push_back(nlohmann::json{{"c", c},
                                      {"bound", rep.bound},
                                      {"mean_total_error", rep.mean_total_error},
                                      {"violation_rate", rep.violation_rate},
                                      {"clipped_fraction", rep.clipped_fraction}});
        csv += std::to_string(c) + "," + detail::fmt_double(rep.bound) + "," +
               detail::fmt_double(rep.mean_total_error) + "," +
               detail::fmt_double(rep.violation_rate) + "," +
               detail::fmt_double(rep.clipped_fraction) + "\n";
    }
    nlohmann::json report{{"T", base.T},         {"lambda", base.lambda},
                          {"b", base.bias},      {"sigma", base.sigma},
                          {"trials", base.trials}, {"process", base.process},
                          {"seed", base.seed},   {"rows", rows}};
    std::filesystem::create_directories(out_dir);
    detail::write_text(out_dir + "/mnfp_report.json", report.dump(2) + "\n");
    detail::write_text(out_dir + "/mnfp_curve.csv", csv);
    return report;
}

inline double cmd_bound(std::size_t T, double lambda, double b, double sigma, std::size_t c) {
    return mnfp_bound(T, lambda, b, sigma, c);
}

}  // namespace renf
