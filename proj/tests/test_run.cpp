#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "renf/run.hpp"

using namespace renf;
namespace fs = std::filesystem;

namespace {

std::string write_sine_csv(const std::string& name, std::size_t n = 400) {
    const std::string path = "/tmp/renf_run_" + name + ".csv";
    std::ofstream out(path);
    out << "date,s0,s1\n";
    for (std::size_t t = 0; t < n; ++t) {
        const double a = std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / 24.0);
        const double b = std::cos(2.0 * std::numbers::pi * static_cast<double>(t) / 96.0);
        char ts[32];
        std::snprintf(ts, sizeof(ts), "2020-01-01 %06zu", t);
        out << ts << "," << a << "," << b << "\n";
    }
    return path;
}

nlohmann::json base_config(const std::string& data_path, const std::string& out_dir) {
    return nlohmann::json{{"data_path", data_path},
                          {"out_dir", out_dir},
                          {"lookback", 24},
                          {"horizon", 8},
                          {"stages", 2},
                          {"d_model", 16},
                          {"dropout", 0.0},
                          {"lr", 0.005},
                          {"epochs", 3},
                          {"patience", 3},
                          {"batch_size", 16},
                          {"alpha_mix", 1.0},
                          {"seed", 2021}};
}

std::string write_config(const nlohmann::json& j, const std::string& name) {
    const std::string path = "/tmp/renf_cfg_" + name + ".json";
    std::ofstream out(path);
    out << j.dump(2);
    return path;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("unknown config keys are rejected") {
    auto j = base_config("/tmp/x.csv", "/tmp/y");
    j["lokback"] = 24;  // typo
    CHECK_THROWS_WITH_AS(parse_run_config(j), doctest::Contains("unknown key 'lokback'"),
                         std::runtime_error);
}

TEST_CASE("config rejection names the divisibility constraint") {
    auto j = base_config("/tmp/x.csv", "/tmp/y");
    j["stages"] = 5;
    j["horizon"] = 96;
    try {
        parse_run_config(j);
        FAIL("expected rejection");
    } catch (const std::exception& e) {
        const std::string msg = e.what();
        CHECK(msg.find("stages (5)") != std::string::npos);
        CHECK(msg.find("horizon (96)") != std::string::npos);
    }
}

TEST_CASE("config echo round-trips") {
    auto j = base_config("/tmp/x.csv", "/tmp/y");
    const RunConfig c = parse_run_config(j);
    const RunConfig c2 = parse_run_config(run_config_json(c));
    CHECK(run_config_json(c) == run_config_json(c2));
}

TEST_CASE("train writes the four run artifacts") {
    const std::string csv = write_sine_csv("artifacts");
    const std::string out_dir = "/tmp/renf_run_artifacts_dir";
    fs::remove_all(out_dir);
    const std::string cfg = write_config(base_config(csv, out_dir), "artifacts");

    const TrainOutcome outcome = cmd_train(cfg);
    CHECK(outcome.run_dir == out_dir);
    for (const char* name : {"config.json", "checkpoint.bin", "history.csv", "metrics.json"})
        CHECK(fs::exists(out_dir + "/" + std::string(name)));

    const auto metrics = nlohmann::json::parse(slurp(out_dir + "/metrics.json"));
    CHECK(metrics.at("split") == "test");
    CHECK(metrics.at("rebound_mse").get<double>() <= metrics.at("mse").get<double>());
    CHECK(metrics.at("stage_mse").size() == 2);

    // history has one row per epoch actually run
    std::istringstream hist(slurp(out_dir + "/history.csv"));
    std::string line;
    std::size_t lines = 0;
    while (std::getline(hist, line))
        if (!line.empty()) ++lines;
    CHECK(lines == outcome.fit_result.history.size() + 1);

    // the config echo parses back into an identical config
    const RunConfig echoed = parse_run_config(nlohmann::json::parse(slurp(out_dir + "/config.json")));
    CHECK(run_config_json(echoed) == run_config_json(load_run_config(cfg)));
}

TEST_CASE("train is byte-deterministic and evaluate is idempotent") {
    const std::string csv = write_sine_csv("determinism");
    const std::string cfg_a =
        write_config(base_config(csv, "/tmp/renf_run_det_a"), "det_a");
    const std::string cfg_b =
        write_config(base_config(csv, "/tmp/renf_run_det_b"), "det_b");
    fs::remove_all("/tmp/renf_run_det_a");
    fs::remove_all("/tmp/renf_run_det_b");
    cmd_train(cfg_a);
    cmd_train(cfg_b);
    CHECK(slurp("/tmp/renf_run_det_a/metrics.json") == slurp("/tmp/renf_run_det_b/metrics.json"));
    CHECK(slurp("/tmp/renf_run_det_a/history.csv") == slurp("/tmp/renf_run_det_b/history.csv"));
    CHECK(slurp("/tmp/renf_run_det_a/checkpoint.bin") ==
          slurp("/tmp/renf_run_det_b/checkpoint.bin"));

    const auto eval1 = cmd_evaluate("/tmp/renf_run_det_a", "test");
    const auto eval2 = cmd_evaluate("/tmp/renf_run_det_a", "test");
    CHECK(eval1.dump() == eval2.dump());
    CHECK(eval1.at("rebound_mse").get<double>() <= eval1.at("mse").get<double>());

    // the run dir is self-describing: evaluate reproduces the training-time
    // metrics from the artifacts alone
    const auto stored = nlohmann::json::parse(slurp("/tmp/renf_run_det_a/metrics.json"));
    for (const char* key : {"mse", "mae", "rebound_mse", "rebound_mae"})
        CHECK(eval1.at(key).get<double>() == stored.at(key).get<double>());
    CHECK(eval1.at("stage_mse") == stored.at("stage_mse"));
    CHECK(eval1.at("windows") == stored.at("windows"));

    const auto val = cmd_evaluate("/tmp/renf_run_det_a", "val");
    CHECK(val.at("split") == "val");
}

TEST_CASE("rebound in the report equals a per-window oracle recomputation") {
    const std::string csv = write_sine_csv("rebound", 300);
    const RawSeries raw = load_csv(csv);
    const auto ds = split_and_standardize(raw, {6, 2, 2}, 16, 4);

    ModelConfig mc;
    mc.variant = Variant::Alpha;
    mc.stages = 2;
    mc.lookback = 16;
    mc.horizon = 4;
    mc.d_model = 8;
    mc.n_variates = 2;
    mc.dropout = 0.0;
    mc.seed = 11;
    ReNFModel model = build_model(mc);
    const EvalReport rep = evaluate_full(model, ds, Split::Test, 5);

    // independent recomputation, one window at a time
    auto starts = dataset_windows(ds, Split::Test);
    double rb = 0.0;
    for (std::size_t s : starts) {
        Tensor3 x(1, 16, 2);
        for (std::size_t t = 0; t < 16; ++t)
            for (std::size_t v = 0; v < 2; ++v) x.at(0, t, v) = ds.standardized.at(s + t, v);
        Matrix truth(2, 4);
        for (std::size_t t = 0; t < 4; ++t)
            for (std::size_t v = 0; v < 2; ++v) truth.at(v, t) = ds.standardized.at(s + 16 + t, v);
        const ForecastBundle b = bdo_forward(model, x, false);
        double se = 0.0;
        for (std::size_t v = 0; v < 2; ++v)
            for (std::size_t t = 0; t < 4; ++t) {
                double best = std::abs(b.prefixes[1].at(v, t) - truth.at(v, t));
                if (t < 2) best = std::min(best, std::abs(b.prefixes[0].at(v, t) - truth.at(v, t)));
                se += best * best;
            }
        rb += se / 8.0;
    }
    rb /= static_cast<double>(starts.size());
    CHECK(rep.rebound_mse == doctest::Approx(rb).epsilon(1e-12));
}

TEST_CASE("evaluate requires a checkpoint") {
    fs::create_directories("/tmp/renf_run_empty");
    CHECK_THROWS_WITH_AS(cmd_evaluate("/tmp/renf_run_empty", "test"),
                         doctest::Contains("missing checkpoint"), std::runtime_error);
}

TEST_CASE("simulate emits one CSV row per candidate count") {
    nlohmann::json scenario{{"T", 48},     {"lambda", 1.0},          {"b", 0.1},
                            {"sigma", 0.2}, {"c_values", {1, 4, 16, 64}}, {"trials", 200},
                            {"seed", 7},   {"out_dir", "/tmp/renf_mnfp_test"}};
    const std::string path = write_config(scenario, "scenario");
    const auto report = cmd_simulate(path);
    REQUIRE(report.at("rows").size() == 4);
    for (const auto& row : report.at("rows"))
        CHECK(row.at("mean_total_error").get<double>() <= row.at("bound").get<double>());
    // c = 1 bound collapses to T (lambda + b + sigma)
    CHECK(report.at("rows")[0].at("bound").get<double>() ==
          doctest::Approx(48.0 * (1.0 + 0.1 + 0.2)).epsilon(1e-12));

    std::istringstream csv(slurp("/tmp/renf_mnfp_test/mnfp_curve.csv"));
    std::string line;
    std::size_t rows = 0;
    while (std::getline(csv, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 5);  // header + 4 cells
}

TEST_CASE("bound command value") {
    CHECK(cmd_bound(96, 1.0, 0.0, 0.3, 4) ==
          doctest::Approx(96.0 * (1.0 + 2.0 * 0.3) / 2.0).epsilon(1e-12));
}
