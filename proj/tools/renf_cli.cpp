// Command-line front end: train / evaluate / simulate / bound.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "renf/run.hpp"

int main(int argc, char** argv) {
    CLI::App app{"ReNF long-term time series forecasting engine"};
    app.require_subcommand(1);

    std::string config_path;
    auto* train = app.add_subcommand("train", "Train a model from a run config");
    train->add_option("config", config_path, "Path to run config JSON")->required();

    std::string run_dir, split = "test";
    auto* evaluate = app.add_subcommand("evaluate", "Evaluate a trained run directory");
    evaluate->add_option("run_dir", run_dir, "Run directory written by train")->required();
    evaluate->add_option("--split", split, "Split to evaluate: val or test")
        ->check(CLI::IsMember({"val", "test"}));

    std::string scenario_path;
    auto* simulate = app.add_subcommand("simulate", "Run the MNFP bound simulator");
    simulate->add_option("scenario", scenario_path, "Path to scenario JSON")->required();

    std::size_t T = 96, c = 1;
    double lambda = 1.0, b = 0.0, sigma = 0.0;
    auto* bound = app.add_subcommand("bound", "Print the closed-form MNFP bound");
    bound->add_option("--T", T, "Horizon length")->required();
    bound->add_option("--lambda", lambda, "Bound on |values|")->required();
    bound->add_option("--b", b, "Predictive bias bound")->required();
    bound->add_option("--sigma", sigma, "Per-step noise std")->required();
    bound->add_option("--c", c, "Candidate count")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) {
            renf::TrainOutcome out = renf::cmd_train(config_path);
            nlohmann::json summary{{"run_dir", out.run_dir},
                                   {"test_mse", out.test_report.mse},
                                   {"test_mae", out.test_report.mae},
                                   {"rebound_mse", out.test_report.rebound_mse},
                                   {"best_epoch", out.fit_result.best_epoch}};
            std::cout << summary.dump(2) << "\n";
        } else if (evaluate->parsed()) {
            std::cout << renf::cmd_evaluate(run_dir, split).dump(2) << "\n";
        } else if (simulate->parsed()) {
            std::cout << renf::cmd_simulate(scenario_path).dump(2) << "\n";
        } else if (bound->parsed()) {
            std::printf("%.17g\n", renf::cmd_bound(T, lambda, b, sigma, c));
        }
    } catch (const std::exception& e) {
        std::cerr << nlohmann::json{{"error", e.what()}}.dump() << "\n";
        return 1;
    }
    return 0;
}
