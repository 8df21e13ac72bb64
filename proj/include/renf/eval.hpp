#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "renf/matrix.hpp"
#include "renf/model.hpp"
#include "renf/rng.hpp"

namespace renf {

/// Mean squared / absolute error over all entries of two same-shape buffers.
inline std::pair<double, double> point_metrics(const Matrix& yhat, const Matrix& y) {
    require(yhat.same_shape(y), "point_metrics: shape mismatch");
    require(!yhat.empty(), "point_metrics: empty input");
    double se = 0.0, ae = 0.0;
    for (std::size_t i = 0; i < yhat.size(); ++i) {
        const double d = yhat.data[i] - y.data[i];
        se += d * d;
        ae += std::abs(d);
    }
    const double n = static_cast<double>(yhat.size());
    return {se / n, ae / n};
}

/**
 * Oracle post-combination: at each timestep the candidate value closest to
 * the truth wins, ties going to the lowest stage. Candidates for timestep t
 * are the stages whose prefix covers t. A dynamic empirical bound, not a
 * deployable forecaster.
 */
struct CombineResult {
    Matrix combined;               // [rows x L]
    std::vector<int> chosen;       // stage index (1-based) per (row, t), row-major
    double combined_mse = 0.0;
    double combined_mae = 0.0;
    std::vector<double> candidate_mse;        // stage n over its region 1..h_n
    std::vector<double> candidate_mae;
    std::vector<double> combined_region_mse;  // combined restricted to 1..h_n
};

inline CombineResult oracle_combine(const ForecastBundle& bundle, const Matrix& truth_rows) {
    require(bundle.stages() >= 1, "oracle_combine: empty bundle");
    const std::size_t rows = truth_rows.rows;
    const std::size_t L = truth_rows.cols;
    require(bundle.final_forecast().cols == L && bundle.final_forecast().rows == rows,
            "oracle_combine: final prefix must cover the full horizon");

    CombineResult res;
    res.combined = Matrix(rows, L);
    res.chosen.assign(rows * L, 0);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t t = 0; t < L; ++t) {
            const double truth = truth_rows.at(r, t);
            double best_err = std::numeric_limits<double>::infinity();
            double best_val = 0.0;
            int best_stage = 0;
            for (std::size_t s = 0; s < bundle.stages(); ++s) {
                if (bundle.prefixes[s].cols <= t) continue;
                const double v = bundle.prefixes[s].at(r, t);
                const double err = std::abs(v - truth);
                if (err < best_err) {  // strict: ties keep the lowest stage
                    best_err = err;
                    best_val = v;
                    best_stage = static_cast<int>(s) + 1;
                }
            }
            res.combined.at(r, t) = best_val;
            res.chosen[r * L + t] = best_stage;
        }
    }

    auto [mse, mae] = point_metrics(res.combined, truth_rows);
    res.combined_mse = mse;
    res.combined_mae = mae;
    for (std::size_t s = 0; s < bundle.stages(); ++s) {
        const std::size_t h = bundle.prefixes[s].cols;
        double cse = 0.0, cae = 0.0, ose = 0.0;
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t t = 0; t < h; ++t) {
                const double dc = bundle.prefixes[s].at(r, t) - truth_rows.at(r, t);
                cse += dc * dc;
                cae += std::abs(dc);
                const double doc = res.combined.at(r, t) - truth_rows.at(r, t);
                ose += doc * doc;
            }
        const double n = static_cast<double>(rows * h);
        res.candidate_mse.push_back(cse / n);
        res.candidate_mae.push_back(cae / n);
        res.combined_region_mse.push_back(ose / n);
    }
    return res;
}

// ---------------------------------------------------------------------------
// MNFP bound and simulator.
// ---------------------------------------------------------------------------

/// Closed-form l1-error bound T (lambda + sqrt(c) (b + sigma)) / sqrt(c).
inline double mnfp_bound(std::size_t T, double lambda, double b, double sigma, std::size_t c) {
    require(c >= 1, "mnfp_bound: need at least one candidate");
    require(lambda > 0.0, "mnfp_bound: lambda must be positive");
    const double sc = std::sqrt(static_cast<double>(c));
    return static_cast<double>(T) * (lambda + sc * (b + sigma)) / sc;
}

struct MnfpScenario {
    std::size_t T = 96;       // horizon
    double lambda = 1.0;      // bound on |values|
    double bias = 0.0;        // b, sup_t |mu_hat - mu|
    double sigma = 0.0;       // per-step noise std (sup over t)
    std::size_t candidates = 1;
    std::size_t trials = 1000;
    std::string process = "sinusoid";
    std::uint64_t seed = 2021;

    void validate() const {
        require(lambda > 0.0, "scenario: lambda must be positive");
        require(candidates >= 1, "scenario: need c >= 1");
        require(sigma >= 0.0 && bias >= 0.0, "scenario: sigma and b must be non-negative");
        require(trials >= 1, "scenario: need at least one trial");
        require(process == "sinusoid", "scenario: unknown process '" + process + "'");
    }
};

struct MnfpReport {
    double mean_total_error = 0.0;  // trial average of sum_t |x_t - mean_i y_t^(i)|
    double std_error = 0.0;         // standard error of that trial average
    double bound = 0.0;
    double violation_rate = 0.0;    // per-trial exceedances (bound holds in expectation)
    double clipped_fraction = 0.0;  // candidate draws whose noise window was narrowed by A1
    std::size_t trials = 0;
};

namespace detail {

/// Gaussian rejection-sampled into [-cap, cap]; zero when sd == 0.
inline double truncated_gauss(std::mt19937_64& rng, double sd, double cap) {
    if (sd == 0.0 || cap == 0.0) return 0.0;
    std::normal_distribution<double> dist(0.0, sd);
    for (int i = 0; i < 1000; ++i) {
        const double v = dist(rng);
        if (std::abs(v) <= cap) return v;
    }
    return 0.0;
}

}  // namespace detail

/**
 * Monte Carlo check of the MNFP bound. Each trial builds a bounded
 * sinusoidal truth, an observation within sigma of it, and c candidate
 * series mu_hat_t + noise with sup_t |mu_hat_t - mu_t| = b, then measures
 * the l1 distance between the observation and the candidate mean.
 */
inline MnfpReport mnfp_simulate(const MnfpScenario& sc) {
    sc.validate();
    MnfpReport rep;
    rep.bound = mnfp_bound(sc.T, sc.lambda, sc.bias, sc.sigma, sc.candidates);
    rep.trials = sc.trials;

    const double period = 24.0;
    double total = 0.0, total_sq = 0.0;
    std::size_t violations = 0;
    std::size_t clipped = 0, draws = 0;
    for (std::size_t trial = 0; trial < sc.trials; ++trial) {
        auto rng = make_rng(sc.seed, "mnfp", trial, sc.candidates);
        double trial_err = 0.0;
        for (std::size_t t = 0; t < sc.T; ++t) {
            const double mu = std::clamp(
                0.8 * sc.lambda * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / period),
                -sc.lambda, sc.lambda);
            const double x = std::clamp(mu + detail::truncated_gauss(rng, sc.sigma, sc.sigma),
                                        -sc.lambda, sc.lambda);
            // Alternating-sign bias realizes sup_t |mu_hat - mu| = b; keeping
            // mu_hat inside the lambda box makes a mean-mu_hat bounded
            // candidate distribution possible at all.
            const double mu_hat =
                std::clamp(mu + (t % 2 == 0 ? sc.bias : -sc.bias), -sc.lambda, sc.lambda);
            // Candidate noise is truncated symmetrically inside the headroom
            // to the lambda box: the candidate mean stays exactly mu_hat, as
            // A2 requires, while every draw respects A1.
            const double headroom = std::max(0.0, sc.lambda - std::abs(mu_hat));
            const double cap = std::min(3.0 * sc.sigma, headroom);
            double mean_y = 0.0;
            for (std::size_t i = 0; i < sc.candidates; ++i) {
                const double y = mu_hat + detail::truncated_gauss(rng, sc.sigma, cap);
                ++draws;
                if (cap < 3.0 * sc.sigma) ++clipped;
                mean_y += y;
            }
            mean_y /= static_cast<double>(sc.candidates);
            trial_err += std::abs(x - mean_y);
        }
        total += trial_err;
        total_sq += trial_err * trial_err;
        if (trial_err > rep.bound) ++violations;
    }
    rep.mean_total_error = total / static_cast<double>(sc.trials);
    if (sc.trials > 1) {
        const double var = std::max(0.0, (total_sq - total * total / static_cast<double>(sc.trials)) /
                                             static_cast<double>(sc.trials - 1));
        rep.std_error = std::sqrt(var / static_cast<double>(sc.trials));
    }
    rep.violation_rate = static_cast<double>(violations) / static_cast<double>(sc.trials);
    rep.clipped_fraction = draws ? static_cast<double>(clipped) / static_cast<double>(draws) : 0.0;
    return rep;
}

// ---------------------------------------------------------------------------
// Variance decomposition of the total summed error.
// ---------------------------------------------------------------------------

/// var(sum_t e_t) = sum_t var(e_t) + 2 sum_{t<t'} cov(e_t, e_t'). Sample
/// statistics with 1/(m-1) throughout, so the identity is exact.
struct VarianceDecomposition {
    double var_sum = 0.0;    // sum_t var(e_t)
    double cov_sum = 0.0;    // 2 sum_{t<t'} cov(e_t, e_t')
    double total_var = 0.0;  // var(sum_t e_t)
};

inline VarianceDecomposition variance_decompose(const Matrix& errors) {
    const std::size_t m = errors.rows, T = errors.cols;
    require(m >= 2, "variance_decompose: need at least 2 trials");

    std::vector<double> mean(T, 0.0);
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t t = 0; t < T; ++t) mean[t] += errors.at(r, t);
    for (double& v : mean) v /= static_cast<double>(m);

    Matrix centered(m, T);
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t t = 0; t < T; ++t) centered.at(r, t) = errors.at(r, t) - mean[t];

    const double norm = 1.0 / static_cast<double>(m - 1);
    VarianceDecomposition out;
    for (std::size_t t = 0; t < T; ++t) {
        double acc = 0.0;
        for (std::size_t r = 0; r < m; ++r) acc += centered.at(r, t) * centered.at(r, t);
        out.var_sum += acc * norm;
    }
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t u = t + 1; u < T; ++u) {
            double acc = 0.0;
            for (std::size_t r = 0; r < m; ++r) acc += centered.at(r, t) * centered.at(r, u);
            out.cov_sum += 2.0 * acc * norm;
        }
    double sum_mean = 0.0;
    for (double v : mean) sum_mean += v;
    double acc = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
        double rowsum = 0.0;
        for (std::size_t t = 0; t < T; ++t) rowsum += errors.at(r, t);
        acc += (rowsum - sum_mean) * (rowsum - sum_mean);
    }
    out.total_var = acc * norm;
    return out;
}

}  // namespace renf
