#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "renf/data.hpp"
#include "renf/model.hpp"
#include "renf/nn.hpp"

namespace renf {

struct TrainConfig {
    double lr = 1e-3;
    double ema_decay = 0.995;
    bool ema_enabled = true;
    std::size_t epochs = 30;
    std::size_t patience = 5;
    std::size_t batch_size = 32;
    bool track_test_curve = true;  // per-epoch test metrics in the history
};

/// Online/shadow parameter pair plus optimizer bookkeeping.
struct TrainState {
    std::vector<Matrix> shadow;       // theta', aligned with model.parameters()
    std::vector<Matrix> best_shadow;  // snapshot at the best shadow-val epoch
    std::vector<Matrix> best_adam_m;
    std::vector<Matrix> best_adam_v;
    std::int64_t global_step = 0;
    std::int64_t best_step = 0;
    std::size_t epochs_run = 0;
    double best_val_mse = std::numeric_limits<double>::infinity();
    std::size_t patience_counter = 0;
    std::uint64_t seed = 2021;
};

inline TrainState init_train_state(ReNFModel& model, std::uint64_t seed) {
    TrainState st;
    st.seed = seed;
    for (Param* p : model.parameters()) st.shadow.push_back(p->value);  // theta' starts at theta
    return st;
}

/// theta'_new = decay * theta'_prev + (1 - decay) * theta, every optimizer step.
inline void ema_update(std::vector<Matrix>& shadow, const std::vector<Param*>& params,
                       double decay) {
    require(shadow.size() == params.size(), "ema_update: parameter count mismatch");
    require(decay >= 0.0 && decay <= 1.0, "ema_update: decay outside [0,1]");
    for (std::size_t i = 0; i < shadow.size(); ++i) {
        require(shadow[i].same_shape(params[i]->value), "ema_update: shape mismatch");
        double* s = shadow[i].data.data();
        const double* v = params[i]->value.data.data();
        const std::size_t n = shadow[i].size();
        for (std::size_t j = 0; j < n; ++j) s[j] = decay * s[j] + (1.0 - decay) * v[j];
    }
}

enum class ParamChoice { Online, Shadow };

namespace detail {

/// Swaps a value set into the model for the lifetime of the guard.
class ParamSwapGuard {
public:
    ParamSwapGuard(std::vector<Param*> params, std::vector<Matrix>& values)
        : params_(std::move(params)), values_(&values) {
        for (std::size_t i = 0; i < params_.size(); ++i)
            std::swap(params_[i]->value.data, (*values_)[i].data);
    }
    ~ParamSwapGuard() {
        for (std::size_t i = 0; i < params_.size(); ++i)
            std::swap(params_[i]->value.data, (*values_)[i].data);
    }
    ParamSwapGuard(const ParamSwapGuard&) = delete;
    ParamSwapGuard& operator=(const ParamSwapGuard&) = delete;

private:
    std::vector<Param*> params_;
    std::vector<Matrix>* values_;
};

}  // namespace detail

/**
 * Final-stage forecast metrics over every window of a split; the last
 * partial batch is never dropped, and the accumulation is over points, so
 * the result does not depend on batch_size.
 */
inline std::pair<double, double> evaluate_split(ReNFModel& model, const TimeSeriesDataset& ds,
                                                Split split, std::size_t batch_size) {
    auto starts = dataset_windows(ds, split);
    require(!starts.empty(), std::string("evaluate: no windows in ") + split_name(split));
    BatchIterator it(ds, starts, batch_size, /*shuffle=*/false, /*seed=*/0);
    double se = 0.0, ae = 0.0;
    std::size_t count = 0;
    while (auto batch = it.next()) {
        ForecastBundle bundle = bdo_forward(model, batch->inputs, /*training=*/false);
        const Matrix target = to_rows(batch->targets);
        const Matrix& pred = bundle.final_forecast();
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double d = pred.data[i] - target.data[i];
            se += d * d;
            ae += std::abs(d);
        }
        count += pred.size();
    }
    return {se / static_cast<double>(count), ae / static_cast<double>(count)};
}

/// Metrics with either the online or the shadow parameter set.
inline std::pair<double, double> validate(ReNFModel& model, TrainState& state,
                                          const TimeSeriesDataset& ds, ParamChoice choice,
                                          Split split, std::size_t batch_size) {
    if (choice == ParamChoice::Shadow) {
        detail::ParamSwapGuard guard(model.parameters(), state.shadow);
        return evaluate_split(model, ds, split, batch_size);
    }
    return evaluate_split(model, ds, split, batch_size);
}

/**
 * One pass over the training windows: forward, hierarchical loss, backward,
 * Adam, EMA shadow update per step. Returns the mean batch loss.
 */
inline double train_epoch(ReNFModel& model, TrainState& state, const TimeSeriesDataset& ds,
                          const TrainConfig& cfg, std::size_t epoch) {
    auto params = model.parameters();
    AdamConfig adam;
    adam.lr = cfg.lr;
    BatchIterator it(ds, dataset_windows(ds, Split::Train), cfg.batch_size, /*shuffle=*/true,
                     state.seed, epoch);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    while (auto batch = it.next()) {
        ++state.global_step;
        ForwardCache cache;
        ForecastBundle bundle =
            bdo_forward(model, batch->inputs, /*training=*/true,
                        static_cast<std::uint64_t>(state.global_step), &cache);
        const Matrix target = to_rows(batch->targets);
        HierLoss loss = hierarchical_loss(bundle, target, model.config.alpha_mix,
                                          model.config.gamma_stage,
                                          model.config.supervise_prefixes);
        require(std::isfinite(loss.total),
                "train_epoch: non-finite loss at step " + std::to_string(state.global_step) +
                    " (epoch " + std::to_string(epoch) + "); check lr/dropout settings");
        bdo_backward(model, cache, loss.grads);
        adam_step(params, adam, state.global_step);
        ema_update(state.shadow, params, cfg.ema_enabled ? cfg.ema_decay : 0.0);
        loss_sum += loss.total;
        ++batches;
    }
    require(batches > 0, "train_epoch: no training windows");
    return loss_sum / static_cast<double>(batches);
}

struct EpochStats {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_online = 0.0;  // MSE, online params
    double val_shadow = 0.0;  // MSE, shadow params
    double test_mse = 0.0;
    double test_mae = 0.0;
};

struct FitResult {
    std::vector<EpochStats> history;
    std::size_t best_epoch = 0;
    double best_val_mse = 0.0;
    bool early_stopped = false;
};

/**
 * Full training run with shadow-based early stopping. The monitored metric
 * is the shadow model's validation MSE of the final-stage forecast; the best
 * shadow snapshot (plus optimizer moments) is kept in the state.
 */
inline FitResult fit(ReNFModel& model, TrainState& state, const TimeSeriesDataset& ds,
                     const TrainConfig& cfg) {
    require(cfg.lr > 0.0, "fit: lr must be positive");
    require(cfg.ema_decay >= 0.0 && cfg.ema_decay <= 1.0, "fit: ema_decay outside [0,1]");
    auto params = model.parameters();
    FitResult result;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        EpochStats row;
        row.epoch = epoch;
        row.train_loss = train_epoch(model, state, ds, cfg, epoch);
        row.val_online = validate(model, state, ds, ParamChoice::Online, Split::Val,
                                  cfg.batch_size)
                             .first;
        row.val_shadow = validate(model, state, ds, ParamChoice::Shadow, Split::Val,
                                  cfg.batch_size)
                             .first;
        if (cfg.track_test_curve) {
            auto [tmse, tmae] =
                validate(model, state, ds, ParamChoice::Shadow, Split::Test, cfg.batch_size);
            row.test_mse = tmse;
            row.test_mae = tmae;
        }
        result.history.push_back(row);
        state.epochs_run = epoch;

        if (row.val_shadow < state.best_val_mse) {
            state.best_val_mse = row.val_shadow;
            state.patience_counter = 0;
            result.best_epoch = epoch;
            state.best_shadow = state.shadow;
            state.best_step = state.global_step;
            state.best_adam_m.clear();
            state.best_adam_v.clear();
            for (Param* p : params) {
                state.best_adam_m.push_back(p->adam_m);
                state.best_adam_v.push_back(p->adam_v);
            }
        } else {
            ++state.patience_counter;
            if (state.patience_counter >= cfg.patience) {
                result.early_stopped = true;
                break;
            }
        }
    }
    result.best_val_mse = state.best_val_mse;
    return result;
}

/// Installs the best shadow snapshot as the model's live parameters.
inline void load_best_shadow(ReNFModel& model, const TrainState& state) {
    auto params = model.parameters();
    require(state.best_shadow.size() == params.size(), "load_best_shadow: no snapshot recorded");
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = state.best_shadow[i];
}

}  // namespace renf
