#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numbers>

#include "renf/checkpoint.hpp"
#include "renf/training.hpp"

using namespace renf;

namespace {

/// Noiseless sum-of-two-sinusoids series, one variate per phase shift.
RawSeries sine_series(std::size_t n, std::size_t vars = 1, double noise = 0.0,
                      unsigned seed = 0) {
    RawSeries raw;
    raw.values = Matrix(n, vars);
    std::mt19937 rng(seed);
    std::normal_distribution<double> dist(0.0, noise > 0.0 ? noise : 1.0);
    for (std::size_t v = 0; v < vars; ++v) raw.columns.push_back("s" + std::to_string(v));
    for (std::size_t t = 0; t < n; ++t) {
        raw.timestamps.push_back("t" + std::to_string(t));
        for (std::size_t v = 0; v < vars; ++v) {
            const double phase = 0.5 * static_cast<double>(v);
            double x = std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / 24.0 + phase) +
                       0.5 * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / 96.0);
            if (noise > 0.0) x += dist(rng);
            raw.values.at(t, v) = x;
        }
    }
    return raw;
}

ModelConfig small_model_config(std::size_t t_x, std::size_t L, std::size_t stages,
                               std::size_t d_model, std::uint64_t seed = 2021) {
    ModelConfig cfg;
    cfg.variant = Variant::Alpha;
    cfg.stages = stages;
    cfg.lookback = t_x;
    cfg.horizon = L;
    cfg.d_model = d_model;
    cfg.n_variates = 1;
    cfg.dropout = 0.0;
    cfg.alpha_mix = 1.0;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("ema_update endpoint decays") {
    Param p("p", 1, 3);
    p.value.data = {1.0, -2.0, 0.5};
    std::vector<Param*> ps = {&p};
    std::vector<Matrix> shadow = {Matrix(1, 3, 9.0)};

    ema_update(shadow, ps, 0.0);  // decay 0: shadow = online
    for (std::size_t i = 0; i < 3; ++i) CHECK(shadow[0].data[i] == p.value.data[i]);

    shadow[0] = Matrix(1, 3, 9.0);
    ema_update(shadow, ps, 1.0);  // decay 1: shadow unchanged
    for (std::size_t i = 0; i < 3; ++i) CHECK(shadow[0].data[i] == 9.0);
}

TEST_CASE("ema_update two-step hand value") {
    Param p("p", 1, 1);
    p.value.data = {1.0};
    std::vector<Param*> ps = {&p};
    std::vector<Matrix> shadow = {Matrix(1, 1, 0.0)};
    ema_update(shadow, ps, 0.9);
    ema_update(shadow, ps, 0.9);
    CHECK(shadow[0].data[0] == doctest::Approx(0.19).epsilon(1e-15));
}

TEST_CASE("ema_update is exactly homogeneous") {
    Param p("p", 1, 4), p2("p2", 1, 4);
    p.value.data = {0.3, -1.7, 2.2, 0.9};
    for (std::size_t i = 0; i < 4; ++i) p2.value.data[i] = 2.0 * p.value.data[i];
    std::vector<Param*> ps = {&p}, ps2 = {&p2};
    std::vector<Matrix> s1 = {Matrix(1, 4)}, s2 = {Matrix(1, 4)};
    s1[0].data = {0.1, 0.2, -0.4, 1.1};
    for (std::size_t i = 0; i < 4; ++i) s2[0].data[i] = 2.0 * s1[0].data[i];
    ema_update(s1, ps, 0.97);
    ema_update(s2, ps2, 0.97);
    for (std::size_t i = 0; i < 4; ++i) CHECK(s2[0].data[i] == 2.0 * s1[0].data[i]);
}

TEST_CASE("ema_update rejects shape mismatch") {
    Param p("p", 1, 3);
    std::vector<Param*> ps = {&p};
    std::vector<Matrix> shadow = {Matrix(1, 4)};
    CHECK_THROWS(ema_update(shadow, ps, 0.5));
}

TEST_CASE("training loss decreases on a noiseless sinusoid") {
    const auto ds = split_and_standardize(sine_series(600), {6, 2, 2}, 24, 8);
    ReNFModel m = build_model(small_model_config(24, 8, 2, 16));
    TrainState st = init_train_state(m, 2021);
    TrainConfig tc;
    tc.lr = 1e-3;
    tc.batch_size = 16;
    const double e1 = train_epoch(m, st, ds, tc, 1);
    const double e2 = train_epoch(m, st, ds, tc, 2);
    CHECK(e2 < e1);
}

TEST_CASE("identical seeds give identical loss sequences") {
    const auto ds = split_and_standardize(sine_series(400), {6, 2, 2}, 16, 4);
    auto run = [&] {
        ReNFModel m = build_model(small_model_config(16, 4, 2, 8, 5));
        TrainState st = init_train_state(m, 99);
        TrainConfig tc;
        tc.batch_size = 8;
        std::vector<double> losses;
        for (std::size_t e = 1; e <= 3; ++e) losses.push_back(train_epoch(m, st, ds, tc, e));
        return losses;
    };
    CHECK(run() == run());
}

TEST_CASE("disabled EMA keeps the shadow glued to the online params") {
    const auto ds = split_and_standardize(sine_series(400), {6, 2, 2}, 16, 4);
    ReNFModel m = build_model(small_model_config(16, 4, 2, 8));
    TrainState st = init_train_state(m, 2021);
    TrainConfig tc;
    tc.ema_enabled = false;
    tc.batch_size = 8;
    train_epoch(m, st, ds, tc, 1);
    auto params = m.parameters();
    for (std::size_t i = 0; i < params.size(); ++i)
        CHECK(std::memcmp(st.shadow[i].data.data(), params[i]->value.data.data(),
                          st.shadow[i].size() * sizeof(double)) == 0);
}

TEST_CASE("non-finite loss aborts with a diagnostic") {
    const auto ds = split_and_standardize(sine_series(400), {6, 2, 2}, 16, 4);
    ReNFModel m = build_model(small_model_config(16, 4, 2, 8));
    for (Param* p : m.parameters())
        for (double& v : p->value.data) v *= 1e200;  // overflow the forward pass
    TrainState st = init_train_state(m, 2021);
    TrainConfig tc;
    tc.batch_size = 8;
    CHECK_THROWS_WITH_AS(train_epoch(m, st, ds, tc, 1), doctest::Contains("non-finite"),
                         std::runtime_error);
}

TEST_CASE("validate with decay 0 gives identical online and shadow metrics") {
    const auto ds = split_and_standardize(sine_series(400), {6, 2, 2}, 16, 4);
    ReNFModel m = build_model(small_model_config(16, 4, 2, 8));
    TrainState st = init_train_state(m, 2021);
    TrainConfig tc;
    tc.ema_decay = 0.0;
    tc.batch_size = 8;
    train_epoch(m, st, ds, tc, 1);
    const auto online = validate(m, st, ds, ParamChoice::Online, Split::Val, 8);
    const auto shadow = validate(m, st, ds, ParamChoice::Shadow, Split::Val, 8);
    CHECK(online == shadow);
}

TEST_CASE("validation metrics do not depend on batch size") {
    const auto ds = split_and_standardize(sine_series(500), {6, 2, 2}, 16, 4);
    ReNFModel m = build_model(small_model_config(16, 4, 2, 8));
    TrainState st = init_train_state(m, 2021);
    const auto small = validate(m, st, ds, ParamChoice::Online, Split::Val, 1);
    const auto large = validate(m, st, ds, ParamChoice::Online, Split::Val, 64);
    CHECK(std::abs(small.first - large.first) < 1e-9);
    CHECK(std::abs(small.second - large.second) < 1e-9);
}

TEST_CASE("empty validation split is an error") {
    const auto ds = split_and_standardize(sine_series(300), {8, 0, 2}, 16, 4);
    ReNFModel m = build_model(small_model_config(16, 4, 2, 8));
    TrainState st = init_train_state(m, 2021);
    CHECK_THROWS(validate(m, st, ds, ParamChoice::Online, Split::Val, 8));
}

TEST_CASE("early stopping fires after patience epochs without improvement") {
    const auto ds = split_and_standardize(sine_series(400), {6, 2, 2}, 16, 4);
    ReNFModel m = build_model(small_model_config(16, 4, 2, 8));
    TrainState st = init_train_state(m, 2021);
    TrainConfig tc;
    tc.lr = 1e-300;  // updates vanish below one ulp, so val never strictly improves
    tc.patience = 1;
    tc.epochs = 10;
    tc.batch_size = 8;
    const FitResult r = fit(m, st, ds, tc);
    CHECK(st.epochs_run == 2);
    CHECK(r.early_stopped);
    CHECK(r.best_epoch == 1);
    CHECK(r.history.size() == st.epochs_run);
}

TEST_CASE("fit learns a noiseless sinusoid") {
    // the lookback must cover the slow (period 96) component for the task to
    // be well determined
    const auto ds = split_and_standardize(sine_series(1000), {6, 2, 2}, 96, 24);
    auto cfg = small_model_config(96, 24, 2, 64);
    cfg.alpha_mix = 0.5;
    ReNFModel m = build_model(cfg);
    TrainState st = init_train_state(m, 2021);
    TrainConfig tc;
    tc.lr = 2e-3;
    tc.epochs = 25;
    tc.patience = 25;
    tc.batch_size = 16;
    tc.track_test_curve = false;
    const FitResult r = fit(m, st, ds, tc);
    CHECK(r.history.size() == st.epochs_run);
    load_best_shadow(m, st);
    const auto [test_mse, test_mae] = evaluate_split(m, ds, Split::Test, 16);
    CHECK(test_mse < 1e-2);
    CHECK(test_mae < 0.1);
}

TEST_CASE("shadow validation curve has no more total variation than the online curve") {
    // Enough steps per epoch that the shadow catches up inside epoch one;
    // the acceptance suite asserts the same property at decay 0.99 on the
    // benchmark-scale run.
    const auto ds = split_and_standardize(sine_series(500, 1, 0.3, 7), {6, 2, 2}, 16, 4);
    ReNFModel m = build_model(small_model_config(16, 4, 2, 16));
    TrainState st = init_train_state(m, 2021);
    TrainConfig tc;
    tc.lr = 3e-3;
    tc.ema_decay = 0.9;
    tc.epochs = 12;
    tc.patience = 12;
    tc.batch_size = 4;
    tc.track_test_curve = false;
    const FitResult r = fit(m, st, ds, tc);
    double tv_online = 0.0, tv_shadow = 0.0;
    for (std::size_t e = 1; e < r.history.size(); ++e) {
        tv_online += std::abs(r.history[e].val_online - r.history[e - 1].val_online);
        tv_shadow += std::abs(r.history[e].val_shadow - r.history[e - 1].val_shadow);
    }
    CHECK(tv_shadow <= tv_online);
}

TEST_CASE("checkpoint round trip reproduces metrics bit-for-bit") {
    const auto ds = split_and_standardize(sine_series(400), {6, 2, 2}, 16, 4);
    ReNFModel m = build_model(small_model_config(16, 4, 2, 8));
    TrainState st = init_train_state(m, 2021);
    TrainConfig tc;
    tc.epochs = 2;
    tc.patience = 5;
    tc.batch_size = 8;
    fit(m, st, ds, tc);

    const std::string path = "/tmp/renf_test_ckpt.bin";
    save_checkpoint(path, m, st);
    load_best_shadow(m, st);
    const auto before = evaluate_split(m, ds, Split::Val, 8);

    LoadedCheckpoint loaded = load_checkpoint(path);
    CHECK(loaded.model.config.d_model == m.config.d_model);
    const auto after = evaluate_split(loaded.model, ds, Split::Val, 8);
    CHECK(before.first == after.first);
    CHECK(before.second == after.second);
    std::remove(path.c_str());
}

TEST_CASE("checkpoint round trip covers the revin affine parameters") {
    const auto ds = split_and_standardize(sine_series(400, 2), {6, 2, 2}, 16, 4);
    auto cfg = small_model_config(16, 4, 2, 8);
    cfg.revin_affine = true;
    cfg.n_variates = 2;
    ReNFModel m = build_model(cfg);
    TrainState st = init_train_state(m, 2021);
    TrainConfig tc;
    tc.epochs = 2;
    tc.patience = 5;
    tc.batch_size = 8;
    fit(m, st, ds, tc);

    const std::string path = "/tmp/renf_test_ckpt_affine.bin";
    save_checkpoint(path, m, st);
    load_best_shadow(m, st);
    const auto before = evaluate_split(m, ds, Split::Val, 8);
    LoadedCheckpoint loaded = load_checkpoint(path);
    CHECK(loaded.model.config.revin_affine);
    CHECK(loaded.model.affine_gain.value.size() == 2);
    const auto after = evaluate_split(loaded.model, ds, Split::Val, 8);
    CHECK(before.first == after.first);
    std::remove(path.c_str());
}

TEST_CASE("corrupted checkpoint magic is rejected") {
    const std::string path = "/tmp/renf_test_badmagic.bin";
    {
        std::ofstream out(path, std::ios::binary);
        out << "NOTACKPTxxxxxxxxxxxxxxxx";
    }
    CHECK_THROWS(load_checkpoint(path));
    std::remove(path.c_str());
}
