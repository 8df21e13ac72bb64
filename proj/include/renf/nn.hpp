#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "renf/matrix.hpp"
#include "renf/rng.hpp"

namespace renf {

constexpr double kNormEps = 1e-5;  // std clamp inside instance norm / RevIN
constexpr double kAdamEps = 1e-8;

/// One trainable tensor with its gradient and Adam moments, all shape-congruent.
struct Param {
    std::string name;
    Matrix value;
    Matrix grad;
    Matrix adam_m;
    Matrix adam_v;

    Param() = default;
    Param(std::string n, std::size_t r, std::size_t c)
        : name(std::move(n)), value(r, c), grad(r, c), adam_m(r, c), adam_v(r, c) {}

    void zero_grad() { grad.zero(); }
};

/// Uniform fan-in init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weight and bias.
inline void init_linear(Param& w, Param& b, std::uint64_t seed) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(w.value.rows));
    auto rng = make_rng(seed, "init", fnv1a(w.name));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : w.value.data) v = dist(rng);
    for (double& v : b.value.data) v = dist(rng);
}

// ---------------------------------------------------------------------------
// Linear layer on the temporal dimension: y[R x d_out] = x[R x d_in] W + b.
// Weights are shared across all rows, i.e. across variates and windows.
// ---------------------------------------------------------------------------

inline Matrix linear_forward(const Matrix& x, const Param& w, const Param& b) {
    require(x.cols == w.value.rows, "linear: input width " + std::to_string(x.cols) +
                                        " != weight rows " + std::to_string(w.value.rows));
    Matrix y(x.rows, w.value.cols);
    gemm_accum(x, w.value, y);
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(y.rows); ++i) {
        double* yrow = y.row(static_cast<std::size_t>(i));
        for (std::size_t j = 0; j < y.cols; ++j) yrow[j] += b.value.data[j];
    }
    return y;
}

/// Returns dx; accumulates dw, db into the params' grad buffers.
inline Matrix linear_backward(const Matrix& x, const Matrix& dy, Param& w, Param& b) {
    require(dy.cols == w.value.cols && x.cols == w.value.rows && x.rows == dy.rows,
            "linear backward: shape mismatch");
    gemm_atb_accum(x, dy, w.grad);
    for (std::size_t i = 0; i < dy.rows; ++i) {
        const double* drow = dy.row(i);
        for (std::size_t j = 0; j < dy.cols; ++j) b.grad.data[j] += drow[j];
    }
    Matrix dx(x.rows, x.cols);
    gemm_abt_accum(dy, w.value, dx);
    return dx;
}

// ---------------------------------------------------------------------------
// Activations (elementwise). GELU uses the tanh approximation.
// ---------------------------------------------------------------------------

enum class Activation { Gelu, Relu };

inline double gelu(double x) {
    const double c = std::sqrt(2.0 / std::numbers::pi);
    return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

inline double gelu_grad(double x) {
    const double c = std::sqrt(2.0 / std::numbers::pi);
    const double u = c * (x + 0.044715 * x * x * x);
    const double t = std::tanh(u);
    const double du = c * (1.0 + 3.0 * 0.044715 * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

inline Matrix activation_forward(const Matrix& x, Activation act) {
    Matrix y(x.rows, x.cols);
    if (act == Activation::Gelu) {
#pragma omp parallel for schedule(static)
        for (long long i = 0; i < static_cast<long long>(x.size()); ++i)
            y.data[i] = gelu(x.data[static_cast<std::size_t>(i)]);
    } else {
#pragma omp parallel for schedule(static)
        for (long long i = 0; i < static_cast<long long>(x.size()); ++i)
            y.data[i] = x.data[static_cast<std::size_t>(i)] > 0.0 ? x.data[i] : 0.0;
    }
    return y;
}

inline Matrix activation_backward(const Matrix& x, const Matrix& dy, Activation act) {
    Matrix dx(x.rows, x.cols);
    if (act == Activation::Gelu) {
#pragma omp parallel for schedule(static)
        for (long long i = 0; i < static_cast<long long>(x.size()); ++i)
            dx.data[i] = dy.data[i] * gelu_grad(x.data[static_cast<std::size_t>(i)]);
    } else {
#pragma omp parallel for schedule(static)
        for (long long i = 0; i < static_cast<long long>(x.size()); ++i)
            dx.data[i] = x.data[static_cast<std::size_t>(i)] > 0.0 ? dy.data[i] : 0.0;
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Inverted dropout. The mask already folds in the 1/(1-rate) keep scale, so
// backward is an elementwise product with the same mask.
// ---------------------------------------------------------------------------

struct DropoutResult {
    Matrix y;
    std::vector<double> mask;  // empty when dropout was an identity
};

inline DropoutResult dropout_forward(const Matrix& x, double rate, bool training,
                                     std::uint64_t seed, std::uint64_t step = 0,
                                     std::uint64_t layer = 0) {
    require(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0,1)");
    DropoutResult r;
    if (!training || rate == 0.0) {
        r.y = x;
        return r;
    }
    auto rng = make_rng(seed, "dropout", step, layer);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    const double scale = 1.0 / (1.0 - rate);
    r.mask.resize(x.size());
    r.y = Matrix(x.rows, x.cols);
    for (std::size_t i = 0; i < x.size(); ++i) {
        r.mask[i] = dist(rng) < rate ? 0.0 : scale;
        r.y.data[i] = x.data[i] * r.mask[i];
    }
    return r;
}

inline Matrix dropout_backward(const Matrix& dy, const DropoutResult& fwd) {
    if (fwd.mask.empty()) return dy;
    Matrix dx(dy.rows, dy.cols);
    for (std::size_t i = 0; i < dy.size(); ++i) dx.data[i] = dy.data[i] * fwd.mask[i];
    return dx;
}

// ---------------------------------------------------------------------------
// Stateless instance norm over the temporal dimension of each row:
// y = (x - mean) / (std + eps), population std, no learned affine.
// ---------------------------------------------------------------------------

struct InstanceNormCache {
    std::vector<double> mean;
    std::vector<double> stdev;  // population std, before the eps shift
    Matrix x;                   // kept for the backward pass
};

inline Matrix instance_norm_forward(const Matrix& x, InstanceNormCache* cache = nullptr) {
    require(x.cols >= 1, "instance_norm: empty rows");
    Matrix y(x.rows, x.cols);
    std::vector<double> means(x.rows), stds(x.rows);
    const double n = static_cast<double>(x.cols);
#pragma omp parallel for schedule(static)
    for (long long ii = 0; ii < static_cast<long long>(x.rows); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        const double* xr = x.row(i);
        double mu = 0.0;
        for (std::size_t t = 0; t < x.cols; ++t) mu += xr[t];
        mu /= n;
        double var = 0.0;
        for (std::size_t t = 0; t < x.cols; ++t) var += (xr[t] - mu) * (xr[t] - mu);
        var /= n;
        const double sd = std::sqrt(var);
        const double denom = sd + kNormEps;
        double* yr = y.row(i);
        for (std::size_t t = 0; t < x.cols; ++t) yr[t] = (xr[t] - mu) / denom;
        means[i] = mu;
        stds[i] = sd;
    }
    if (cache) {
        cache->mean = std::move(means);
        cache->stdev = std::move(stds);
        cache->x = x;
    }
    return y;
}

inline Matrix instance_norm_backward(const Matrix& dy, const InstanceNormCache& cache) {
    const Matrix& x = cache.x;
    require(dy.same_shape(x), "instance_norm backward: shape mismatch");
    Matrix dx(x.rows, x.cols);
    const double n = static_cast<double>(x.cols);
#pragma omp parallel for schedule(static)
    for (long long ii = 0; ii < static_cast<long long>(x.rows); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        const double mu = cache.mean[i];
        const double sd = cache.stdev[i];
        const double s = sd + kNormEps;
        const double* g = dy.row(i);
        const double* xr = x.row(i);
        double gsum = 0.0, proj = 0.0;
        for (std::size_t t = 0; t < x.cols; ++t) {
            gsum += g[t];
            proj += g[t] * (xr[t] - mu);
        }
        double* dxr = dx.row(i);
        for (std::size_t t = 0; t < x.cols; ++t) {
            double v = (g[t] - gsum / n) / s;
            if (sd > 1e-12) v -= (xr[t] - mu) * proj / (n * sd * s * s);
            dxr[t] = v;
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// RevIN. Statistics are taken once from the stage-0 input of each (window,
// variate) row and reused to denormalize every head output of that window.
// ---------------------------------------------------------------------------

struct RevinState {
    std::vector<double> mean;   // per row
    std::vector<double> scale;  // per row: population std + eps
};

inline Matrix revin_normalize(const Matrix& x, RevinState& state) {
    require(x.cols >= 1, "revin: length-0 input");
    state.mean.resize(x.rows);
    state.scale.resize(x.rows);
    Matrix y(x.rows, x.cols);
    const double n = static_cast<double>(x.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double* xr = x.row(i);
        double mu = 0.0;
        for (std::size_t t = 0; t < x.cols; ++t) mu += xr[t];
        mu /= n;
        double var = 0.0;
        for (std::size_t t = 0; t < x.cols; ++t) var += (xr[t] - mu) * (xr[t] - mu);
        var /= n;
        const double s = std::sqrt(var) + kNormEps;
        state.mean[i] = mu;
        state.scale[i] = s;
        double* yr = y.row(i);
        for (std::size_t t = 0; t < x.cols; ++t) yr[t] = (xr[t] - mu) / s;
    }
    return y;
}

/// Applies the input statistics to model outputs of any length.
inline Matrix revin_denormalize(const Matrix& y, const RevinState& state) {
    require(y.rows == state.mean.size(), "revin denormalize: row count mismatch");
    Matrix out(y.rows, y.cols);
    for (std::size_t i = 0; i < y.rows; ++i) {
        const double* yr = y.row(i);
        double* orow = out.row(i);
        for (std::size_t t = 0; t < y.cols; ++t) orow[t] = yr[t] * state.scale[i] + state.mean[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Adam with bias correction. Grads are zeroed after the step.
// ---------------------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = kAdamEps;
};

inline void adam_step(std::vector<Param*>& params, const AdamConfig& cfg, std::int64_t t) {
    require(t >= 1, "adam_step: step index must be >= 1");
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (Param* p : params) {
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double g = p->grad.data[i];
            double& m = p->adam_m.data[i];
            double& v = p->adam_v.data[i];
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            const double mhat = m / bc1;
            const double vhat = v / bc2;
            p->value.data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
        p->zero_grad();
    }
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checker. `loss_fn` must recompute the scalar
// loss from the current parameter values; `backward_fn` must populate grads.
// ---------------------------------------------------------------------------

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

inline GradCheckReport grad_check(std::vector<Param*> params,
                                  const std::function<double()>& loss_fn,
                                  const std::function<void()>& backward_fn,
                                  double step = 1e-5) {
    for (Param* p : params) p->zero_grad();
    backward_fn();
    std::vector<Matrix> analytic;
    analytic.reserve(params.size());
    for (Param* p : params) analytic.push_back(p->grad);

    GradCheckReport report;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Param* p = params[pi];
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double saved = p->value.data[i];
            p->value.data[i] = saved + step;
            const double lp = loss_fn();
            p->value.data[i] = saved - step;
            const double lm = loss_fn();
            p->value.data[i] = saved;
            const double numeric = (lp - lm) / (2.0 * step);
            const double a = analytic[pi].data[i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            const double rel = std::abs(a - numeric) / denom;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = p->name;
                report.worst_index = i;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    for (std::size_t pi = 0; pi < params.size(); ++pi) params[pi]->grad = analytic[pi];
    return report;
}

}  // namespace renf
