#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "renf/matrix.hpp"
#include "renf/nn.hpp"
#include "renf/spectral.hpp"

namespace renf {

enum class Variant { Alpha, Beta };

inline const char* variant_name(Variant v) { return v == Variant::Alpha ? "alpha" : "beta"; }

struct ModelConfig {
    Variant variant = Variant::Alpha;
    std::size_t stages = 2;      // N
    std::size_t lookback = 336;  // t_x
    std::size_t horizon = 96;    // L
    std::size_t d_model = 512;
    std::size_t n_variates = 1;
    double dropout = 0.1;
    double alpha_mix = 0.5;   // time/frequency loss mix
    double gamma_stage = 1.0; // stage weight numerator
    Activation activation = Activation::Gelu;
    bool revin_affine = false;
    bool detach_concat = false;     // ablation: cut gradients through the fed-back forecast
    bool feed_forecast = true;      // ablation: off = no input-space concatenation
    bool supervise_prefixes = true; // ablation: off = loss on the final stage only
    std::uint64_t seed = 2021;
};

/// Even stage schedule: h_n = n * L / N with h_0 = 0.
struct StageSchedule {
    std::size_t stages = 1;
    std::size_t segment = 0;
    std::vector<std::size_t> horizons;  // h_1 .. h_N

    static StageSchedule even(std::size_t n_stages, std::size_t L) {
        require(n_stages >= 1, "schedule: need at least one stage");
        require(L % n_stages == 0, "schedule: stage count " + std::to_string(n_stages) +
                                       " does not divide horizon " + std::to_string(L));
        StageSchedule s;
        s.stages = n_stages;
        s.segment = L / n_stages;
        for (std::size_t n = 1; n <= n_stages; ++n) s.horizons.push_back(n * s.segment);
        return s;
    }

    /// h_n for 1-based stage index; h_0 = 0.
    std::size_t horizon_at(std::size_t n) const { return n == 0 ? 0 : horizons[n - 1]; }
};

/**
 * One sub-forecaster block:
 *   head(Transform(proj(Norm(Drop(T)))))
 * Block n consumes t_x + h_{n-1} steps per variate and emits h_n. The
 * Transform MLP has one hidden layer for the alpha variant and two for beta;
 * beta blocks additionally add the previous block's representation to their
 * own before the head.
 */
struct ReNFBlock {
    std::size_t len_in = 0;
    std::size_t d_model = 0;
    std::size_t h_out = 0;
    Param proj_w, proj_b;
    std::vector<Param> mlp_w, mlp_b;
    Param head_w, head_b;

    std::size_t n_mlp_linears() const { return mlp_w.size(); }
};

/// Prefix sub-forecasts of one batch, in pre-RevIN (dataset) units.
/// Prefix n is [rows x h_n] with rows keyed (window, variate).
struct ForecastBundle {
    std::vector<Matrix> prefixes;
    std::size_t batch = 0;
    std::size_t vars = 0;

    std::size_t stages() const { return prefixes.size(); }
    const Matrix& final_forecast() const { return prefixes.back(); }
    Tensor3 prefix_tensor(std::size_t n) const { return from_rows(prefixes[n], batch, vars); }
};

struct BlockCache {
    Matrix t_in;             // concatenated input, pre-dropout
    DropoutResult drop;
    InstanceNormCache norm;
    Matrix normed;
    std::vector<Matrix> lin_in;   // input to each Transform linear
    std::vector<Matrix> act_in;   // pre-activation values
    Matrix rep;                   // representation fed to the head (post-skip)
    Matrix head_out;              // normalized-space forecast [rows x h_n]
};

struct ForwardCache {
    RevinState revin;
    Matrix x_model;  // model-space input after RevIN (and affine, when enabled)
    Matrix x_norm;   // pre-affine normalized input (kept only when affine is on)
    std::vector<BlockCache> blocks;
    std::size_t batch = 0;
    std::size_t vars = 0;
    bool training = false;
};

class ReNFModel {
public:
    ModelConfig config;
    StageSchedule schedule;
    std::vector<ReNFBlock> blocks;
    Param affine_gain, affine_bias;  // per-variate, only when revin_affine

    std::vector<Param*> parameters() {
        std::vector<Param*> ps;
        for (auto& b : blocks) {
            ps.push_back(&b.proj_w);
            ps.push_back(&b.proj_b);
            for (std::size_t i = 0; i < b.mlp_w.size(); ++i) {
                ps.push_back(&b.mlp_w[i]);
                ps.push_back(&b.mlp_b[i]);
            }
            ps.push_back(&b.head_w);
            ps.push_back(&b.head_b);
        }
        if (config.revin_affine) {
            ps.push_back(&affine_gain);
            ps.push_back(&affine_bias);
        }
        return ps;
    }

    std::size_t parameter_count() {
        std::size_t n = 0;
        for (Param* p : parameters()) n += p->value.size();
        return n;
    }
};

inline ReNFModel build_model(const ModelConfig& cfg) {
    require(cfg.stages >= 1, "build_model: need at least one stage");
    require(cfg.d_model >= 1, "build_model: d_model must be >= 1");
    require(cfg.lookback >= 1 && cfg.horizon >= 1, "build_model: lookback/horizon must be >= 1");
    require(cfg.dropout >= 0.0 && cfg.dropout < 1.0, "build_model: dropout must be in [0,1)");
    require(cfg.alpha_mix >= 0.0 && cfg.alpha_mix <= 1.0,
            "build_model: alpha_mix must be in [0,1]");

    ReNFModel m;
    m.config = cfg;
    m.schedule = StageSchedule::even(cfg.stages, cfg.horizon);

    const std::size_t n_lin = cfg.variant == Variant::Alpha ? 2 : 3;
    for (std::size_t n = 1; n <= cfg.stages; ++n) {
        ReNFBlock b;
        b.len_in = cfg.lookback + (cfg.feed_forecast ? m.schedule.horizon_at(n - 1) : 0);
        b.d_model = cfg.d_model;
        b.h_out = m.schedule.horizon_at(n);
        const std::string tag = "block" + std::to_string(n - 1);
        b.proj_w = Param(tag + ".proj.w", b.len_in, cfg.d_model);
        b.proj_b = Param(tag + ".proj.b", 1, cfg.d_model);
        init_linear(b.proj_w, b.proj_b, cfg.seed);
        for (std::size_t l = 0; l < n_lin; ++l) {
            b.mlp_w.emplace_back(tag + ".mlp" + std::to_string(l) + ".w", cfg.d_model,
                                 cfg.d_model);
            b.mlp_b.emplace_back(tag + ".mlp" + std::to_string(l) + ".b", 1, cfg.d_model);
            init_linear(b.mlp_w.back(), b.mlp_b.back(), cfg.seed);
        }
        b.head_w = Param(tag + ".head.w", cfg.d_model, b.h_out);
        b.head_b = Param(tag + ".head.b", 1, b.h_out);
        init_linear(b.head_w, b.head_b, cfg.seed);
        m.blocks.push_back(std::move(b));
    }
    if (cfg.revin_affine) {
        require(cfg.n_variates >= 1, "build_model: revin_affine needs n_variates");
        m.affine_gain = Param("revin.gain", 1, cfg.n_variates);
        m.affine_bias = Param("revin.bias", 1, cfg.n_variates);
        for (double& v : m.affine_gain.value.data) v = 1.0;
    }
    return m;
}

namespace detail {

inline Matrix hconcat(const Matrix& a, const Matrix& b) {
    assert(a.rows == b.rows);
    Matrix out(a.rows, a.cols + b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* ar = a.row(i);
        const double* br = b.row(i);
        double* orow = out.row(i);
        for (std::size_t j = 0; j < a.cols; ++j) orow[j] = ar[j];
        for (std::size_t j = 0; j < b.cols; ++j) orow[a.cols + j] = br[j];
    }
    return out;
}

/// Forward through one block; fills the cache for the backward pass.
inline void block_forward_impl(const ReNFModel& model, std::size_t idx, const Matrix& t_in,
                               const Matrix* prev_rep, bool training, std::uint64_t step,
                               BlockCache& c) {
    const ReNFBlock& b = model.blocks[idx];
    require(t_in.cols == b.len_in, "block " + std::to_string(idx) + ": input length " +
                                       std::to_string(t_in.cols) + " != expected " +
                                       std::to_string(b.len_in));
    c.t_in = t_in;
    c.drop = dropout_forward(t_in, model.config.dropout, training, model.config.seed, step, idx);
    c.normed = instance_norm_forward(c.drop.y, &c.norm);
    Matrix h = linear_forward(c.normed, b.proj_w, b.proj_b);
    c.lin_in.clear();
    c.act_in.clear();
    for (std::size_t l = 0; l < b.n_mlp_linears(); ++l) {
        c.lin_in.push_back(h);
        h = linear_forward(h, b.mlp_w[l], b.mlp_b[l]);
        if (l + 1 < b.n_mlp_linears()) {
            c.act_in.push_back(h);
            h = activation_forward(h, model.config.activation);
        }
    }
    if (model.config.variant == Variant::Beta && prev_rep != nullptr) {
        for (std::size_t i = 0; i < h.size(); ++i) h.data[i] += prev_rep->data[i];
    }
    c.rep = std::move(h);
    c.head_out = linear_forward(c.rep, b.head_w, b.head_b);
}

}  // namespace detail

/**
 * Single block as a standalone operation (used directly by tests). Inputs and
 * outputs are in the block's own normalized space; `prev_rep` carries the
 * beta-variant skip connection.
 */
inline std::pair<Matrix, Matrix> block_forward(const ReNFModel& model, std::size_t idx,
                                               const Matrix& t_in, bool training,
                                               const Matrix* prev_rep = nullptr,
                                               std::uint64_t step = 0) {
    BlockCache c;
    detail::block_forward_impl(model, idx, t_in, prev_rep, training, step, c);
    return {c.rep, c.head_out};
}

/**
 * BDO recursion (stage n consumes [x, forecast of stage n-1]):
 *   stage 1 sees the RevIN-normalized history alone; every later stage sees
 *   the history concatenated with the previous head output, still in
 *   normalized space. Each head output is denormalized with the window's
 *   input statistics into the returned bundle.
 */
inline ForecastBundle bdo_forward(ReNFModel& model, const Tensor3& x, bool training,
                                  std::uint64_t step = 0, ForwardCache* cache = nullptr) {
    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    c.batch = x.batch;
    c.vars = x.vars;
    c.training = training;
    require(x.len == model.config.lookback, "bdo_forward: input length " + std::to_string(x.len) +
                                                " != lookback " +
                                                std::to_string(model.config.lookback));
    for (double v : x.data) require(std::isfinite(v), "bdo_forward: non-finite input");

    Matrix rows = to_rows(x);
    Matrix x_norm = revin_normalize(rows, c.revin);
    if (model.config.revin_affine) {
        require(x.vars == model.config.n_variates, "bdo_forward: variate count mismatch");
        c.x_norm = x_norm;
        c.x_model = Matrix(x_norm.rows, x_norm.cols);
        for (std::size_t r = 0; r < x_norm.rows; ++r) {
            const std::size_t v = r % c.vars;
            const double g = model.affine_gain.value.data[v];
            const double a = model.affine_bias.value.data[v];
            for (std::size_t t = 0; t < x_norm.cols; ++t)
                c.x_model.at(r, t) = g * x_norm.at(r, t) + a;
        }
    } else {
        c.x_model = std::move(x_norm);
    }

    ForecastBundle bundle;
    bundle.batch = x.batch;
    bundle.vars = x.vars;
    c.blocks.assign(model.blocks.size(), BlockCache{});

    const Matrix* prev_rep = nullptr;
    const Matrix* prev_out = nullptr;
    for (std::size_t idx = 0; idx < model.blocks.size(); ++idx) {
        const Matrix t_in = (idx == 0 || !model.config.feed_forecast)
                                ? c.x_model
                                : detail::hconcat(c.x_model, *prev_out);
        detail::block_forward_impl(model, idx, t_in, prev_rep, training, step, c.blocks[idx]);
        prev_rep = &c.blocks[idx].rep;
        prev_out = &c.blocks[idx].head_out;

        Matrix out = c.blocks[idx].head_out;
        if (model.config.revin_affine) {
            for (std::size_t r = 0; r < out.rows; ++r) {
                const std::size_t v = r % c.vars;
                const double g = model.affine_gain.value.data[v];
                const double a = model.affine_bias.value.data[v];
                for (std::size_t t = 0; t < out.cols; ++t)
                    out.at(r, t) = (out.at(r, t) - a) / g;
            }
        }
        bundle.prefixes.push_back(revin_denormalize(out, c.revin));
    }
    return bundle;
}

struct HierLoss {
    double total = 0.0;
    std::vector<double> stage_time;  // per-stage time-domain MAE
    std::vector<double> stage_freq;  // per-stage frequency-domain L1
    std::vector<Matrix> grads;       // d loss / d prefix, same shapes as bundle
};

/**
 * Hierarchical loss over the stage prefixes:
 *
 *   loss = sum_n (gamma/n) * [ alpha * MAE(prefix_n, target_{1..h_n})
 *                            + (1-alpha) * freqL1(prefix_n, target_{1..h_n}) ]
 *
 * Stage n supervises its entire prefix 1..h_n. The MAE is a mean over batch,
 * time and variate; the frequency term is the per-row spectral L1 averaged
 * over rows. Gradients are returned per prefix in dataset units.
 *
 * With supervise_prefixes off (the sub-forecast-loss ablation) only the
 * final stage contributes, at weight gamma_stage.
 */
inline HierLoss hierarchical_loss(const ForecastBundle& bundle, const Matrix& target_rows,
                                  double alpha_mix, double gamma_stage,
                                  bool supervise_prefixes = true) {
    require(alpha_mix >= 0.0 && alpha_mix <= 1.0, "hierarchical_loss: alpha_mix outside [0,1]");
    const std::size_t rows = target_rows.rows;
    HierLoss out;
    out.grads.reserve(bundle.stages());
    for (std::size_t s = 0; s < bundle.stages(); ++s) {
        const Matrix& pred = bundle.prefixes[s];
        require(pred.rows == rows && pred.cols <= target_rows.cols,
                "hierarchical_loss: prefix/target shape mismatch");
        const std::size_t h = pred.cols;
        if (!supervise_prefixes && s + 1 < bundle.stages()) {
            out.stage_time.push_back(0.0);
            out.stage_freq.push_back(0.0);
            out.grads.emplace_back(pred.rows, pred.cols);
            continue;
        }
        const double weight = supervise_prefixes ? gamma_stage / static_cast<double>(s + 1)
                                                 : gamma_stage;
        Matrix grad(pred.rows, pred.cols);

        double mae = 0.0;
        const double denom_t = static_cast<double>(rows * h);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* pr = pred.row(r);
            const double* tr = target_rows.row(r);
            double* gr = grad.row(r);
            for (std::size_t t = 0; t < h; ++t) {
                const double d = pr[t] - tr[t];
                mae += std::abs(d);
                const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
                gr[t] = weight * alpha_mix * sign / denom_t;
            }
        }
        mae /= denom_t;

        double freq = 0.0;
        if (alpha_mix < 1.0) {
            std::vector<double> row_loss(rows, 0.0);
            const double scale = weight * (1.0 - alpha_mix) / static_cast<double>(rows);
#pragma omp parallel for schedule(static)
            for (long long rr = 0; rr < static_cast<long long>(rows); ++rr) {
                const auto r = static_cast<std::size_t>(rr);
                std::vector<double> p(h), ta(h);
                for (std::size_t t = 0; t < h; ++t) {
                    p[t] = pred.at(r, t);
                    ta[t] = target_rows.at(r, t);
                }
                auto [fl, fg] = freq_l1(p, ta);
                row_loss[r] = fl;
                double* gr = grad.row(r);
                for (std::size_t t = 0; t < h; ++t) gr[t] += scale * fg[t];
            }
            for (std::size_t r = 0; r < rows; ++r) freq += row_loss[r];
            freq /= static_cast<double>(rows);
        }

        out.stage_time.push_back(mae);
        out.stage_freq.push_back(freq);
        out.total += weight * (alpha_mix * mae + (1.0 - alpha_mix) * freq);
        out.grads.push_back(std::move(grad));
    }
    return out;
}

/**
 * Exact reverse-mode pass through the whole recursion: heads, Transform
 * MLPs, projections, instance norms, dropout masks, the beta skip chain, the
 * forecast concatenation, and the RevIN denormalization. Parameter gradients
 * accumulate into each Param's grad buffer.
 */
inline void bdo_backward(ReNFModel& model, const ForwardCache& cache,
                         const std::vector<Matrix>& bundle_grads) {
    require(cache.blocks.size() == model.blocks.size() &&
                bundle_grads.size() == model.blocks.size(),
            "bdo_backward: cache/gradient stage count mismatch");

    const std::size_t n_stages = model.blocks.size();
    const std::size_t vars = cache.vars;
    Matrix dx_model(cache.x_model.rows, cache.x_model.cols);

    // d loss / d head_out (normalized space) per stage; stage n-1 also
    // receives the concatenation path from stage n.
    std::vector<Matrix> head_grads(n_stages);
    for (std::size_t s = 0; s < n_stages; ++s) {
        const Matrix& g_data = bundle_grads[s];
        const BlockCache& bc = cache.blocks[s];
        require(g_data.same_shape(bc.head_out), "bdo_backward: bundle grad shape mismatch");
        Matrix g(g_data.rows, g_data.cols);
        for (std::size_t r = 0; r < g.rows; ++r) {
            const double scale = cache.revin.scale[r];
            const double* src = g_data.row(r);
            double* dst = g.row(r);
            if (model.config.revin_affine) {
                const std::size_t v = r % vars;
                const double gain = model.affine_gain.value.data[v];
                const double bias = model.affine_bias.value.data[v];
                for (std::size_t t = 0; t < g.cols; ++t) {
                    const double d_out_norm = src[t] * scale;  // d/d((ho-a)/g)
                    dst[t] = d_out_norm / gain;
                    model.affine_bias.grad.data[v] -= d_out_norm / gain;
                    model.affine_gain.grad.data[v] -=
                        d_out_norm * (bc.head_out.at(r, t) - bias) / (gain * gain);
                }
            } else {
                for (std::size_t t = 0; t < g.cols; ++t) dst[t] = src[t] * scale;
            }
        }
        head_grads[s] = std::move(g);
    }

    Matrix rep_carry;  // beta: d loss / d rep_{n-1} contributed by block n
    for (std::size_t s = n_stages; s-- > 0;) {
        ReNFBlock& b = model.blocks[s];
        const BlockCache& bc = cache.blocks[s];

        Matrix d_rep = linear_backward(bc.rep, head_grads[s], b.head_w, b.head_b);
        if (!rep_carry.empty()) {
            for (std::size_t i = 0; i < d_rep.size(); ++i) d_rep.data[i] += rep_carry.data[i];
        }
        if (model.config.variant == Variant::Beta && s > 0) {
            rep_carry = d_rep;  // rep_s = mlp_out_s + rep_{s-1}
        } else {
            rep_carry = Matrix();
        }

        Matrix d = std::move(d_rep);
        for (std::size_t l = b.n_mlp_linears(); l-- > 0;) {
            if (l + 1 < b.n_mlp_linears())
                d = activation_backward(bc.act_in[l], d, model.config.activation);
            d = linear_backward(bc.lin_in[l], d, b.mlp_w[l], b.mlp_b[l]);
        }
        d = linear_backward(bc.normed, d, b.proj_w, b.proj_b);
        d = instance_norm_backward(d, bc.norm);
        d = dropout_backward(d, bc.drop);

        const std::size_t t_x = cache.x_model.cols;
        for (std::size_t r = 0; r < d.rows; ++r) {
            const double* dr = d.row(r);
            double* xr = dx_model.row(r);
            for (std::size_t t = 0; t < t_x; ++t) xr[t] += dr[t];
        }
        if (s > 0 && !model.config.detach_concat) {
            Matrix& prev = head_grads[s - 1];
            for (std::size_t r = 0; r < d.rows; ++r) {
                const double* dr = d.row(r) + t_x;
                double* pr = prev.row(r);
                for (std::size_t t = 0; t < d.cols - t_x; ++t) pr[t] += dr[t];
            }
        }
    }

    if (model.config.revin_affine) {
        // x_model = gain_v * x_norm + bias_v
        for (std::size_t r = 0; r < dx_model.rows; ++r) {
            const std::size_t v = r % vars;
            const double* dr = dx_model.row(r);
            const double* xn = cache.x_norm.row(r);
            for (std::size_t t = 0; t < dx_model.cols; ++t) {
                model.affine_gain.grad.data[v] += dr[t] * xn[t];
                model.affine_bias.grad.data[v] += dr[t];
            }
        }
    }
}

}  // namespace renf
