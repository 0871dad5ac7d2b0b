#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "grad/coord_map.hpp"
#include "grad/error.hpp"
#include "grad/fbp.hpp"
#include "grad/feature_map.hpp"
#include "grad/grid.hpp"
#include "grad/rng.hpp"

namespace grad {

struct ModelShape {
    std::size_t channels = 40;
    std::size_t local_rows = 32, local_cols = 32;
    std::size_t global_rows = 16, global_cols = 16;
    std::size_t abnormal_rows = 16, abnormal_cols = 16;
};

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
    double lambda = 0.5;  // weight of the normal grid in the fused reconstruction
    double th = 0.5;      // contrastive margin
    OptimizerKind optimizer = OptimizerKind::adam;
    double lr_grid = 0.01;
    double lr_map = 0.005;
    double momentum = 0.9;  // sgd momentum, also adam beta1
    double adam_beta2 = 0.999;
    int epochs_stage1 = 30;
    int epochs_stage2 = 50;
    std::size_t batch = 8;
    std::uint64_t seed = 0;
    GridInit grid_init{};
    double map_init = 0.3;
    FbpSamplerConfig fbp{};

    void validate() const {
        require_usage(lambda >= 0.0 && lambda <= 1.0, "lambda must lie in [0, 1]");
        require_usage(th > 0.0 && th < 1.0, "th must lie in (0, 1)");
        require_usage(lr_grid >= 0.0 && lr_map >= 0.0, "learning rates must be non-negative");
        require_usage(momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0, 1)");
        require_usage(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam_beta2 must lie in [0, 1)");
        require_usage(epochs_stage1 >= 0 && epochs_stage2 >= 0, "epoch counts must be non-negative");
        require_usage(batch >= 1, "batch must be >= 1");
        require_usage(map_init >= 0.0, "map_init must be non-negative");
        fbp.validate();
    }
};

struct ExtractorDescriptor {
    enum class Kind : std::uint32_t { stub = 0, external = 1 };
    Kind kind = Kind::stub;
    std::uint64_t seed = 0;

    bool operator==(const ExtractorDescriptor&) const = default;
};

template <typename T>
struct BasicGradModel {
    BasicNormalGrid<T> normal;
    BasicAbnormalGrid<T> abnormal;
    double lambda = 0.5;
    double th = 0.5;
    ExtractorDescriptor extractor{};

    std::size_t channels() const noexcept { return normal.channels(); }

    void validate() const {
        grad::validate(normal);
        grad::validate(abnormal);
        require_usage(normal.channels() == abnormal.channels(), "model: normal/abnormal channel mismatch");
        require_usage(lambda >= 0.0 && lambda <= 1.0, "model: lambda must lie in [0, 1]");
    }

    bool operator==(const BasicGradModel&) const = default;
};

using GradModel = BasicGradModel<float>;

template <typename T = float>
BasicGradModel<T> init_model(const ModelShape& shape, const TrainConfig& cfg, ExtractorDescriptor extractor) {
    cfg.validate();
    const std::uint64_t s = derive_seed(cfg.seed, "model-init");
    BasicGradModel<T> m;
    m.normal.local = init_grid<T>(shape.channels, shape.local_rows, shape.local_cols, cfg.grid_init, derive_seed(s, "local"));
    m.normal.global =
        init_grid<T>(shape.channels, shape.global_rows, shape.global_cols, cfg.grid_init, derive_seed(s, "global"));
    m.normal.content_map = init_content_map<T>(shape.channels, cfg.map_init, derive_seed(s, "normal-map"));
    m.abnormal.grid =
        init_grid<T>(shape.channels, shape.abnormal_rows, shape.abnormal_cols, cfg.grid_init, derive_seed(s, "abnormal"));
    m.abnormal.content_map = init_content_map<T>(shape.channels, cfg.map_init, derive_seed(s, "abnormal-map"));
    m.lambda = cfg.lambda;
    m.th = cfg.th;
    m.extractor = extractor;
    return m;
}

// ---------------------------------------------------------------------------
// Fusion and losses

template <typename T>
BasicFeatureMap<T> fuse(const BasicFeatureMap<T>& x_n, const BasicFeatureMap<T>& x_a, double lambda) {
    require_usage(x_n.dims() == x_a.dims(), "fuse: dims mismatch " + to_string(x_n.dims()) + " vs " + to_string(x_a.dims()));
    require_usage(lambda >= 0.0 && lambda <= 1.0, "fuse: lambda must lie in [0, 1]");
    if (lambda == 1.0) return x_n;
    if (lambda == 0.0) return x_a;
    BasicFeatureMap<T> out = x_n;
    auto o = out.data();
    auto a = x_a.data();
    for (std::size_t i = 0; i < o.size(); ++i)
        o[i] = static_cast<T>(lambda * static_cast<double>(o[i]) + (1.0 - lambda) * static_cast<double>(a[i]));
    return out;
}

/// Mean over samples of (1 / CHW) * sum of squared differences.
template <typename T>
double loss_rec(const BasicFeatureMap<T>& aligned, const BasicFeatureMap<T>& rec) {
    require_usage(aligned.dims() == rec.dims(), "loss_rec: dims mismatch");
    const std::size_t per = aligned.c() * aligned.plane();
    double total = 0.0;
    for (std::size_t n = 0; n < aligned.n(); ++n) {
        double s = 0.0;
        for (std::size_t i = n * per; i < (n + 1) * per; ++i) {
            const double d = static_cast<double>(aligned.data()[i]) - static_cast<double>(rec.data()[i]);
            s += d * d;
        }
        total += s / static_cast<double>(per);
    }
    return total / static_cast<double>(aligned.n());
}

inline constexpr double kNormGuard = 1e-12;

/// Cosine similarity; 0 when either vector has norm below 1e-12.
inline double cosine(std::span<const double> a, std::span<const double> b) noexcept {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    const double na = std::sqrt(aa), nb = std::sqrt(bb);
    if (na < kNormGuard || nb < kNormGuard) return 0.0;
    return ab / (na * nb);
}

/// Truncated L1 contrastive loss. Unmasked locations (D+) are pulled above th,
/// masked ones (D-) pushed below it; each set is averaged over its own size,
/// pooled across the batch. An empty set contributes 0.
template <typename T>
double loss_con(const BasicFeatureMap<T>& aligned, const BasicFeatureMap<T>& x_a, const AnomalyMask& mask, double th) {
    require_usage(aligned.dims() == x_a.dims(), "loss_con: feature dims mismatch");
    require_usage(mask.n() == aligned.n() && mask.h() == aligned.h() && mask.w() == aligned.w(), "loss_con: mask dims mismatch");
    std::vector<double> a(aligned.c()), x(aligned.c());
    double pos = 0.0, neg = 0.0;
    std::size_t n_pos = 0, n_neg = 0;
    for (std::size_t n = 0; n < aligned.n(); ++n)
        for (std::size_t h = 0; h < aligned.h(); ++h)
            for (std::size_t w = 0; w < aligned.w(); ++w) {
                aligned.gather(n, h, w, a);
                x_a.gather(n, h, w, x);
                const double d = cosine(x, a);
                if (mask(n, h, w)) {
                    neg += std::max(0.0, d - th);
                    ++n_neg;
                } else {
                    pos += std::max(0.0, th - d);
                    ++n_pos;
                }
            }
    return (n_pos ? pos / static_cast<double>(n_pos) : 0.0) + (n_neg ? neg / static_cast<double>(n_neg) : 0.0);
}

// ---------------------------------------------------------------------------
// Gradients

struct ContentGradBuffers {
    std::vector<double> weights;
    std::array<double, 2> bias{};

    explicit ContentGradBuffers(std::size_t channels = 0) : weights(2 * channels, 0.0) {}
};

struct AbnormalGrads {
    std::vector<double> grid;
    ContentGradBuffers map;
};

struct NormalGrads {
    std::vector<double> local;
    std::vector<double> global;
    ContentGradBuffers map;
};

namespace detail {
/// d cos(x, a) / dx, or zeros under the norm guard.
inline void cosine_grad_x(std::span<const double> x, std::span<const double> a, double scale, std::span<double> out) {
    double xa = 0.0, xx = 0.0, aa = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        xa += x[i] * a[i];
        xx += x[i] * x[i];
        aa += a[i] * a[i];
    }
    const double nx = std::sqrt(xx), na = std::sqrt(aa);
    if (nx < kNormGuard || na < kNormGuard) {
        std::fill(out.begin(), out.end(), 0.0);
        return;
    }
    const double inv = 1.0 / (nx * na);
    const double cos_over_xx = xa * inv / xx;
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = scale * (a[i] * inv - cos_over_xx * x[i]);
}
}  // namespace detail

/// Contrastive loss of the abnormal grid on `inputs` (already perturbed) and,
/// when `grads` is given, its gradient w.r.t. every abnormal-grid parameter.
template <typename T>
double abnormal_loss_grad(const BasicAbnormalGrid<T>& ag, const BasicFeatureMap<T>& inputs, const AnomalyMask& mask,
                          double th, AbnormalGrads* grads) {
    validate(ag);
    require_usage(inputs.c() == ag.channels(), "abnormal_loss_grad: channel mismatch");
    require_usage(mask.n() == inputs.n() && mask.h() == inputs.h() && mask.w() == inputs.w(),
                  "abnormal_loss_grad: mask dims mismatch");
    const std::size_t C = inputs.c();
    std::size_t n_neg = 0;
    for (auto v : mask.cells()) n_neg += v;
    const std::size_t n_pos = mask.cells().size() - n_neg;
    const double w_pos = n_pos ? 1.0 / static_cast<double>(n_pos) : 0.0;
    const double w_neg = n_neg ? 1.0 / static_cast<double>(n_neg) : 0.0;

    if (grads) {
        grads->grid.assign(ag.grid.values().size(), 0.0);
        grads->map = ContentGradBuffers(C);
    }
    std::vector<double> v(C), x(C), xt(C), g(C);
    double pos = 0.0, neg = 0.0;
    for (std::size_t n = 0; n < inputs.n(); ++n)
        for (std::size_t h = 0; h < inputs.h(); ++h)
            for (std::size_t w = 0; w < inputs.w(); ++w) {
                inputs.gather(n, h, w, v);
                const auto pre = ag.content_map.project(v);
                const Coord2 cc{squash(pre[0]), squash(pre[1])};
                const GridCell cell = locate(ag.grid.rows(), ag.grid.cols(), cc);
                std::fill(x.begin(), x.end(), 0.0);
                accumulate_sample(ag.grid, cell, 1.0, x);
                for (std::size_t c = 0; c < C; ++c) xt[c] = static_cast<double>(static_cast<T>(x[c]));
                const double d = cosine(xt, v);
                double scale = 0.0;
                if (mask(n, h, w)) {
                    if (d > th) {
                        neg += d - th;
                        scale = w_neg;
                    }
                } else if (th > d) {
                    pos += th - d;
                    scale = -w_pos;
                }
                if (!grads || scale == 0.0) continue;
                detail::cosine_grad_x(x, v, scale, g);
                const Coord2 dc = accumulate_sample_grad(ag.grid, cell, g, grads->grid);
                accumulate_content_grad(v, pre, dc, grads->map.weights, grads->map.bias);
            }
    return (n_pos ? pos / static_cast<double>(n_pos) : 0.0) + (n_neg ? neg / static_cast<double>(n_neg) : 0.0);
}

/// Reconstruction loss of the fused model on clean `inputs` and its gradient
/// w.r.t. the normal-grid parameters only. `abnormal_out` may carry a
/// precomputed sample_abnormal(inputs); it is not needed when lambda == 1.
/// `rec_out` receives the reconstruction the loss was computed on.
template <typename T>
double normal_loss_grad(const BasicGradModel<T>& model, const BasicFeatureMap<T>& inputs,
                        const BasicFeatureMap<T>* abnormal_out, NormalGrads* grads, BasicFeatureMap<T>* rec_out = nullptr) {
    model.validate();
    require_usage(inputs.c() == model.channels(), "normal_loss_grad: channel mismatch");
    const std::size_t C = inputs.c(), H = inputs.h(), W = inputs.w();
    const double lambda = model.lambda;
    const bool use_abnormal = lambda != 1.0;
    std::optional<BasicFeatureMap<T>> computed_abnormal;
    if (use_abnormal && !abnormal_out) {
        computed_abnormal = sample_abnormal(model.abnormal, inputs);
        abnormal_out = &*computed_abnormal;
    }
    if (use_abnormal) require_usage(abnormal_out->dims() == inputs.dims(), "normal_loss_grad: abnormal output dims mismatch");
    if (grads) {
        grads->local.assign(model.normal.local.values().size(), 0.0);
        grads->global.assign(model.normal.global.values().size(), 0.0);
        grads->map = ContentGradBuffers(C);
    }
    if (rec_out) *rec_out = BasicFeatureMap<T>(inputs.dims(), std::vector<T>(inputs.size()));

    const double per = static_cast<double>(C * H * W);
    const double grad_scale = -2.0 * lambda / (per * static_cast<double>(inputs.n()));
    const auto& ng = model.normal;
    std::vector<double> v(C), xn(C), xa(C), rec(C), g(C);
    double total = 0.0;
    for (std::size_t n = 0; n < inputs.n(); ++n) {
        double sample_sum = 0.0;
        for (std::size_t h = 0; h < H; ++h)
            for (std::size_t w = 0; w < W; ++w) {
                inputs.gather(n, h, w, v);
                const GridCell lcell = locate(ng.local.rows(), ng.local.cols(), local_coords(h, w, H, W));
                const auto pre = ng.content_map.project(v);
                const GridCell gcell = locate(ng.global.rows(), ng.global.cols(), Coord2{squash(pre[0]), squash(pre[1])});
                std::fill(xn.begin(), xn.end(), 0.0);
                accumulate_sample(ng.local, lcell, 1.0, xn);
                accumulate_sample(ng.global, gcell, 1.0, xn);
                if (use_abnormal) {
                    abnormal_out->gather(n, h, w, xa);
                    for (std::size_t c = 0; c < C; ++c)
                        rec[c] = static_cast<double>(static_cast<T>(
                            lambda * static_cast<double>(static_cast<T>(xn[c])) + (1.0 - lambda) * xa[c]));
                } else {
                    for (std::size_t c = 0; c < C; ++c) rec[c] = static_cast<double>(static_cast<T>(xn[c]));
                }
                for (std::size_t c = 0; c < C; ++c) {
                    const double d = v[c] - rec[c];
                    sample_sum += d * d;
                    g[c] = grad_scale * d;
                }
                if (rec_out) rec_out->scatter(n, h, w, rec);
                if (!grads || lambda == 0.0) continue;
                accumulate_sample_grad(ng.local, lcell, g, grads->local);
                const Coord2 dc = accumulate_sample_grad(ng.global, gcell, g, grads->global);
                accumulate_content_grad(v, pre, dc, grads->map.weights, grads->map.bias);
            }
        total += sample_sum / per;
    }
    return total / static_cast<double>(inputs.n());
}

// ---------------------------------------------------------------------------
// Optimizers

/// Classic momentum: v <- m v + g; p <- p - lr v.
template <typename T>
void sgd_step(std::span<T> params, std::span<const double> grads, double lr, double momentum, std::span<double> velocity) {
    require_usage(params.size() == grads.size() && params.size() == velocity.size(), "sgd_step: shape mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        velocity[i] = momentum * velocity[i] + grads[i];
        params[i] = static_cast<T>(static_cast<double>(params[i]) - lr * velocity[i]);
    }
}

struct AdamState {
    std::vector<double> m, v;
    std::int64_t t = 0;
};

template <typename T>
void adam_step(std::span<T> params, std::span<const double> grads, double lr, double beta1, double beta2, AdamState& s,
               double eps = 1e-8) {
    require_usage(params.size() == grads.size(), "adam_step: shape mismatch");
    if (s.m.empty()) {
        s.m.assign(params.size(), 0.0);
        s.v.assign(params.size(), 0.0);
    }
    require_usage(s.m.size() == params.size(), "adam_step: state shape mismatch");
    ++s.t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(s.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        s.m[i] = beta1 * s.m[i] + (1.0 - beta1) * grads[i];
        s.v[i] = beta2 * s.v[i] + (1.0 - beta2) * grads[i] * grads[i];
        const double step = lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + eps);
        params[i] = static_cast<T>(static_cast<double>(params[i]) - step);
    }
}

/// One optimizer state per parameter block.
class ParamOptimizer {
public:
    ParamOptimizer(const TrainConfig& cfg, std::size_t groups)
        : kind_(cfg.optimizer), momentum_(cfg.momentum), beta2_(cfg.adam_beta2), velocity_(groups), adam_(groups) {}

    template <typename T>
    void step(std::size_t group, std::span<T> params, std::span<const double> grads, double lr) {
        if (kind_ == OptimizerKind::sgd) {
            auto& vel = velocity_.at(group);
            if (vel.empty()) vel.assign(params.size(), 0.0);
            sgd_step(params, grads, lr, momentum_, std::span<double>(vel));
        } else {
            adam_step(params, grads, lr, momentum_, beta2_, adam_.at(group));
        }
    }

    template <typename T>
    void step_map(std::size_t group, BasicContentCoordMap<T>& map, const ContentGradBuffers& g, double lr) {
        step<T>(group, std::span<T>(map.weights), g.weights, lr);
        step<T>(group + 1, std::span<T>(map.bias), g.bias, lr);
    }

private:
    OptimizerKind kind_;
    double momentum_, beta2_;
    std::vector<std::vector<double>> velocity_;
    std::vector<AdamState> adam_;
};

// ---------------------------------------------------------------------------
// Two-stage schedule

struct TrainReport {
    double initial_loss = 0.0;
    std::vector<double> epoch_loss;  // mean batch loss per epoch
};

namespace detail {
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    return order;
}

template <typename Fn>
void for_each_batch(std::size_t n, std::size_t batch, const std::vector<std::size_t>& order, Fn&& fn) {
    for (std::size_t start = 0, b = 0; start < n; start += batch, ++b) {
        const std::size_t end = std::min(n, start + batch);
        fn(b, std::span<const std::size_t>(order.data() + start, end - start));
    }
}
}  // namespace detail

/// Stage 1: train the abnormal grid with the contrastive loss on synthesized anomalies.
template <typename T>
TrainReport train_stage1_abnormal(BasicGradModel<T>& model, const BasicFeatureMap<T>& data, const TrainConfig& cfg) {
    cfg.validate();
    model.validate();
    require_data(!data.empty(), "train_stage1_abnormal: empty dataset");
    require_usage(data.c() == model.channels(), "train_stage1_abnormal: feature channels do not match the model");
    const std::uint64_t stage_seed = derive_seed(cfg.seed, "stage1");

    TrainReport report;
    {
        const auto probe = fbp_batch(data, cfg.fbp, derive_seed(stage_seed, "initial"));
        report.initial_loss = abnormal_loss_grad(model.abnormal, probe.features, probe.masks, model.th, nullptr);
    }
    ParamOptimizer opt(cfg, 3);
    AbnormalGrads g;
    for (int epoch = 0; epoch < cfg.epochs_stage1; ++epoch) {
        const std::uint64_t epoch_seed = derive_seed(stage_seed, static_cast<std::uint64_t>(epoch));
        const auto order = detail::epoch_order(data.n(), derive_seed(epoch_seed, "order"));
        double sum = 0.0;
        std::size_t batches = 0;
        detail::for_each_batch(data.n(), cfg.batch, order, [&](std::size_t b, std::span<const std::size_t> idx) {
            const auto synth = fbp_batch(gather_samples(data, idx), cfg.fbp, derive_seed(epoch_seed, b));
            sum += abnormal_loss_grad(model.abnormal, synth.features, synth.masks, model.th, &g);
            ++batches;
            opt.step<T>(0, model.abnormal.grid.values(), g.grid, cfg.lr_grid);
            opt.step_map(1, model.abnormal.content_map, g.map, cfg.lr_map);
        });
        report.epoch_loss.push_back(sum / static_cast<double>(batches));
    }
    return report;
}

/// Stage 2: abnormal grid frozen; train the normal grid on clean features
/// through the fused reconstruction loss.
template <typename T>
TrainReport train_stage2_normal(BasicGradModel<T>& model, const BasicFeatureMap<T>& data, const TrainConfig& cfg) {
    cfg.validate();
    model.validate();
    require_data(!data.empty(), "train_stage2_normal: empty dataset");
    require_usage(data.c() == model.channels(), "train_stage2_normal: feature channels do not match the model");
    const std::uint64_t stage_seed = derive_seed(cfg.seed, "stage2");

    std::optional<BasicFeatureMap<T>> frozen;
    if (model.lambda != 1.0) frozen = sample_abnormal(model.abnormal, data);

    TrainReport report;
    report.initial_loss = normal_loss_grad(model, data, frozen ? &*frozen : nullptr, nullptr);
    ParamOptimizer opt(cfg, 4);
    NormalGrads g;
    for (int epoch = 0; epoch < cfg.epochs_stage2; ++epoch) {
        const std::uint64_t epoch_seed = derive_seed(stage_seed, static_cast<std::uint64_t>(epoch));
        const auto order = detail::epoch_order(data.n(), derive_seed(epoch_seed, "order"));
        double sum = 0.0;
        std::size_t batches = 0;
        detail::for_each_batch(data.n(), cfg.batch, order, [&](std::size_t, std::span<const std::size_t> idx) {
            const auto batch = gather_samples(data, idx);
            std::optional<BasicFeatureMap<T>> batch_abnormal;
            if (frozen) batch_abnormal = gather_samples(*frozen, idx);
            sum += normal_loss_grad(model, batch, batch_abnormal ? &*batch_abnormal : nullptr, &g);
            ++batches;
            opt.step<T>(0, model.normal.local.values(), g.local, cfg.lr_grid);
            opt.step<T>(1, model.normal.global.values(), g.global, cfg.lr_grid);
            opt.step_map(2, model.normal.content_map, g.map, cfg.lr_map);
        });
        report.epoch_loss.push_back(sum / static_cast<double>(batches));
    }
    return report;
}

}  // namespace grad
