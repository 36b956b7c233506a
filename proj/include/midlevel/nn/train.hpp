#pragma once

// Training loops, embedding extraction, gradient checking and the synthetic
// datasets used for desk-scale verification.

#include "midlevel/audio.hpp"
#include "midlevel/nn/network.hpp"
#include "midlevel/nn/optim.hpp"
#include "midlevel/statmodels.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <vector>

namespace midlevel::nn {

/// Inputs [N x C x H x W] with one target row per sample [N x K x 1 x 1].
struct Dataset {
    Tensor inputs;
    Tensor targets;

    std::size_t size() const { return inputs.shape().n; }
};

/// Samples `rows` of `t`, in the given order.
inline Tensor gather(const Tensor& t, const std::vector<std::size_t>& rows)
{
    Shape s = t.shape();
    s.n = rows.size();
    Tensor out(s);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = t.sample(rows[i]);
        std::copy(src.begin(), src.end(), out.sample(i).begin());
    }
    return out;
}

inline Dataset subset(const Dataset& d, const std::vector<std::size_t>& rows)
{
    return {gather(d.inputs, rows), gather(d.targets, rows)};
}

/// Stacks mel patches into [N x 1 x mels x frames].
inline Tensor patches_to_tensor(const std::vector<MelPatch>& patches)
{
    if (patches.empty())
        throw Error(Errc::EmptyDataset, "no patches");
    const std::size_t frames = patches[0].values.rows(), mels = patches[0].values.cols();
    Tensor t({patches.size(), 1, mels, frames});
    for (std::size_t n = 0; n < patches.size(); ++n) {
        if (patches[n].values.rows() != frames || patches[n].values.cols() != mels)
            throw Error(Errc::ShapeMismatch, "patches differ in size");
        for (std::size_t f = 0; f < frames; ++f)
            for (std::size_t m = 0; m < mels; ++m)
                t.at(n, 0, m, f) = patches[n].values(f, m);
    }
    return t;
}

struct EpochMetrics {
    int stage = 0;            // 0 for tag training, 1 or 2 for fine-tuning
    std::size_t epoch = 0;    // 0: evaluation before the first update
    double train_loss = std::numeric_limits<double>::quiet_NaN();
    double validation = std::numeric_limits<double>::quiet_NaN(); // AUC for tags, MSE for mid-level
};

struct TrainConfig {
    std::size_t batch_size = 32;
    std::size_t epochs = 29;
    double learning_rate = 1e-3;
    bool freeze_backbone = false;
    double validation_fraction = 0.05;
    std::uint64_t seed = 0;
};

namespace detail {

/// Seeded split into (train, validation) index lists, both sorted.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout(std::size_t n, double fraction,
                                                                             std::uint64_t seed)
{
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (fraction <= 0.0)
        return {order, {}};
    midlevel::detail::Rng rng(seed);
    midlevel::detail::shuffle(order.begin(), order.end(), rng);
    auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    n_val = std::clamp<std::size_t>(n_val, 1, n > 1 ? n - 1 : 1);
    std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> tr(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
    std::sort(val.begin(), val.end());
    std::sort(tr.begin(), tr.end());
    return {tr, val};
}

/// One pass over `rows` in seeded mini-batches; returns the sample-weighted mean loss.
inline double run_epoch(Network& net, const Dataset& data, std::vector<std::size_t> rows, Head head, Adam& opt,
                        std::size_t batch_size, bool freeze_backbone, midlevel::detail::Rng& rng)
{
    midlevel::detail::shuffle(rows.begin(), rows.end(), rng);
    const std::vector<Parameter*> trainable =
        freeze_backbone ? net.head_parameters(head) : [&] {
            std::vector<Parameter*> all;
            for (const auto& p : net.parameters())
                all.push_back(p.param);
            return all;
        }();
    double total = 0.0;
    for (std::size_t start = 0; start < rows.size(); start += batch_size) {
        const std::vector<std::size_t> batch(rows.begin() + static_cast<std::ptrdiff_t>(start),
                                             rows.begin() + static_cast<std::ptrdiff_t>(std::min(rows.size(), start + batch_size)));
        const Tensor x = gather(data.inputs, batch), y = gather(data.targets, batch);
        net.zero_grad();
        auto fw = net.forward(x, head);
        const Loss loss = head_loss(head, fw.output, y);
        net.backward(fw.cache, loss.grad, !freeze_backbone);
        opt.step(trainable);
        net.mark_modified();
        total += loss.value * static_cast<double>(batch.size());
    }
    return total / static_cast<double>(rows.size());
}

inline void copy_values(const std::vector<NamedParameter>& from, std::vector<Tensor>& to)
{
    to.clear();
    for (const auto& p : from)
        to.push_back(p.param->value);
}

inline void restore_values(Network& net, const std::vector<Tensor>& values)
{
    const auto& params = net.parameters();
    for (std::size_t i = 0; i < params.size(); ++i)
        params[i].param->value = values[i];
    net.mark_modified();
}

} // namespace detail

/// Network outputs for every sample, evaluated in batches.
inline Tensor predict(const Network& net, const Tensor& inputs, Head head, std::size_t batch_size = 32)
{
    const std::size_t n = inputs.shape().n;
    Tensor out({n, net.output_width(head), 1, 1});
    for (std::size_t start = 0; start < n; start += batch_size) {
        std::vector<std::size_t> rows(std::min(n, start + batch_size) - start);
        std::iota(rows.begin(), rows.end(), start);
        const Tensor o = net.forward(gather(inputs, rows), head).output;
        std::copy(o.values().begin(), o.values().end(), out.sample(start).begin());
    }
    return out;
}

/// Embedding rows (N x E).
inline Eigen::MatrixXd embed(const Network& net, const Tensor& inputs, std::size_t batch_size = 32)
{
    const std::size_t n = inputs.shape().n, e = net.embedding_width();
    Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(e));
    for (std::size_t start = 0; start < n; start += batch_size) {
        std::vector<std::size_t> rows(std::min(n, start + batch_size) - start);
        std::iota(rows.begin(), rows.end(), start);
        const Tensor o = net.embed(gather(inputs, rows));
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (std::size_t j = 0; j < e; ++j)
                out(static_cast<Eigen::Index>(start + r), static_cast<Eigen::Index>(j)) = o[r * e + j];
    }
    return out;
}

inline double evaluate_loss(const Network& net, const Dataset& data, Head head, std::size_t batch_size = 32)
{
    return head_loss(head, predict(net, data.inputs, head, batch_size), data.targets).value;
}

/// Mean over tags of the ROC-AUC of sigmoid(logit); tags whose targets are
/// all one class are skipped. NaN when no tag qualifies.
inline double mean_tag_auc(const Tensor& logits, const Tensor& targets)
{
    const std::size_t n = logits.shape().n, t = logits.shape().c;
    double acc = 0.0;
    std::size_t used = 0;
    for (std::size_t k = 0; k < t; ++k) {
        std::vector<double> s(n);
        std::vector<int> l(n);
        std::size_t pos = 0;
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = logits[i * t + k];
            l[i] = targets[i * t + k] > 0.5;
            pos += static_cast<std::size_t>(l[i]);
        }
        if (pos == 0 || pos == n)
            continue;
        acc += roc_auc(s, l);
        ++used;
    }
    return used ? acc / static_cast<double>(used) : std::numeric_limits<double>::quiet_NaN();
}

struct TrainResult {
    std::vector<EpochMetrics> history;
    std::vector<std::size_t> validation_rows;
};

/// Multi-label tag training: sigmoid + mean binary cross-entropy, Adam,
/// per-epoch mean ROC-AUC on a seeded hold-out.
inline TrainResult train_tags(Network& net, const Dataset& data, const TrainConfig& cfg)
{
    if (data.size() == 0)
        throw Error(Errc::EmptyDataset, "no training samples");
    if (!net.has_head(Head::Tags))
        throw Error(Errc::MissingHead, "network has no tag head");
    if (data.targets.shape().c != net.output_width(Head::Tags) || data.targets.shape().n != data.size())
        throw Error(Errc::ShapeMismatch, "tag targets do not match the tag head");
    if (cfg.batch_size == 0)
        throw Error(Errc::InvalidArgument, "batch size must be positive");

    auto [tr, val] = detail::holdout(data.size(), cfg.validation_fraction, cfg.seed);
    const Dataset valset = val.empty() ? Dataset{} : subset(data, val);
    Adam opt({cfg.learning_rate});
    midlevel::detail::Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    TrainResult res;
    res.validation_rows = val;
    for (std::size_t e = 1; e <= cfg.epochs; ++e) {
        EpochMetrics m;
        m.epoch = e;
        m.train_loss = detail::run_epoch(net, data, tr, Head::Tags, opt, cfg.batch_size, cfg.freeze_backbone, rng);
        if (!val.empty())
            m.validation = mean_tag_auc(predict(net, valset.inputs, Head::Tags, cfg.batch_size), valset.targets);
        res.history.push_back(m);
    }
    return res;
}

struct FinetuneConfig {
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;    // stage 1; stage 2 uses learning_rate / stage2_divisor
    double stage2_divisor = 10.0;
    std::size_t patience = 5;
    std::size_t max_epochs_stage1 = 100;
    std::size_t max_epochs_stage2 = 100;
    double validation_fraction = 0.1; // 0: no validation set, no early stopping
    bool run_stage1 = true;
    bool run_stage2 = true;
    bool early_stopping = true;
    double stop_below_train_loss = 0.0; // > 0: end a stage once the epoch's training loss falls below
    std::uint64_t seed = 0;
};

/// Two-stage fine-tuning on the mid-level head with joint MSE over the 7
/// outputs. Stage 1 trains the head with the backbone frozen; stage 2 trains
/// everything with a reduced learning rate. Each stage early-stops on
/// validation MSE and ends with the best parameters restored. Every stage
/// starts with an epoch-0 entry evaluated before any update.
inline TrainResult finetune(Network& net, const Dataset& data, const FinetuneConfig& cfg)
{
    if (!net.has_head(Head::MidLevel))
        throw Error(Errc::MissingHead, "network has no mid-level head");
    if (data.size() == 0)
        throw Error(Errc::EmptyDataset, "no training samples");
    if (data.targets.shape().c != net.output_width(Head::MidLevel) || data.targets.shape().n != data.size())
        throw Error(Errc::ShapeMismatch, "mid-level targets do not match the head");
    if (cfg.batch_size == 0)
        throw Error(Errc::InvalidArgument, "batch size must be positive");

    auto [tr, val] = detail::holdout(data.size(), cfg.validation_fraction, cfg.seed);
    const Dataset trainset = subset(data, tr);
    const Dataset valset = val.empty() ? Dataset{} : subset(data, val);
    const bool early = cfg.early_stopping && !val.empty();
    midlevel::detail::Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    TrainResult res;
    res.validation_rows = val;

    const auto run_stage = [&](int stage, double lr, std::size_t max_epochs, bool frozen) {
        Adam opt({lr});
        EpochMetrics start;
        start.stage = stage;
        start.train_loss = evaluate_loss(net, trainset, Head::MidLevel, cfg.batch_size);
        if (!val.empty())
            start.validation = evaluate_loss(net, valset, Head::MidLevel, cfg.batch_size);
        res.history.push_back(start);
        double best = start.validation;
        std::vector<Tensor> best_values;
        detail::copy_values(net.parameters(), best_values);
        std::size_t since_best = 0;
        for (std::size_t e = 1; e <= max_epochs; ++e) {
            EpochMetrics m;
            m.stage = stage;
            m.epoch = e;
            m.train_loss = detail::run_epoch(net, data, tr, Head::MidLevel, opt, cfg.batch_size, frozen, rng);
            if (!val.empty())
                m.validation = evaluate_loss(net, valset, Head::MidLevel, cfg.batch_size);
            res.history.push_back(m);
            if (early) {
                if (m.validation < best) {
                    best = m.validation;
                    detail::copy_values(net.parameters(), best_values);
                    since_best = 0;
                } else if (++since_best >= cfg.patience) {
                    break;
                }
            }
            if (cfg.stop_below_train_loss > 0.0 && m.train_loss < cfg.stop_below_train_loss)
                break;
        }
        if (early)
            detail::restore_values(net, best_values);
    };

    if (cfg.run_stage1)
        run_stage(1, cfg.learning_rate, cfg.max_epochs_stage1, true);
    if (cfg.run_stage2)
        run_stage(2, cfg.learning_rate / cfg.stage2_divisor, cfg.max_epochs_stage2, false);
    return res;
}

struct GradCheckConfig {
    double eps = 1e-5;
    std::size_t n_params_sampled = 200;
    double denominator_floor = 1e-6;
    std::uint64_t seed = 0;
};

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped_at_kinks = 0; // perturbation flipped a ReLU or pooling decision
    std::string worst_parameter;
};

/// Loss value plus the activation pattern that produced it.
struct ProbedLoss {
    double value = 0.0;
    std::vector<std::size_t> pattern;
};

namespace detail {

/// Compares the gradients already stored in `params` with central
/// differences of `loss` on a seeded sample of scalar entries. Entries whose
/// +-eps probes change the activation pattern straddle a kink, where the
/// finite difference is meaningless; they are skipped and replaced by the
/// next entry in the seeded order.
inline GradCheckResult compare_gradients(const std::vector<NamedParameter>& params,
                                         const std::function<ProbedLoss()>& loss, const GradCheckConfig& cfg)
{
    std::vector<std::pair<std::size_t, std::size_t>> flat; // (parameter, index)
    for (std::size_t p = 0; p < params.size(); ++p)
        for (std::size_t i = 0; i < params[p].param->value.size(); ++i)
            flat.emplace_back(p, i);
    midlevel::detail::Rng rng(cfg.seed);
    midlevel::detail::shuffle(flat.begin(), flat.end(), rng);
    const std::vector<std::size_t> base = loss().pattern;

    GradCheckResult res;
    for (const auto& [p, i] : flat) {
        if (res.checked == cfg.n_params_sampled)
            break;
        Parameter& param = *params[p].param;
        const double analytic = param.grad[i];
        const double orig = param.value[i];
        param.value[i] = orig + cfg.eps;
        const ProbedLoss up = loss();
        param.value[i] = orig - cfg.eps;
        const ProbedLoss down = loss();
        param.value[i] = orig;
        if (up.pattern != base || down.pattern != base) {
            ++res.skipped_at_kinks;
            continue;
        }
        const double numeric = (up.value - down.value) / (2.0 * cfg.eps);
        const double denom = std::max({std::abs(analytic), std::abs(numeric), cfg.denominator_floor});
        const double rel = std::abs(analytic - numeric) / denom;
        if (rel > res.max_relative_error) {
            res.max_relative_error = rel;
            res.worst_parameter = params[p].name + "[" + std::to_string(i) + "]";
        }
        ++res.checked;
    }
    return res;
}

} // namespace detail

/// Central differences on a seeded sample of scalar parameters against the
/// analytic gradient of the head loss. `tamper` may alter the analytic
/// gradients before comparison.
inline GradCheckResult gradient_check(Network& net, const Tensor& inputs, const Tensor& targets, Head head,
                                      const GradCheckConfig& cfg = {},
                                      const std::function<void(Network&)>& tamper = {})
{
    net.zero_grad();
    auto fw = net.forward(inputs, head);
    const Loss loss = head_loss(head, fw.output, targets);
    net.backward(fw.cache, loss.grad, true);
    if (tamper)
        tamper(net);
    auto res = detail::compare_gradients(
        net.parameters(),
        [&] {
            auto r = net.forward(inputs, head);
            ProbedLoss pl{head_loss(head, r.output, targets).value, {}};
            activation_pattern(r.cache.backbone, pl.pattern);
            activation_pattern(r.cache.head_cache, pl.pattern);
            return pl;
        },
        cfg);
    net.mark_modified();
    return res;
}

/// Same check for a bare layer stack under mean squared error.
inline GradCheckResult gradient_check(Sequential& model, const Tensor& inputs, const Tensor& targets,
                                      const GradCheckConfig& cfg = {})
{
    std::vector<Parameter*> ps;
    model.parameters(ps);
    std::vector<NamedParameter> named;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        ps[i]->grad.fill(0.0);
        named.push_back({std::to_string(i) + "." + ps[i]->name, ps[i]});
    }
    Cache cache;
    const Loss loss = mse_loss(model.forward(inputs, cache), targets);
    model.backward(loss.grad, cache);
    return detail::compare_gradients(
        named,
        [&] {
            Cache c;
            ProbedLoss pl{mse_loss(model.forward(inputs, c), targets).value, {}};
            activation_pattern(c, pl.pattern);
            return pl;
        },
        cfg);
}

// ------------------------------------------------------------ synthetic data

namespace detail {

/// Plane wave of orientation pi k / n_kinds; odd kinds use a longer period
/// so neighbouring kinds differ in both angle and frequency.
inline double texture(std::size_t k, std::size_t n_kinds, double y, double x, double phase)
{
    const double angle = std::numbers::pi * static_cast<double>(k) / static_cast<double>(n_kinds);
    const double freq = k % 2 ? 1.0 / 6.0 : 0.25;
    return std::cos(2.0 * std::numbers::pi * freq * (x * std::cos(angle) + y * std::sin(angle)) + phase);
}

} // namespace detail

/// Noise inputs where tag k adds texture k (see detail::texture, zero
/// phase) at `strength`, so each tag is linearly separable in pixel space
/// by projecting on its texture. Tags are independent fair coins; sample 0
/// carries every tag and sample 1 none, so each tag has both classes.
inline Dataset synthetic_tag_dataset(std::size_t n, std::size_t n_tags, std::size_t h, std::size_t w,
                                     std::uint64_t seed, double strength = 1.0, double noise = 0.3)
{
    if (n < 2 || n_tags == 0 || h < 4 || w < 4)
        throw Error(Errc::InvalidArgument, "synthetic tag set needs n >= 2 and 4x4 inputs");
    midlevel::detail::Rng rng(seed);
    Dataset d{Tensor({n, 1, h, w}), Tensor({n, n_tags, 1, 1})};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < n_tags; ++k)
            d.targets[i * n_tags + k] = i == 0 ? 1.0 : i == 1 ? 0.0 : (midlevel::detail::uniform01(rng) < 0.5 ? 1.0 : 0.0);
        for (std::size_t k = 0; k < n_tags; ++k) {
            if (d.targets[i * n_tags + k] == 0.0)
                continue;
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x)
                    d.inputs.at(i, 0, y, x) += strength * detail::texture(k, n_tags, y, x, 0.0);
        }
        for (double& v : d.inputs.sample(i))
            v += noise * midlevel::detail::normal(rng);
    }
    return d;
}

/// Four latent intensities in [0, 1], each scaling one of four oriented
/// textures with a random phase; the seven targets are fixed convex mixes of
/// the latents, so they lie in [0, 1].
inline Dataset synthetic_midlevel_dataset(std::size_t n, std::size_t h, std::size_t w, std::uint64_t seed,
                                          double noise = 0.05)
{
    if (n == 0 || h < 4 || w < 4)
        throw Error(Errc::InvalidArgument, "synthetic mid-level set needs n >= 1 and 4x4 inputs");
    static constexpr double mix[7][4] = {
        {0.7, 0.1, 0.1, 0.1}, {0.1, 0.7, 0.1, 0.1}, {0.1, 0.1, 0.7, 0.1}, {0.1, 0.1, 0.1, 0.7},
        {0.4, 0.4, 0.1, 0.1}, {0.1, 0.1, 0.4, 0.4}, {0.25, 0.25, 0.25, 0.25},
    };
    midlevel::detail::Rng rng(seed);
    Dataset d{Tensor({n, 1, h, w}), Tensor({n, 7, 1, 1})};
    for (std::size_t i = 0; i < n; ++i) {
        double z[4], phase[4];
        for (std::size_t k = 0; k < 4; ++k) {
            z[k] = midlevel::detail::uniform01(rng);
            phase[k] = midlevel::detail::uniform(rng, 0.0, 2.0 * std::numbers::pi);
        }
        for (std::size_t t = 0; t < 7; ++t) {
            double acc = 0.0;
            for (std::size_t k = 0; k < 4; ++k)
                acc += mix[t][k] * z[k];
            d.targets[i * 7 + t] = acc;
        }
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                double v = 0.0;
                for (std::size_t k = 0; k < 4; ++k)
                    v += z[k] * detail::texture(k, 4, y, x, phase[k]);
                d.inputs.at(i, 0, y, x) = v + noise * midlevel::detail::normal(rng);
            }
    }
    return d;
}

} // namespace midlevel::nn
