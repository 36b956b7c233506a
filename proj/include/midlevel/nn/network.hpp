#pragma once

// Mini-inception network: a convolutional backbone ending in an embedding
// layer, plus an optional multi-label tag head and an optional 150/30/7
// mid-level regression head.

#include "midlevel/nn/layers.hpp"

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <utility>
#include <vector>

namespace midlevel::nn {

struct NetworkConfig {
    std::size_t in_channels = 1;
    std::size_t height = 64;
    std::size_t width = 64;
    // five 3x3 conv layers; max pooling after the second and the fourth
    std::array<std::size_t, 5> conv_channels{8, 8, 16, 16, 16};
    std::array<InceptionChannels, 2> inception{InceptionChannels{8, 8, 8, 8}, InceptionChannels{8, 8, 8, 8}};
    std::size_t embedding = 128;
    std::size_t n_tags = 0;        // 0: no tag head
    bool midlevel_head = false;
    std::array<std::size_t, 2> head_hidden{150, 30};
    std::size_t n_midlevel = 7;
    std::uint64_t seed = 0;

    bool operator==(const NetworkConfig&) const = default;
};

enum class Head { Tags, MidLevel };

struct ForwardCache {
    Head head = Head::Tags;
    std::uint64_t network_id = 0;
    std::uint64_t version = 0;
    Cache backbone;
    Cache head_cache;
};

struct ForwardResult {
    Tensor output;
    ForwardCache cache;
};

struct NamedParameter {
    std::string name;
    Parameter* param;
};

class Network {
public:
    explicit Network(const NetworkConfig& cfg) : cfg_(cfg), id_(next_id())
    {
        if (cfg.height < 4 || cfg.width < 4 || cfg.in_channels == 0 || cfg.embedding == 0)
            throw Error(Errc::InvalidArgument, "network input must be at least 4x4 with positive channels");
        detail::Rng rng(cfg.seed);
        const auto& c = cfg.conv_channels;
        backbone_.add<Conv2d>(cfg.in_channels, c[0], 3, rng);
        backbone_.add<ReLU>();
        backbone_.add<Conv2d>(c[0], c[1], 3, rng);
        backbone_.add<ReLU>();
        backbone_.add<MaxPool>(2, 2, 0);
        backbone_.add<Conv2d>(c[1], c[2], 3, rng);
        backbone_.add<ReLU>();
        backbone_.add<Conv2d>(c[2], c[3], 3, rng);
        backbone_.add<ReLU>();
        backbone_.add<MaxPool>(2, 2, 0);
        backbone_.add<Conv2d>(c[3], c[4], 3, rng);
        backbone_.add<ReLU>();
        backbone_.add<Inception>(c[4], cfg.inception[0], rng);
        backbone_.add<Inception>(cfg.inception[0].total(), cfg.inception[1], rng);
        backbone_.add<GlobalAvgPool>();
        backbone_.add<Dense>(cfg.inception[1].total(), cfg.embedding, rng);
        backbone_.add<ReLU>();
        if (cfg.n_tags > 0)
            attach_tag_head(cfg.n_tags, cfg.seed + 1);
        if (cfg.midlevel_head)
            attach_midlevel_head(cfg.seed + 2);
        name_parameters();
    }

    Network(const Network& o)
        : cfg_(o.cfg_), backbone_(o.backbone_), tag_head_(o.tag_head_), mid_head_(o.mid_head_), id_(next_id())
    {
        name_parameters();
    }
    Network& operator=(const Network& o)
    {
        if (this != &o) {
            cfg_ = o.cfg_;
            backbone_ = o.backbone_;
            tag_head_ = o.tag_head_;
            mid_head_ = o.mid_head_;
            ++version_;
            name_parameters();
        }
        return *this;
    }

    const NetworkConfig& config() const { return cfg_; }
    Shape input_shape(std::size_t batch) const { return {batch, cfg_.in_channels, cfg_.height, cfg_.width}; }
    std::size_t embedding_width() const { return cfg_.embedding; }
    bool has_head(Head h) const { return h == Head::Tags ? tag_head_.has_value() : mid_head_.has_value(); }
    std::size_t output_width(Head h) const { return h == Head::Tags ? cfg_.n_tags : cfg_.n_midlevel; }

    /// Tag head: Dense(T) producing logits. Replaces an existing tag head.
    void attach_tag_head(std::size_t n_tags, std::uint64_t seed)
    {
        if (n_tags == 0)
            throw Error(Errc::InvalidArgument, "tag head needs at least one tag");
        detail::Rng rng(seed);
        Sequential h;
        h.add<Dense>(cfg_.embedding, n_tags, rng);
        tag_head_ = std::move(h);
        cfg_.n_tags = n_tags;
        ++version_;
        name_parameters();
    }

    /// Mid-level head: Dense 150 -> ReLU -> Dense 30 -> ReLU -> Dense 7, linear output.
    void attach_midlevel_head(std::uint64_t seed)
    {
        detail::Rng rng(seed);
        Sequential h;
        h.add<Dense>(cfg_.embedding, cfg_.head_hidden[0], rng);
        h.add<ReLU>();
        h.add<Dense>(cfg_.head_hidden[0], cfg_.head_hidden[1], rng);
        h.add<ReLU>();
        h.add<Dense>(cfg_.head_hidden[1], cfg_.n_midlevel, rng);
        mid_head_ = std::move(h);
        cfg_.midlevel_head = true;
        ++version_;
        name_parameters();
    }

    ForwardResult forward(const Tensor& x, Head head) const
    {
        const Sequential& h = head_ref(head);
        check_input(x.shape());
        ForwardResult r;
        r.cache.head = head;
        r.cache.network_id = id_;
        r.cache.version = version_;
        const Tensor e = backbone_.forward(x, r.cache.backbone);
        r.output = h.forward(e, r.cache.head_cache);
        return r;
    }

    /// Penultimate activations, before any head.
    Tensor embed(const Tensor& x) const
    {
        check_input(x.shape());
        Cache c;
        return backbone_.forward(x, c);
    }

    /// Accumulates parameter gradients of the head, and of the backbone when
    /// `through_backbone`; returns the input gradient (empty otherwise).
    Tensor backward(const ForwardCache& cache, const Tensor& grad_out, bool through_backbone = true)
    {
        if (cache.network_id != id_ || cache.version != version_)
            throw Error(Errc::StaleCache, "forward cache does not belong to the current parameters");
        Sequential& h = head_mut(cache.head);
        const Tensor ge = h.backward(grad_out, cache.head_cache);
        if (!through_backbone)
            return {};
        return backbone_.backward(ge, cache.backbone);
    }

    const std::vector<NamedParameter>& parameters() { return named_; }
    std::vector<Parameter*> backbone_parameters() { return group("backbone."); }
    std::vector<Parameter*> head_parameters(Head h) { return group(h == Head::Tags ? "tags." : "midlevel."); }
    std::size_t parameter_count()
    {
        std::size_t n = 0;
        for (const auto& p : named_)
            n += p.param->value.size();
        return n;
    }

    void zero_grad()
    {
        for (auto& p : named_)
            p.param->grad.fill(0.0);
    }

    /// Invalidates outstanding forward caches. Call after changing parameter values.
    void mark_modified() { ++version_; }
    std::uint64_t version() const { return version_; }

    Sequential& backbone() { return backbone_; }

private:
    static std::uint64_t next_id()
    {
        static std::atomic<std::uint64_t> counter{1};
        return counter++;
    }

    void check_input(const Shape& s) const
    {
        if (s.c != cfg_.in_channels || s.h != cfg_.height || s.w != cfg_.width || s.n == 0)
            throw Error(Errc::ShapeMismatch, "network expects [N x " + std::to_string(cfg_.in_channels) + " x " +
                                                 std::to_string(cfg_.height) + " x " + std::to_string(cfg_.width) +
                                                 "], got " + to_string(s));
    }

    const Sequential& head_ref(Head h) const
    {
        const auto& opt = h == Head::Tags ? tag_head_ : mid_head_;
        if (!opt)
            throw Error(Errc::MissingHead, h == Head::Tags ? "no tag head" : "no mid-level head");
        return *opt;
    }
    Sequential& head_mut(Head h) { return const_cast<Sequential&>(head_ref(h)); }

    void name_parameters()
    {
        named_.clear();
        const auto add_group = [&](Sequential& s, const std::string& prefix) {
            std::vector<Parameter*> ps;
            s.parameters(ps);
            for (std::size_t i = 0; i < ps.size(); i += 2) {
                char idx[24];
                std::snprintf(idx, sizeof idx, "%02zu", i / 2);
                named_.push_back({prefix + idx + "." + ps[i]->name, ps[i]});
                if (i + 1 < ps.size())
                    named_.push_back({prefix + idx + "." + ps[i + 1]->name, ps[i + 1]});
            }
        };
        add_group(backbone_, "backbone.");
        if (tag_head_)
            add_group(*tag_head_, "tags.");
        if (mid_head_)
            add_group(*mid_head_, "midlevel.");
    }

    std::vector<Parameter*> group(const std::string& prefix)
    {
        std::vector<Parameter*> out;
        for (const auto& p : named_)
            if (p.name.compare(0, prefix.size(), prefix) == 0)
                out.push_back(p.param);
        return out;
    }

    NetworkConfig cfg_;
    Sequential backbone_;
    std::optional<Sequential> tag_head_;
    std::optional<Sequential> mid_head_;
    std::uint64_t id_;
    std::uint64_t version_ = 0;
    std::vector<NamedParameter> named_;
};

struct Loss {
    double value = 0.0;
    Tensor grad; // d value / d prediction
};

/// Mean binary cross-entropy over every (sample, tag) from logits.
inline Loss bce_with_logits(const Tensor& logits, const Tensor& targets)
{
    if (logits.shape() != targets.shape())
        throw Error(Errc::ShapeMismatch, "logits " + to_string(logits.shape()) + " vs targets " + to_string(targets.shape()));
    Loss l{0.0, Tensor(logits.shape())};
    const double n = static_cast<double>(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double z = logits[i], t = targets[i];
        // log(1 + exp(-|z|)) + max(z, 0) - z t
        l.value += std::log1p(std::exp(-std::abs(z))) + std::max(z, 0.0) - z * t;
        l.grad[i] = (sigmoid(z) - t) / n;
    }
    l.value /= n;
    return l;
}

/// Mean squared error over every output jointly.
inline Loss mse_loss(const Tensor& pred, const Tensor& targets)
{
    if (pred.shape() != targets.shape())
        throw Error(Errc::ShapeMismatch, "predictions " + to_string(pred.shape()) + " vs targets " + to_string(targets.shape()));
    Loss l{0.0, Tensor(pred.shape())};
    const double n = static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - targets[i];
        l.value += d * d;
        l.grad[i] = 2.0 * d / n;
    }
    l.value /= n;
    return l;
}

inline Loss head_loss(Head h, const Tensor& out, const Tensor& targets)
{
    return h == Head::Tags ? bce_with_logits(out, targets) : mse_loss(out, targets);
}

} // namespace midlevel::nn
