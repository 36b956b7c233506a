#pragma once

// Layers with explicit forward caches. Forward is const; backward accumulates
// parameter gradients into the layer's Parameter::grad and returns the
// gradient with respect to the layer input.

#include "midlevel/detail/random.hpp"
#include "midlevel/nn/tensor.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

namespace midlevel::nn {

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
};

/// What a layer keeps from its forward pass.
struct Cache {
    Tensor input;
    Tensor output;
    std::vector<std::size_t> index; // pooling argmax or ReLU active mask
    std::vector<Cache> children;
};

/// Every piecewise-linear decision taken in a forward pass.
inline void activation_pattern(const Cache& c, std::vector<std::size_t>& out)
{
    out.insert(out.end(), c.index.begin(), c.index.end());
    for (const auto& ch : c.children)
        activation_pattern(ch, out);
}

class Layer {
public:
    virtual ~Layer() = default;
    virtual std::string kind() const = 0;
    virtual Shape output_shape(const Shape& in) const = 0;
    virtual Tensor forward(const Tensor& x, Cache& cache) const = 0;
    virtual Tensor backward(const Tensor& grad_out, const Cache& cache) = 0;
    virtual void parameters(std::vector<Parameter*>&) {}
    virtual std::unique_ptr<Layer> clone() const = 0;
};

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using midlevel::detail::Rng;

inline Tensor he_normal(Shape s, std::size_t fan_in, Rng& rng)
{
    Tensor t(s);
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& v : t.values())
        v = sd * midlevel::detail::normal(rng);
    return t;
}

inline void require_channels(const Shape& in, std::size_t c, const std::string& who)
{
    if (in.c != c)
        throw Error(Errc::ShapeMismatch,
                    who + " expects " + std::to_string(c) + " channels, got " + to_string(in));
}

} // namespace detail

/// Stride-1 convolution with same padding; odd kernel size.
class Conv2d final : public Layer {
public:
    Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, detail::Rng& rng)
        : cin_(in_channels), cout_(out_channels), k_(kernel)
    {
        if (kernel % 2 == 0 || kernel == 0 || in_channels == 0 || out_channels == 0)
            throw Error(Errc::InvalidArgument, "conv needs an odd kernel and positive channel counts");
        weight_.name = "weight";
        weight_.value = detail::he_normal({cout_, cin_, k_, k_}, cin_ * k_ * k_, rng);
        weight_.grad = Tensor(weight_.value.shape());
        bias_.name = "bias";
        bias_.value = Tensor({cout_, 1, 1, 1});
        bias_.grad = Tensor(bias_.value.shape());
    }

    std::string kind() const override { return "Conv" + std::to_string(k_) + "x" + std::to_string(k_); }
    std::size_t in_channels() const { return cin_; }
    std::size_t out_channels() const { return cout_; }
    Parameter& weight() { return weight_; }
    Parameter& bias() { return bias_; }

    Shape output_shape(const Shape& in) const override
    {
        detail::require_channels(in, cin_, kind());
        return {in.n, cout_, in.h, in.w};
    }

    Tensor forward(const Tensor& x, Cache& cache) const override
    {
        const Shape out_shape = output_shape(x.shape());
        const std::size_t hw = x.shape().h * x.shape().w, kk = cin_ * k_ * k_;
        Tensor y(out_shape);
        std::vector<double> col(kk * hw);
        const Eigen::Map<const detail::RowMat> W(weight_.value.data(), static_cast<Eigen::Index>(cout_),
                                                 static_cast<Eigen::Index>(kk));
        const Eigen::Map<const Eigen::VectorXd> b(bias_.value.data(), static_cast<Eigen::Index>(cout_));
        for (std::size_t n = 0; n < x.shape().n; ++n) {
            im2col(x, n, col);
            Eigen::Map<detail::RowMat> out(y.sample(n).data(), static_cast<Eigen::Index>(cout_),
                                           static_cast<Eigen::Index>(hw));
            out.noalias() = W * Eigen::Map<const detail::RowMat>(col.data(), static_cast<Eigen::Index>(kk),
                                                                  static_cast<Eigen::Index>(hw));
            out.colwise() += b;
        }
        cache.input = x;
        return y;
    }

    Tensor backward(const Tensor& g, const Cache& cache) override
    {
        const Tensor& x = cache.input;
        const std::size_t hw = x.shape().h * x.shape().w, kk = cin_ * k_ * k_;
        Tensor dx(x.shape());
        std::vector<double> col(kk * hw), dcol(kk * hw);
        const Eigen::Map<const detail::RowMat> W(weight_.value.data(), static_cast<Eigen::Index>(cout_),
                                                 static_cast<Eigen::Index>(kk));
        Eigen::Map<detail::RowMat> gW(weight_.grad.data(), static_cast<Eigen::Index>(cout_),
                                      static_cast<Eigen::Index>(kk));
        Eigen::Map<Eigen::VectorXd> gb(bias_.grad.data(), static_cast<Eigen::Index>(cout_));
        for (std::size_t n = 0; n < x.shape().n; ++n) {
            im2col(x, n, col);
            const Eigen::Map<const detail::RowMat> go(g.sample(n).data(), static_cast<Eigen::Index>(cout_),
                                                      static_cast<Eigen::Index>(hw));
            const Eigen::Map<const detail::RowMat> C(col.data(), static_cast<Eigen::Index>(kk),
                                                     static_cast<Eigen::Index>(hw));
            gW.noalias() += go * C.transpose();
            gb += go.rowwise().sum();
            Eigen::Map<detail::RowMat>(dcol.data(), static_cast<Eigen::Index>(kk), static_cast<Eigen::Index>(hw))
                .noalias() = W.transpose() * go;
            col2im(dcol, dx, n);
        }
        return dx;
    }

    void parameters(std::vector<Parameter*>& out) override
    {
        out.push_back(&weight_);
        out.push_back(&bias_);
    }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2d>(*this); }

private:
    void im2col(const Tensor& x, std::size_t n, std::vector<double>& col) const
    {
        const auto H = static_cast<long>(x.shape().h), Wd = static_cast<long>(x.shape().w);
        const long p = static_cast<long>(k_ / 2), k = static_cast<long>(k_);
        const std::size_t hw = x.shape().h * x.shape().w;
        std::size_t row = 0;
        for (std::size_t c = 0; c < cin_; ++c) {
            const double* plane = x.sample(n).data() + c * hw;
            for (long ky = 0; ky < k; ++ky)
                for (long kx = 0; kx < k; ++kx, ++row) {
                    double* dst = col.data() + row * hw;
                    for (long y = 0; y < H; ++y) {
                        const long sy = y + ky - p;
                        for (long xx = 0; xx < Wd; ++xx) {
                            const long sx = xx + kx - p;
                            dst[y * Wd + xx] = (sy < 0 || sy >= H || sx < 0 || sx >= Wd) ? 0.0 : plane[sy * Wd + sx];
                        }
                    }
                }
        }
    }

    void col2im(const std::vector<double>& dcol, Tensor& dx, std::size_t n) const
    {
        const auto H = static_cast<long>(dx.shape().h), Wd = static_cast<long>(dx.shape().w);
        const long p = static_cast<long>(k_ / 2), k = static_cast<long>(k_);
        const std::size_t hw = dx.shape().h * dx.shape().w;
        std::size_t row = 0;
        for (std::size_t c = 0; c < cin_; ++c) {
            double* plane = dx.sample(n).data() + c * hw;
            for (long ky = 0; ky < k; ++ky)
                for (long kx = 0; kx < k; ++kx, ++row) {
                    const double* src = dcol.data() + row * hw;
                    for (long y = 0; y < H; ++y) {
                        const long sy = y + ky - p;
                        if (sy < 0 || sy >= H)
                            continue;
                        for (long xx = 0; xx < Wd; ++xx) {
                            const long sx = xx + kx - p;
                            if (sx >= 0 && sx < Wd)
                                plane[sy * Wd + sx] += src[y * Wd + xx];
                        }
                    }
                }
        }
    }

    std::size_t cin_, cout_, k_;
    Parameter weight_, bias_;
};

/// Max pooling over size x size windows. MaxPool(2, 2, 0) halves the spatial
/// dims; MaxPool(3, 1, 1) keeps them.
class MaxPool final : public Layer {
public:
    MaxPool(std::size_t size = 2, std::size_t stride = 2, std::size_t pad = 0) : size_(size), stride_(stride), pad_(pad)
    {
        if (size == 0 || stride == 0 || pad >= size)
            throw Error(Errc::InvalidArgument, "invalid pooling geometry");
    }

    std::string kind() const override { return size_ == 2 && stride_ == 2 ? "MaxPool2" : "MaxPool" + std::to_string(size_); }

    Shape output_shape(const Shape& in) const override
    {
        if (in.h + 2 * pad_ < size_ || in.w + 2 * pad_ < size_)
            throw Error(Errc::ShapeMismatch, "input " + to_string(in) + " smaller than pooling window");
        return {in.n, in.c, (in.h + 2 * pad_ - size_) / stride_ + 1, (in.w + 2 * pad_ - size_) / stride_ + 1};
    }

    Tensor forward(const Tensor& x, Cache& cache) const override
    {
        const Shape os = output_shape(x.shape());
        Tensor y(os);
        cache.index.assign(os.size(), 0);
        const Shape& is = x.shape();
        std::size_t o = 0;
        for (std::size_t n = 0; n < os.n; ++n)
            for (std::size_t c = 0; c < os.c; ++c)
                for (std::size_t oy = 0; oy < os.h; ++oy)
                    for (std::size_t ox = 0; ox < os.w; ++ox, ++o) {
                        double best = -std::numeric_limits<double>::infinity();
                        std::size_t arg = 0;
                        for (std::size_t ky = 0; ky < size_; ++ky) {
                            const long sy = static_cast<long>(oy * stride_ + ky) - static_cast<long>(pad_);
                            if (sy < 0 || sy >= static_cast<long>(is.h))
                                continue;
                            for (std::size_t kx = 0; kx < size_; ++kx) {
                                const long sx = static_cast<long>(ox * stride_ + kx) - static_cast<long>(pad_);
                                if (sx < 0 || sx >= static_cast<long>(is.w))
                                    continue;
                                const std::size_t idx =
                                    ((n * is.c + c) * is.h + static_cast<std::size_t>(sy)) * is.w + static_cast<std::size_t>(sx);
                                if (x[idx] > best) {
                                    best = x[idx];
                                    arg = idx;
                                }
                            }
                        }
                        y[o] = best;
                        cache.index[o] = arg;
                    }
        cache.input = Tensor(x.shape());
        return y;
    }

    Tensor backward(const Tensor& g, const Cache& cache) override
    {
        Tensor dx(cache.input.shape());
        for (std::size_t o = 0; o < g.size(); ++o)
            dx[cache.index[o]] += g[o];
        return dx;
    }

    std::unique_ptr<Layer> clone() const override { return std::make_unique<MaxPool>(*this); }

private:
    std::size_t size_, stride_, pad_;
};

class ReLU final : public Layer {
public:
    std::string kind() const override { return "ReLU"; }
    Shape output_shape(const Shape& in) const override { return in; }
    Tensor forward(const Tensor& x, Cache& cache) const override
    {
        Tensor y = x;
        cache.index.assign(y.size(), 0);
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (y[i] > 0.0)
                cache.index[i] = 1;
            else
                y[i] = 0.0;
        }
        cache.output = y;
        return y;
    }
    Tensor backward(const Tensor& g, const Cache& cache) override
    {
        Tensor dx = g;
        for (std::size_t i = 0; i < dx.size(); ++i)
            if (!(cache.output[i] > 0.0))
                dx[i] = 0.0;
        return dx;
    }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<ReLU>(*this); }
};

inline double sigmoid(double z) noexcept
{
    return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

class Sigmoid final : public Layer {
public:
    std::string kind() const override { return "Sigmoid"; }
    Shape output_shape(const Shape& in) const override { return in; }
    Tensor forward(const Tensor& x, Cache& cache) const override
    {
        Tensor y = x;
        for (double& v : y.values())
            v = sigmoid(v);
        cache.output = y;
        return y;
    }
    Tensor backward(const Tensor& g, const Cache& cache) override
    {
        Tensor dx = g;
        for (std::size_t i = 0; i < dx.size(); ++i)
            dx[i] *= cache.output[i] * (1.0 - cache.output[i]);
        return dx;
    }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Sigmoid>(*this); }
};

/// Fully connected layer over the flattened per-sample input.
class Dense final : public Layer {
public:
    Dense(std::size_t in_features, std::size_t out_features, detail::Rng& rng) : in_(in_features), out_(out_features)
    {
        if (in_features == 0 || out_features == 0)
            throw Error(Errc::InvalidArgument, "dense layer needs positive sizes");
        weight_.name = "weight";
        weight_.value = detail::he_normal({out_, in_, 1, 1}, in_, rng);
        weight_.grad = Tensor(weight_.value.shape());
        bias_.name = "bias";
        bias_.value = Tensor({out_, 1, 1, 1});
        bias_.grad = Tensor(bias_.value.shape());
    }

    std::string kind() const override { return "Dense"; }
    std::size_t in_features() const { return in_; }
    std::size_t out_features() const { return out_; }
    Parameter& weight() { return weight_; }
    Parameter& bias() { return bias_; }

    Shape output_shape(const Shape& in) const override
    {
        if (in.per_sample() != in_)
            throw Error(Errc::ShapeMismatch,
                        "dense layer expects " + std::to_string(in_) + " inputs, got " + to_string(in));
        return {in.n, out_, 1, 1};
    }

    Tensor forward(const Tensor& x, Cache& cache) const override
    {
        const Shape os = output_shape(x.shape());
        Tensor y(os);
        const auto N = static_cast<Eigen::Index>(x.shape().n);
        const Eigen::Map<const detail::RowMat> X(x.data(), N, static_cast<Eigen::Index>(in_));
        const Eigen::Map<const detail::RowMat> W(weight_.value.data(), static_cast<Eigen::Index>(out_),
                                                 static_cast<Eigen::Index>(in_));
        const Eigen::Map<const Eigen::RowVectorXd> b(bias_.value.data(), static_cast<Eigen::Index>(out_));
        Eigen::Map<detail::RowMat> Y(y.data(), N, static_cast<Eigen::Index>(out_));
        Y.noalias() = X * W.transpose();
        Y.rowwise() += b;
        cache.input = x;
        return y;
    }

    Tensor backward(const Tensor& g, const Cache& cache) override
    {
        const Tensor& x = cache.input;
        const auto N = static_cast<Eigen::Index>(x.shape().n);
        const Eigen::Map<const detail::RowMat> X(x.data(), N, static_cast<Eigen::Index>(in_));
        const Eigen::Map<const detail::RowMat> G(g.data(), N, static_cast<Eigen::Index>(out_));
        const Eigen::Map<const detail::RowMat> W(weight_.value.data(), static_cast<Eigen::Index>(out_),
                                                 static_cast<Eigen::Index>(in_));
        Eigen::Map<detail::RowMat>(weight_.grad.data(), static_cast<Eigen::Index>(out_),
                                   static_cast<Eigen::Index>(in_))
            .noalias() += G.transpose() * X;
        Eigen::Map<Eigen::RowVectorXd>(bias_.grad.data(), static_cast<Eigen::Index>(out_)) += G.colwise().sum();
        Tensor dx(x.shape());
        Eigen::Map<detail::RowMat>(dx.data(), N, static_cast<Eigen::Index>(in_)).noalias() = G * W;
        return dx;
    }

    void parameters(std::vector<Parameter*>& out) override
    {
        out.push_back(&weight_);
        out.push_back(&bias_);
    }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }

private:
    std::size_t in_, out_;
    Parameter weight_, bias_;
};

class GlobalAvgPool final : public Layer {
public:
    std::string kind() const override { return "GlobalAvgPool"; }
    Shape output_shape(const Shape& in) const override { return {in.n, in.c, 1, 1}; }
    Tensor forward(const Tensor& x, Cache& cache) const override
    {
        const Shape& s = x.shape();
        Tensor y(output_shape(s));
        const std::size_t hw = s.h * s.w;
        for (std::size_t i = 0; i < s.n * s.c; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < hw; ++j)
                acc += x[i * hw + j];
            y[i] = acc / static_cast<double>(hw);
        }
        cache.input = Tensor(s);
        return y;
    }
    Tensor backward(const Tensor& g, const Cache& cache) override
    {
        const Shape& s = cache.input.shape();
        Tensor dx(s);
        const std::size_t hw = s.h * s.w;
        for (std::size_t i = 0; i < s.n * s.c; ++i)
            for (std::size_t j = 0; j < hw; ++j)
                dx[i * hw + j] = g[i] / static_cast<double>(hw);
        return dx;
    }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<GlobalAvgPool>(*this); }
};

class Sequential final : public Layer {
public:
    Sequential() = default;
    Sequential(const Sequential& o)
    {
        for (const auto& l : o.layers_)
            layers_.push_back(l->clone());
    }
    Sequential& operator=(const Sequential& o)
    {
        if (this != &o) {
            Sequential tmp(o);
            layers_ = std::move(tmp.layers_);
        }
        return *this;
    }
    Sequential(Sequential&&) noexcept = default;
    Sequential& operator=(Sequential&&) noexcept = default;

    template <class L, class... Args>
    L& add(Args&&... args)
    {
        auto l = std::make_unique<L>(std::forward<Args>(args)...);
        L& ref = *l;
        layers_.push_back(std::move(l));
        return ref;
    }
    void add(std::unique_ptr<Layer> l) { layers_.push_back(std::move(l)); }

    std::size_t size() const { return layers_.size(); }
    Layer& operator[](std::size_t i) { return *layers_[i]; }
    const Layer& operator[](std::size_t i) const { return *layers_[i]; }

    std::string kind() const override { return "Sequential"; }
    Shape output_shape(const Shape& in) const override
    {
        Shape s = in;
        for (const auto& l : layers_)
            s = l->output_shape(s);
        return s;
    }
    Tensor forward(const Tensor& x, Cache& cache) const override
    {
        cache.children.assign(layers_.size(), Cache{});
        Tensor h = x;
        for (std::size_t i = 0; i < layers_.size(); ++i)
            h = layers_[i]->forward(h, cache.children[i]);
        return h;
    }
    Tensor backward(const Tensor& g, const Cache& cache) override
    {
        Tensor d = g;
        for (std::size_t i = layers_.size(); i-- > 0;)
            d = layers_[i]->backward(d, cache.children[i]);
        return d;
    }
    void parameters(std::vector<Parameter*>& out) override
    {
        for (auto& l : layers_)
            l->parameters(out);
    }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Sequential>(*this); }

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

/// Stacks tensors with equal n, h, w along the channel axis.
inline Tensor concat_channels(const std::vector<Tensor>& parts)
{
    if (parts.empty())
        throw Error(Errc::ShapeMismatch, "nothing to concatenate");
    Shape s = parts[0].shape();
    s.c = 0;
    for (const auto& p : parts) {
        const Shape& q = p.shape();
        if (q.n != s.n || q.h != s.h || q.w != s.w)
            throw Error(Errc::ShapeMismatch, "concat of " + to_string(q) + " with " + to_string(parts[0].shape()));
        s.c += q.c;
    }
    Tensor out(s);
    const std::size_t hw = s.h * s.w;
    for (std::size_t n = 0; n < s.n; ++n) {
        double* dst = out.sample(n).data();
        for (const auto& p : parts) {
            const auto src = p.sample(n);
            std::copy(src.begin(), src.end(), dst);
            dst += p.shape().c * hw;
        }
    }
    return out;
}

/// Channels [first, first + count) of t.
inline Tensor slice_channels(const Tensor& t, std::size_t first, std::size_t count)
{
    const Shape& s = t.shape();
    if (first + count > s.c)
        throw Error(Errc::ShapeMismatch, "channel slice out of range");
    Tensor out({s.n, count, s.h, s.w});
    const std::size_t hw = s.h * s.w;
    for (std::size_t n = 0; n < s.n; ++n) {
        const double* src = t.sample(n).data() + first * hw;
        std::copy(src, src + count * hw, out.sample(n).data());
    }
    return out;
}

struct InceptionChannels {
    std::size_t b1x1 = 8, b3x3 = 8, b5x5 = 8, pool = 8;
    std::size_t total() const { return b1x1 + b3x3 + b5x5 + pool; }
    bool operator==(const InceptionChannels&) const = default;
};

/// Four parallel branches merged by channel concatenation:
/// 1x1 conv; 3x3 conv; 5x5 conv; 3x3 stride-1 max pool then 1x1 conv.
/// Every conv is followed by ReLU.
class Inception final : public Layer {
public:
    Inception(std::size_t in_channels, InceptionChannels ch, detail::Rng& rng) : cin_(in_channels), ch_(ch)
    {
        branches_.resize(4);
        branches_[0].add<Conv2d>(cin_, ch.b1x1, 1, rng);
        branches_[0].add<ReLU>();
        branches_[1].add<Conv2d>(cin_, ch.b3x3, 3, rng);
        branches_[1].add<ReLU>();
        branches_[2].add<Conv2d>(cin_, ch.b5x5, 5, rng);
        branches_[2].add<ReLU>();
        branches_[3].add<MaxPool>(3, 1, 1);
        branches_[3].add<Conv2d>(cin_, ch.pool, 1, rng);
        branches_[3].add<ReLU>();
    }

    std::string kind() const override { return "Inception"; }
    std::size_t out_channels() const { return ch_.total(); }
    Sequential& branch(std::size_t i) { return branches_[i]; }

    Shape output_shape(const Shape& in) const override
    {
        detail::require_channels(in, cin_, "inception block");
        return {in.n, ch_.total(), in.h, in.w};
    }

    Tensor forward(const Tensor& x, Cache& cache) const override
    {
        output_shape(x.shape());
        cache.children.assign(4, Cache{});
        std::vector<Tensor> parts;
        for (std::size_t b = 0; b < 4; ++b)
            parts.push_back(branches_[b].forward(x, cache.children[b]));
        return concat_channels(parts);
    }

    Tensor backward(const Tensor& g, const Cache& cache) override
    {
        const std::size_t widths[4] = {ch_.b1x1, ch_.b3x3, ch_.b5x5, ch_.pool};
        Tensor dx;
        std::size_t first = 0;
        for (std::size_t b = 0; b < 4; ++b) {
            Tensor d = branches_[b].backward(slice_channels(g, first, widths[b]), cache.children[b]);
            first += widths[b];
            if (b == 0)
                dx = std::move(d);
            else
                for (std::size_t i = 0; i < dx.size(); ++i)
                    dx[i] += d[i];
        }
        return dx;
    }

    void parameters(std::vector<Parameter*>& out) override
    {
        for (auto& b : branches_)
            b.parameters(out);
    }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Inception>(*this); }

private:
    std::size_t cin_;
    InceptionChannels ch_;
    std::vector<Sequential> branches_;
};

} // namespace midlevel::nn
