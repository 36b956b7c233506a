#pragma once

#include "midlevel/nn/layers.hpp"

#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace midlevel::nn {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adam with bias correction. Moments are keyed by parameter identity, so
/// one optimizer belongs to one set of live parameters.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg)
    {
        if (!(cfg.learning_rate > 0.0))
            throw Error(Errc::InvalidArgument, "learning rate must be positive");
    }

    void step(const std::vector<Parameter*>& params)
    {
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (Parameter* p : params) {
            auto& st = moments_[p];
            if (st.m.size() != p->value.size()) {
                st.m.assign(p->value.size(), 0.0);
                st.v.assign(p->value.size(), 0.0);
            }
            for (std::size_t i = 0; i < p->value.size(); ++i) {
                const double g = p->grad[i];
                st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * g;
                st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * g * g;
                const double mhat = st.m[i] / c1, vhat = st.v[i] / c2;
                p->value[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
            }
        }
    }

    std::size_t steps() const { return t_; }
    const AdamConfig& config() const { return cfg_; }
    void set_learning_rate(double lr) { cfg_.learning_rate = lr; }

private:
    struct Moments {
        std::vector<double> m, v;
    };
    AdamConfig cfg_;
    std::size_t t_ = 0;
    std::map<const Parameter*, Moments> moments_;
};

} // namespace midlevel::nn
