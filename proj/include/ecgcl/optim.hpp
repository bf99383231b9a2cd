#pragma once

#include <cmath>
#include <map>
#include <string>

#include "ecgcl/models.hpp"
#include "ecgcl/tensor.hpp"

namespace ecgcl {

struct AdamConfig {
    double learning_rate = 5e-4;
    double weight_decay = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct SgdConfig {
    double learning_rate = 0.01;
};

namespace detail {
inline void check_grad_finite(const std::string& name, const Tensor& g) {
    if (!g.all_finite()) throw Error("non-finite gradient for parameter '" + name + "'");
}
}  // namespace detail

// Adam with bias-corrected moments. Weight decay is decoupled: an extra
// -lr*wd*theta term on top of the moment update, using the pre-step value.
class Adam {
public:
    explicit Adam(AdamConfig config = {}) : cfg_(config) {
        if (!(cfg_.learning_rate > 0.0)) throw Error("adam: learning rate must be > 0");
        if (cfg_.weight_decay < 0.0) throw Error("adam: weight decay must be >= 0");
    }

    void step(ParamStore& params, const std::map<std::string, Tensor>& grads) {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
        const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (const auto& [name, g] : grads) {
            detail::check_grad_finite(name, g);
            Tensor& theta = params.at(name);
            if (!theta.same_shape(g))
                throw Error("adam: gradient shape mismatch for '" + name + "'");
            Tensor& m = moment1_.try_emplace(name, Tensor(g.shape())).first->second;
            Tensor& v = moment2_.try_emplace(name, Tensor(g.shape())).first->second;
            for (size_t i = 0; i < g.size(); ++i) {
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                const double decay = cfg_.weight_decay * theta[i];
                theta[i] -= cfg_.learning_rate * (mhat / (std::sqrt(vhat) + cfg_.eps) + decay);
            }
        }
    }

    long step_count() const { return t_; }

private:
    AdamConfig cfg_;
    std::map<std::string, Tensor> moment1_, moment2_;
    long t_ = 0;
};

// Plain SGD: theta <- theta - lr * g.
class Sgd {
public:
    explicit Sgd(SgdConfig config = {}) : cfg_(config) {
        if (!(cfg_.learning_rate > 0.0)) throw Error("sgd: learning rate must be > 0");
    }

    void step(ParamStore& params, const std::map<std::string, Tensor>& grads) {
        for (const auto& [name, g] : grads) {
            detail::check_grad_finite(name, g);
            Tensor& theta = params.at(name);
            if (!theta.same_shape(g)) throw Error("sgd: gradient shape mismatch for '" + name + "'");
            for (size_t i = 0; i < g.size(); ++i) theta[i] -= cfg_.learning_rate * g[i];
        }
    }

private:
    SgdConfig cfg_;
};

}  // namespace ecgcl
