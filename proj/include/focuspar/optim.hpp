#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "focuspar/autodiff.hpp"

namespace focuspar {

/// Linear warmup to the base rate, then cosine decay to zero at `total_steps`.
inline double scheduled_lr(double base, long step, long warmup, long total_steps) {
    if (warmup > 0 && step < warmup) return base * double(step + 1) / double(warmup);
    const long span = std::max(1L, total_steps - warmup);
    const double t = std::clamp(double(step - warmup) / double(span), 0.0, 1.0);
    return base * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

/// Adam with decoupled weight decay, applied uniformly to every trainable
/// parameter. Parameters whose name starts with a frozen prefix are never
/// updated.
template <class T>
class Adam {
public:
    Adam(ParamStore<T>& params, double beta1, double beta2, double weight_decay,
         std::vector<std::string> frozen_prefixes = {})
        : params_(params), beta1_(beta1), beta2_(beta2), wd_(weight_decay), frozen_(std::move(frozen_prefixes)) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_.emplace_back(params[i].value.rows(), params[i].value.cols());
            v_.emplace_back(params[i].value.rows(), params[i].value.cols());
        }
    }

    bool frozen(const std::string& name) const {
        for (const auto& p : frozen_)
            if (name.rfind(p, 0) == 0) return true;
        return false;
    }

    void step(double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, double(t_));
        const double bc2 = 1.0 - std::pow(beta2_, double(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& p = params_[i];
            if (frozen(p.name)) continue;
            auto& m = m_[i];
            auto& v = v_[i];
            for (std::size_t k = 0; k < p.value.size(); ++k) {
                const double g = double(p.grad[k]);
                m[k] = T(beta1_ * double(m[k]) + (1.0 - beta1_) * g);
                v[k] = T(beta2_ * double(v[k]) + (1.0 - beta2_) * g * g);
                const double mhat = double(m[k]) / bc1, vhat = double(v[k]) / bc2;
                double upd = lr * mhat / (std::sqrt(vhat) + 1e-8);
                if (wd_ > 0) upd += lr * wd_ * double(p.value[k]);
                p.value[k] = T(double(p.value[k]) - upd);
            }
        }
    }

    long steps_taken() const noexcept { return t_; }

private:
    ParamStore<T>& params_;
    double beta1_, beta2_, wd_;
    std::vector<std::string> frozen_;
    std::vector<Matrix<T>> m_, v_;
    long t_ = 0;
};

}  // namespace focuspar
