#ifndef MONOATTR_CORE_TRAIN_HPP
#define MONOATTR_CORE_TRAIN_HPP

#include <cmath>
#include <vector>

#include "monoattr/core/error.hpp"
#include "monoattr/core/tensor.hpp"

namespace monoattr {

/** AdamW over a fixed list of leaf parameter tensors. */
class AdamW {
public:
    explicit AdamW(std::vector<Tensor> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
                   double eps = 1e-8, double weight_decay = 0.0)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), wd_(weight_decay) {
        if (lr < 0.0) throw ConfigError("adamw: negative learning rate");
        for (const auto& p : params_) {
            m_.emplace_back(p.size(), 0.0);
            v_.emplace_back(p.size(), 0.0);
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t k = 0; k < params_.size(); ++k) {
            auto& value = params_[k].mutable_values();
            const auto g = params_[k].grad();
            for (std::size_t i = 0; i < value.size(); ++i) {
                m_[k][i] = beta1_ * m_[k][i] + (1.0 - beta1_) * g[i];
                v_[k][i] = beta2_ * v_[k][i] + (1.0 - beta2_) * g[i] * g[i];
                const double mhat = m_[k][i] / bc1;
                const double vhat = v_[k][i] / bc2;
                value[i] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + wd_ * value[i]);
            }
        }
    }

    double lr() const { return lr_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    double lr_, beta1_, beta2_, eps_, wd_;
    long t_ = 0;
};

}  // namespace monoattr

#endif
