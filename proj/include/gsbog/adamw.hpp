#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace gsbog {

/// Adam with decoupled weight decay over a flat parameter vector.
///
/// The second moment can be tracked per coordinate (classic Adam) or as a
/// single table-wide scalar. Tabular potentials want the global variant:
/// per-coordinate normalization hands rarely-visited cells full-size steps
/// from single-sample gradient pulses, which random-walks them into the
/// exponent clip. Globally normalized steps stay proportional to the actual
/// gradient field.
class AdamW {
public:
    AdamW(std::size_t size, double lr, double weight_decay = 0.0, bool global_second_moment = true,
          double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), wd_(weight_decay), global_(global_second_moment), beta1_(beta1), beta2_(beta2),
          eps_(eps), m_(size, 0.0), v_(global_second_moment ? 1 : size, 0.0) {}

    void step(std::vector<double>& params, const std::vector<double>& grad) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        if (global_) {
            double mean_sq = 0.0;
            for (std::size_t i = 0; i < grad.size(); ++i) mean_sq += grad[i] * grad[i];
            mean_sq /= static_cast<double>(grad.size());
            v_[0] = beta2_ * v_[0] + (1.0 - beta2_) * mean_sq;
            const double denom = std::sqrt(v_[0] / bc2) + eps_;
            for (std::size_t i = 0; i < params.size(); ++i) {
                m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
                params[i] -= lr_ * ((m_[i] / bc1) / denom + wd_ * params[i]);
            }
        } else {
            for (std::size_t i = 0; i < params.size(); ++i) {
                m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
                v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
                const double mhat = m_[i] / bc1;
                const double vhat = v_[i] / bc2;
                params[i] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + wd_ * params[i]);
            }
        }
    }

    double learning_rate() const { return lr_; }
    void set_learning_rate(double lr) { lr_ = lr; }

private:
    double lr_, wd_;
    bool global_;
    double beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<double> m_, v_;
};

}  // namespace gsbog
