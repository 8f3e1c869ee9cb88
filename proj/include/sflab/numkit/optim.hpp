#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>

#include "sflab/numkit/tensor.hpp"

namespace sflab::numkit {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam. Advances the moments, applies the update and zeroes grad.
inline void adam_step(ParamBlock& p, const AdamConfig& cfg) {
    if (!p.grad.all_finite()) throw NumericalError("adam_step: non-finite gradient in " + p.name);
    ++p.step_count;
    const double t = static_cast<double>(p.step_count);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double g = p.grad[i];
        p.adam_m[i] = cfg.beta1 * p.adam_m[i] + (1.0 - cfg.beta1) * g;
        p.adam_v[i] = cfg.beta2 * p.adam_v[i] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = p.adam_m[i] / c1;
        const double v_hat = p.adam_v[i] / c2;
        p.value[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
    p.zero_grad();
}

inline void adam_step(ParamBlock& p, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    adam_step(p, AdamConfig{lr, beta1, beta2, eps});
}

// Loss callback for the gradient checker: with_grad=true must also accumulate
// the analytic gradient into the blocks' grad fields.
using CheckedLoss = std::function<double(bool with_grad)>;

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t coordinates = 0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

// Central differences against the analytic gradient. Relative error per
// coordinate is |a - n| / max(|a|, |n|, 1e-8).
inline GradCheckResult finite_diff_check_detail(const CheckedLoss& loss, std::span<ParamBlock* const> params,
                                                double h = 1e-6) {
    for (ParamBlock* p : params) p->zero_grad();
    loss(true);
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (ParamBlock* p : params) analytic.push_back(p->grad);

    GradCheckResult res;
    for (std::size_t k = 0; k < params.size(); ++k) {
        ParamBlock& p = *params[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double orig = p.value[i];
            p.value[i] = orig + h;
            const double fp = loss(false);
            p.value[i] = orig - h;
            const double fm = loss(false);
            p.value[i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[k][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            const double err = std::abs(a - numeric) / denom;
            ++res.coordinates;
            if (err > res.max_relative_error) {
                res.max_relative_error = err;
                res.worst_param = p.name;
                res.worst_index = i;
                res.worst_analytic = a;
                res.worst_numeric = numeric;
            }
        }
    }
    for (ParamBlock* p : params) p->zero_grad();
    return res;
}

inline double finite_diff_check(const CheckedLoss& loss, std::span<ParamBlock* const> params, double h = 1e-6) {
    return finite_diff_check_detail(loss, params, h).max_relative_error;
}

} // namespace sflab::numkit
