#include "downscaler/nn/adam.hpp"

#include <cmath>

namespace downscaler::nn {

AdamState::AdamState(const std::vector<const Tensor*>& params) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Tensor* p : params) {
        m_.emplace_back(Tensor(p->shape));
        v_.emplace_back(Tensor(p->shape));
    }
}

void AdamState::update(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
                       const AdamConfig& cfg) {
    if (params.size() != m_.size() || grads.size() != m_.size())
        throw ShapeError("adam: parameter/gradient count does not match state");
    if (!(cfg.lr > 0.0f) || cfg.beta1 < 0.0f || cfg.beta1 >= 1.0f || cfg.beta2 < 0.0f ||
        cfg.beta2 >= 1.0f)
        throw NumericError("adam: invalid hyperparameters (need lr > 0, 0 <= beta < 1)");

    step_ += 1;
    const double bc1 = 1.0 - std::pow(static_cast<double>(cfg.beta1), static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(static_cast<double>(cfg.beta2), static_cast<double>(step_));
    const float inv_bc1 = static_cast<float>(1.0 / bc1);
    const float inv_bc2 = static_cast<float>(1.0 / bc2);

    for (std::size_t t = 0; t < params.size(); ++t) {
        Tensor& p = *params[t];
        const Tensor& g = *grads[t];
        require_shape(g, p.shape, "adam gradient " + std::to_string(t));
        require_shape(m_[t], p.shape, "adam moment " + std::to_string(t));
        float* pv = p.ptr();
        const float* gv = g.ptr();
        float* mv = m_[t].ptr();
        float* vv = v_[t].ptr();
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (!std::isfinite(gv[i]))
                throw NumericError("adam: non-finite gradient in tensor " + std::to_string(t) +
                                   " at element " + std::to_string(i));
            mv[i] = cfg.beta1 * mv[i] + (1.0f - cfg.beta1) * gv[i];
            vv[i] = cfg.beta2 * vv[i] + (1.0f - cfg.beta2) * gv[i] * gv[i];
            const float mhat = mv[i] * inv_bc1;
            const float vhat = vv[i] * inv_bc2;
            pv[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

} // namespace downscaler::nn
