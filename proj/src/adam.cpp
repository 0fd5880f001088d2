#include "flownovel/adam.hpp"

#include <cmath>

namespace flownovel::ad {

void Adam::step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
    if (params.size() != grads.size())
        throw contract_error("adam: params and grads must be index-aligned");
    if (m_.empty()) {
        m_.reserve(params.size());
        v_.reserve(params.size());
        for (const Tensor* p : params) {
            m_.push_back(Tensor::zeros(p->shape()));
            v_.push_back(Tensor::zeros(p->shape()));
        }
    }
    if (m_.size() != params.size())
        throw contract_error("adam: parameter count changed between steps");

    ++step_count_;
    double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
    double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));

    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        const Tensor& g = grads[k];
        if (!p.same_shape(g) || !p.same_shape(m_[k]))
            throw contract_error("adam: shape mismatch between param, grad and moments");
        for (std::size_t i = 0; i < p.numel(); ++i) {
            double grad = g[i] + config_.weight_decay * p[i];
            m_[k][i] = config_.beta1 * m_[k][i] + (1.0 - config_.beta1) * grad;
            v_[k][i] = config_.beta2 * v_[k][i] + (1.0 - config_.beta2) * grad * grad;
            double m_hat = m_[k][i] / bc1;
            double v_hat = v_[k][i] / bc2;
            p[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
        }
    }
}

} // namespace flownovel::ad
