#pragma once

#include <vector>

#include "flownovel/tensor.hpp"

namespace flownovel::ad {

struct AdamConfig {
    double learning_rate = 0.01;
    double weight_decay = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Adam with bias-corrected moments. Weight decay is the classic Adam+L2
// form: an additive weight_decay*param term on the gradient.
class Adam {
public:
    explicit Adam(AdamConfig config = {}) : config_(config) {}

    const AdamConfig& config() const { return config_; }
    long step_count() const { return step_count_; }

    // params and grads must be index-aligned and keep their shapes across
    // calls; moment buffers are created on first use.
    void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads);

private:
    AdamConfig config_;
    long step_count_ = 0;
    std::vector<Tensor> m_, v_;
};

} // namespace flownovel::ad
