#pragma once

#include "xbias/nn/network.hpp"

namespace xbias::nn {

/// Adam over layers [first_layer, net.size()); earlier layers are left
/// untouched, which is what keeps the feature extractor frozen.
class Adam {
public:
    Adam(const Network& net, std::size_t first_layer, double learning_rate, double weight_decay = 0.0,
         double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

    /// Applies one update using gradients scaled by `grad_scale`.
    void step(Network& net, const ParamGrads& grads, double grad_scale = 1.0);

private:
    std::size_t first_;
    double lr_, wd_, b1_, b2_, eps_;
    long t_ = 0;
    ParamGrads m_, v_;
};

} // namespace xbias::nn
