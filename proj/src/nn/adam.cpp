#include "xbias/nn/adam.hpp"

#include <cmath>

namespace xbias::nn {

Adam::Adam(const Network& net, std::size_t first_layer, double learning_rate, double weight_decay, double beta1,
           double beta2, double epsilon)
    : first_(first_layer), lr_(learning_rate), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(epsilon),
      m_(net.make_grads()), v_(net.make_grads()) {}

void Adam::step(Network& net, const ParamGrads& grads, double grad_scale) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t l = first_; l < net.size(); ++l) {
        auto p = net.layer(l).params();
        const auto& g = grads[l];
        auto& m = m_[l];
        auto& v = v_[l];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = g[i] * grad_scale + wd_ * p[i];
            m[i] = b1_ * m[i] + (1.0 - b1_) * gi;
            v[i] = b2_ * v[i] + (1.0 - b2_) * gi * gi;
            p[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
        }
    }
}

} // namespace xbias::nn
