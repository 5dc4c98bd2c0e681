#include "polyfuse/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace polyfuse {

namespace {

void require(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

AdamState::AdamState(const std::vector<std::size_t>& sizes, AdamConfig config)
    : config_(config) {
    require(config.lr >= 0.0, "learning rate must be non-negative");
    require(config.beta1 >= 0.0 && config.beta1 < 1.0, "beta1 must lie in [0,1)");
    require(config.beta2 >= 0.0 && config.beta2 < 1.0, "beta2 must lie in [0,1)");
    require(config.epsilon > 0.0, "epsilon must be positive");
    m_.reserve(sizes.size());
    v_.reserve(sizes.size());
    for (std::size_t n : sizes) {
        m_.emplace_back(n, 0.0);
        v_.emplace_back(n, 0.0);
    }
}

void AdamState::step(std::span<std::span<double>> params,
                     std::span<const std::span<const double>> grads) {
    require(params.size() == m_.size() && grads.size() == m_.size(),
            "step expects one span per parameter array");
    ++step_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    for (std::size_t s = 0; s < m_.size(); ++s) {
        require(params[s].size() == m_[s].size() && grads[s].size() == m_[s].size(),
                "parameter array size changed between steps");
        double* p = params[s].data();
        const double* g = grads[s].data();
        double* m = m_[s].data();
        double* v = v_[s].data();
        for (std::size_t i = 0; i < m_[s].size(); ++i) {
            m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
            v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            p[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.epsilon);
        }
    }
}

}  // namespace polyfuse
