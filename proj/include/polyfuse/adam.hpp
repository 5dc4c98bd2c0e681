#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace polyfuse {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adam with bias correction. One state instance drives a fixed collection
/// of parameter arrays; step() consumes one (params, grads) pair per array,
/// in the same order as the sizes passed at construction.
class AdamState {
public:
    AdamState(const std::vector<std::size_t>& sizes, AdamConfig config);

    /// Applies one update in place:
    ///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2,
    ///   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps).
    void step(std::span<std::span<double>> params,
              std::span<const std::span<const double>> grads);

    std::uint64_t step_count() const { return step_; }
    const AdamConfig& config() const { return config_; }

private:
    AdamConfig config_;
    std::uint64_t step_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

}  // namespace polyfuse
