#include "polyfuse/verify.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <stdexcept>

#include "polyfuse/gradients.hpp"

namespace polyfuse {

namespace {

DenseTensor random_vector(std::size_t len, std::mt19937_64& rng) {
    std::normal_distribution<double> unit(0.0, 1.0);
    DenseTensor out(Shape({len}));
    for (double& x : out.data()) x = unit(rng);
    return out;
}

DenseTensor assemble_from_dense(const DenseParams& p) {
    const std::size_t m = p.bias.dim(1), a = p.w_a.dim(2), d = p.w_d.dim(2);
    DenseTensor w(Shape({m, a + 1, d + 1}));
    for (std::size_t i = 0; i < m; ++i) {
        w(i, a, d) = p.bias(i);
        for (std::size_t q = 0; q < a; ++q) w(i, q, d) = p.w_a(i, q);
        for (std::size_t r = 0; r < d; ++r) w(i, a, r) = p.w_d(i, r);
        for (std::size_t r = 0; r < d; ++r) {
            for (std::size_t q = 0; q < a; ++q) w(i, q, r) = p.w_ad(i, q, r);
        }
    }
    return w;
}

}  // namespace

DenseTensor materialize_joint(const FusionLayer& layer) {
    const FusionConfig& c = layer.config();
    return std::visit(
        [&](const auto& p) -> DenseTensor {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, std::monostate>) {
                throw std::invalid_argument("Concat has no joint parameter tensor");
            } else if constexpr (std::is_same_v<T, DenseParams>) {
                return assemble_from_dense(p);
            } else if constexpr (std::is_same_v<T, JointParams>) {
                return p.w;
            } else if constexpr (std::is_same_v<T, CpFactors>) {
                return cp_reconstruct(p);
            } else if constexpr (std::is_same_v<T, TuckerFactors>) {
                return tucker_reconstruct(p);
            } else {
                return cmf_assemble_dense(p, c.joint_dim(), c.a, c.d);
            }
        },
        layer.params());
}

double equiv_trial(const FusionConfig& config, std::mt19937_64& rng) {
    FusionLayer layer = FusionLayer::random(config, rng, 1.0);
    const DenseTensor z_a = random_vector(config.a, rng);
    const DenseTensor z_d = random_vector(config.d, rng);
    const DenseTensor y_fact = layer.forward(z_a, z_d);
    const DenseTensor w = materialize_joint(layer);
    const DenseTensor y_dense = forward_joint_dense(w, z_a, z_d);
    double max_diff = 0.0;
    double max_ref = 0.0;
    for (std::size_t i = 0; i < y_dense.size(); ++i) {
        max_diff = std::max(max_diff, std::abs(y_fact.data()[i] - y_dense.data()[i]));
        max_ref = std::max(max_ref, std::abs(y_dense.data()[i]));
    }
    return max_diff / std::max(max_ref, DBL_MIN);
}

std::vector<SlotError> gradcheck_trial(const FusionConfig& config,
                                       std::mt19937_64& rng, double h) {
    FusionLayer layer = FusionLayer::random(config, rng, 1.0);
    const DenseTensor z_a = random_vector(config.a, rng);
    const DenseTensor z_d = random_vector(config.d, rng);
    const DenseTensor u = random_vector(config.joint_dim(), rng);

    const auto dot_u = [&](const DenseTensor& y) {
        double acc = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) acc += u.data()[i] * y.data()[i];
        return acc;
    };
    const auto rel = [](double fd, double an) {
        return std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
    };
    const auto worst = [&](std::span<const double> fd, std::span<const double> an) {
        double w = 0.0;
        for (std::size_t i = 0; i < fd.size(); ++i) w = std::max(w, rel(fd[i], an[i]));
        return w;
    };

    const ParamGradients g = backward(layer, z_a, z_d, u);
    std::vector<SlotError> out;

    FusionLayer probe = layer;
    auto probe_views = param_views(probe);
    for (std::size_t s = 0; s < probe_views.size(); ++s) {
        DenseTensor& slot = *probe_views[s].tensor;
        const std::vector<double> at(slot.data().begin(), slot.data().end());
        const auto loss = [&](std::span<const double> x) {
            std::copy(x.begin(), x.end(), slot.data().begin());
            return dot_u(probe.forward(z_a, z_d));
        };
        const std::vector<double> fd = finite_diff_gradient(loss, at, h);
        std::copy(at.begin(), at.end(), slot.data().begin());
        out.push_back({probe_views[s].name, worst(fd, g.grads[s].data())});
    }

    const auto input_loss = [&](const DenseTensor& za, const DenseTensor& zd) {
        return dot_u(layer.forward(za, zd));
    };
    {
        const auto loss = [&](std::span<const double> x) {
            return input_loss(DenseTensor::from_flat(Shape({x.size()}),
                                                     std::vector<double>(x.begin(), x.end())),
                              z_d);
        };
        const std::vector<double> fd = finite_diff_gradient(loss, z_a.data(), h);
        out.push_back({"z_a", worst(fd, g.dz_a.data())});
    }
    {
        const auto loss = [&](std::span<const double> x) {
            return input_loss(z_a, DenseTensor::from_flat(
                                       Shape({x.size()}),
                                       std::vector<double>(x.begin(), x.end())));
        };
        const std::vector<double> fd = finite_diff_gradient(loss, z_d.data(), h);
        out.push_back({"z_d", worst(fd, g.dz_d.data())});
    }
    return out;
}

}  // namespace polyfuse
