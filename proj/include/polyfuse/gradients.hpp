#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "polyfuse/fusion.hpp"
#include "polyfuse/tensor.hpp"

namespace polyfuse {

/// Gradients of a scalar loss with respect to every stored parameter array
/// and both inputs. names/grads are parallel and ordered exactly like
/// param_views(layer), so they can be zipped against views for updates.
struct ParamGradients {
    std::vector<std::string> names;
    std::vector<DenseTensor> grads;
    DenseTensor dz_a, dz_d;

    /// Lookup by slot name; throws std::invalid_argument if absent.
    const DenseTensor& grad(std::string_view name) const;
};

/// Reverse-mode pass through layer.forward. upstream is dL/dz_tilde, a
/// vector of length joint_dim(). Tied arrays receive the sum of the
/// contributions from every position they occupy.
ParamGradients backward(const FusionLayer& layer, const DenseTensor& z_a,
                        const DenseTensor& z_d, const DenseTensor& upstream);

/// Central-difference gradient of f at x: g[i] = (f(x+h e_i) - f(x-h e_i)) / 2h.
std::vector<double> finite_diff_gradient(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> x, double h);

/// Sum of squared Frobenius norms over the layer's stored parameter arrays;
/// tied arrays contribute once. Multiply by lambda2 for the penalty term.
double frobenius_penalty(const FusionLayer& layer);

}  // namespace polyfuse
