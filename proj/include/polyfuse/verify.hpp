#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "polyfuse/fusion.hpp"
#include "polyfuse/tensor.hpp"

namespace polyfuse {

/// Assembles the m x (a+1) x (d+1) joint parameter tensor equivalent to the
/// layer's parameterization. Works for every variant except Concat, which
/// has no joint tensor. This materializes the full dense tensor; callers
/// enforce any memory cap beforehand.
DenseTensor materialize_joint(const FusionLayer& layer);

/// One randomized equivalence trial: draws a layer (std 1) and standard
/// normal inputs from rng, evaluates the variant's own forward against the
/// materialized joint tensor, and returns
/// max_i |y_fact - y_dense| / max(max_i |y_dense|, DBL_MIN).
double equiv_trial(const FusionConfig& config, std::mt19937_64& rng);

/// Worst elementwise relative error of one gradient slot in one trial.
/// Slots cover every parameter array plus the inputs "z_a" and "z_d".
struct SlotError {
    std::string slot;
    double error = 0.0;
};

/// One randomized gradient-check trial: draws a layer, inputs, and an
/// upstream direction u from rng, then compares backward() against central
/// finite differences of theta -> u . forward(theta) with step h. Errors are
/// |g_fd - g_an| / max(1, |g_fd|, |g_an|), worst entry per slot.
std::vector<SlotError> gradcheck_trial(const FusionConfig& config,
                                       std::mt19937_64& rng, double h);

}  // namespace polyfuse
