#pragma once

#include <cstdint>
#include <vector>

#include "polyfuse/adam.hpp"
#include "polyfuse/fusion.hpp"
#include "polyfuse/tensor.hpp"

namespace polyfuse {

struct Sample {
    DenseTensor z_a, z_d, target;
};

/// Teacher-student regression task: targets are teacher forwards plus
/// optional gaussian noise, fully reproducible from the seed.
struct SyntheticTask {
    FusionLayer teacher;
    std::vector<Sample> samples;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
};

/// Gaussian std used to initialize every trainable parameter (teachers and
/// students alike); echoed in each TrainReport.
inline constexpr double kInitStd = 0.02;

/// Draws teacher parameters N(0, kInitStd^2) first, then per sample z_a,
/// z_d standard normal and, when noise_sigma > 0, the target noise, all
/// from one generator seeded with seed.
SyntheticTask generate_task(const FusionConfig& config, std::size_t num_samples,
                            double noise_sigma, std::uint64_t seed);

/// Mean of squared differences.
double mse_loss(const DenseTensor& pred, const DenseTensor& target);

struct TrainOptions {
    std::size_t epochs = 0;
    /// 0 means full batch; otherwise consecutive fixed-order mini-batches.
    std::size_t batch_size = 0;
    double lr = 1e-4;
    double lambda2 = 0.0;
    AdamConfig adam{};  // lr field is overridden by lr above
    double divergence_threshold = 1e12;
};

struct TrainReport {
    FusionConfig config;
    std::uint64_t task_seed = 0;
    TrainOptions options;
    double init_std = kInitStd;
    /// Entry e is the split MSE after e optimizer epochs; entry 0 is the
    /// starting point. A diverged run stops recording at the bad epoch.
    std::vector<double> train_mse;
    std::vector<double> val_mse;
    double final_penalty = 0.0;
    bool diverged = false;
    double wall_ms = 0.0;

    double final_train_mse() const { return train_mse.back(); }
};

/// Minimizes mean MSE over the training split plus lambda2 times the
/// squared-Frobenius penalty with Adam, mutating student in place. The last
/// floor(n/5) samples form the validation split (none leaves validation
/// mirroring training). Deterministic given (student, task, options); the
/// task itself is never mutated. Divergence (non-finite or loss above the
/// threshold) ends the run early with diverged=true rather than throwing.
TrainReport train(FusionLayer& student, const SyntheticTask& task,
                  const TrainOptions& options);

TrainReport train(FusionLayer& student, const SyntheticTask& task,
                  std::size_t epochs, std::size_t batch_size, double lr,
                  double lambda2);

}  // namespace polyfuse
