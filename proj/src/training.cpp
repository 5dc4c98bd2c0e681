#include "polyfuse/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <span>
#include <stdexcept>

#include "polyfuse/gradients.hpp"

namespace polyfuse {

namespace {

void require(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

DenseTensor draw_vector(std::size_t len, std::mt19937_64& rng,
                        std::normal_distribution<double>& dist) {
    DenseTensor out(Shape({len}));
    for (double& x : out.data()) x = dist(rng);
    return out;
}

double split_mse(const FusionLayer& layer, std::span<const Sample> samples) {
    double total = 0.0;
    for (const Sample& s : samples) {
        total += mse_loss(layer.forward(s.z_a, s.z_d), s.target);
    }
    return total / static_cast<double>(samples.size());
}

}  // namespace

SyntheticTask generate_task(const FusionConfig& config, std::size_t num_samples,
                            double noise_sigma, std::uint64_t seed) {
    config.validate();
    require(num_samples >= 1, "a task needs at least one sample");
    require(noise_sigma >= 0.0, "noise_sigma must be non-negative");
    std::mt19937_64 rng(seed);
    FusionLayer teacher = FusionLayer::random(config, rng, kInitStd);
    std::normal_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, noise_sigma);
    std::vector<Sample> samples;
    samples.reserve(num_samples);
    for (std::size_t i = 0; i < num_samples; ++i) {
        DenseTensor z_a = draw_vector(config.a, rng, unit);
        DenseTensor z_d = draw_vector(config.d, rng, unit);
        DenseTensor target = teacher.forward(z_a, z_d);
        if (noise_sigma > 0.0) {
            for (double& x : target.data()) x += noise(rng);
        }
        samples.push_back({std::move(z_a), std::move(z_d), std::move(target)});
    }
    return SyntheticTask{std::move(teacher), std::move(samples), noise_sigma, seed};
}

double mse_loss(const DenseTensor& pred, const DenseTensor& target) {
    require(pred.order() == 1 && target.order() == 1 &&
                pred.dim(1) == target.dim(1),
            "mse_loss takes two vectors of equal length");
    const std::span<const double> p = pred.data();
    const std::span<const double> t = target.data();
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double diff = p[i] - t[i];
        total += diff * diff;
    }
    return total / static_cast<double>(p.size());
}

TrainReport train(FusionLayer& student, const SyntheticTask& task,
                  const TrainOptions& options) {
    const auto start = std::chrono::steady_clock::now();
    const FusionConfig& sc = student.config();
    const FusionConfig& tc = task.teacher.config();
    require(!task.samples.empty(), "task has no samples");
    require(sc.a == tc.a && sc.d == tc.d && sc.joint_dim() == tc.joint_dim(),
            "student dims do not match the task");
    require(options.lr >= 0.0, "learning rate must be non-negative");
    require(options.lambda2 >= 0.0, "lambda2 must be non-negative");
    require(options.divergence_threshold > 0.0, "divergence threshold must be positive");

    const std::size_t n = task.samples.size();
    const std::size_t n_val = n / 5;
    const std::span<const Sample> all(task.samples);
    const std::span<const Sample> train_split = all.first(n - n_val);
    const std::span<const Sample> val_split =
        n_val > 0 ? all.last(n_val) : train_split;
    const std::size_t batch =
        options.batch_size == 0 ? train_split.size()
                                : std::min(options.batch_size, train_split.size());

    auto views = param_views(student);
    std::vector<std::size_t> sizes;
    for (const auto& v : views) sizes.push_back(v.tensor->size());
    AdamConfig acfg = options.adam;
    acfg.lr = options.lr;
    AdamState adam(sizes, acfg);

    TrainReport rep;
    rep.config = sc;
    rep.task_seed = task.seed;
    rep.options = options;

    const double inv_m = 1.0 / static_cast<double>(sc.joint_dim());
    std::vector<std::vector<double>> acc(views.size());
    for (std::size_t i = 0; i < views.size(); ++i) acc[i].resize(sizes[i]);

    const auto record = [&]() -> bool {
        const double tm = split_mse(student, train_split);
        const double vm = n_val > 0 ? split_mse(student, val_split) : tm;
        if (!std::isfinite(tm) || !std::isfinite(vm)) {
            rep.diverged = true;
            return false;
        }
        rep.train_mse.push_back(tm);
        rep.val_mse.push_back(vm);
        if (tm > options.divergence_threshold || vm > options.divergence_threshold) {
            rep.diverged = true;
            return false;
        }
        return true;
    };

    if (record()) {
        for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
            for (std::size_t begin = 0; begin < train_split.size(); begin += batch) {
                const std::span<const Sample> chunk =
                    train_split.subspan(begin, std::min(batch, train_split.size() - begin));
                for (auto& buf : acc) std::fill(buf.begin(), buf.end(), 0.0);
                const double inv_b = 1.0 / static_cast<double>(chunk.size());
                for (const Sample& s : chunk) {
                    DenseTensor pred = student.forward(s.z_a, s.z_d);
                    DenseTensor upstream(Shape({sc.joint_dim()}));
                    for (std::size_t i = 0; i < upstream.size(); ++i) {
                        upstream.data()[i] =
                            2.0 * inv_m * (pred.data()[i] - s.target.data()[i]);
                    }
                    const ParamGradients g = backward(student, s.z_a, s.z_d, upstream);
                    for (std::size_t i = 0; i < acc.size(); ++i) {
                        const std::span<const double> gd = g.grads[i].data();
                        for (std::size_t j = 0; j < gd.size(); ++j) {
                            acc[i][j] += inv_b * gd[j];
                        }
                    }
                }
                if (options.lambda2 > 0.0) {
                    for (std::size_t i = 0; i < acc.size(); ++i) {
                        const std::span<const double> pd = views[i].tensor->data();
                        for (std::size_t j = 0; j < pd.size(); ++j) {
                            acc[i][j] += 2.0 * options.lambda2 * pd[j];
                        }
                    }
                }
                std::vector<std::span<double>> params;
                std::vector<std::span<const double>> grads;
                for (std::size_t i = 0; i < views.size(); ++i) {
                    params.push_back(views[i].tensor->data());
                    grads.push_back(std::span<const double>(acc[i]));
                }
                adam.step(params, grads);
            }
            if (!record()) break;
        }
    }

    const double pen = frobenius_penalty(student);
    rep.final_penalty = std::isfinite(pen) ? pen : 0.0;
    rep.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - start)
                      .count();
    return rep;
}

TrainReport train(FusionLayer& student, const SyntheticTask& task,
                  std::size_t epochs, std::size_t batch_size, double lr,
                  double lambda2) {
    TrainOptions options;
    options.epochs = epochs;
    options.batch_size = batch_size;
    options.lr = lr;
    options.lambda2 = lambda2;
    return train(student, task, options);
}

}  // namespace polyfuse
