#include <algorithm>
#include <atomic>
#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "polyfuse/alloc_tracker.hpp"
#include "polyfuse/fusion.hpp"
#include "polyfuse/rng.hpp"
#include "polyfuse/serialize.hpp"
#include "polyfuse/training.hpp"
#include "polyfuse/verify.hpp"
#include "polyfuse/version.hpp"

namespace {

using nlohmann::json;
using namespace polyfuse;

constexpr int kOk = 0;
constexpr int kPropertyFailure = 1;
constexpr int kValidationError = 2;
constexpr std::size_t kDefaultDenseCap = std::size_t{1} << 26;

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in.good()) throw std::invalid_argument("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(path + ": " + e.what());
    }
    return j;
}

std::vector<FusionConfig> load_configs(const std::string& path) {
    const json j = load_json_file(path);
    std::vector<FusionConfig> configs;
    if (j.is_array()) {
        for (const json& item : j) configs.push_back(config_from_json(item));
    } else {
        configs.push_back(config_from_json(j));
    }
    return configs;
}

void emit_report(const json& doc, const std::string& out_path) {
    if (out_path.empty()) return;
    std::ofstream out(out_path);
    if (!out.good()) throw std::invalid_argument("cannot open " + out_path);
    out << doc.dump(2) << "\n";
    if (!out.good()) throw std::invalid_argument("failed writing " + out_path);
}

std::string describe(const FusionConfig& c) {
    char buf[160];
    std::string dims = "m=" + std::to_string(c.joint_dim()) +
                       " a=" + std::to_string(c.a) + " d=" + std::to_string(c.d) +
                       " n=" + std::to_string(c.n);
    if (c.needs_rank()) dims += " k=" + std::to_string(c.rank);
    if (c.variant == Variant::tucker) {
        dims += " ranks=(" + std::to_string(c.ranks[0]) + "," +
                std::to_string(c.ranks[1]) + "," + std::to_string(c.ranks[2]) + ")";
    }
    std::snprintf(buf, sizeof(buf), "%-10s %s",
                  std::string(variant_name(c.variant)).c_str(), dims.c_str());
    return buf;
}

/// Runs fn(t) for t in [0, trials), on `parallel` threads when parallel > 1.
/// fn must only write to trial-indexed slots; the first exception wins.
template <typename Fn>
void run_trials(std::size_t trials, std::size_t parallel, Fn&& fn) {
    if (parallel <= 1 || trials <= 1) {
        for (std::size_t t = 0; t < trials; ++t) fn(t);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    const std::size_t workers = std::min(parallel, trials);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            while (true) {
                const std::size_t t = next.fetch_add(1);
                if (t >= trials) return;
                try {
                    fn(t);
                } catch (...) {
                    const std::lock_guard<std::mutex> lock(err_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (std::thread& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

void check_dense_cap(const FusionConfig& c, std::size_t cap) {
    const std::size_t entries = c.dense_entries();
    if (entries > cap) {
        throw std::invalid_argument(
            "refusing to materialize the dense joint tensor for " + describe(c) +
            ": " + std::to_string(entries) + " entries exceed the cap of " +
            std::to_string(cap) + " (raise --dense-cap to override)");
    }
}

int run_params(const std::string& config_path, const std::string& out_path) {
    const std::vector<FusionConfig> configs = load_configs(config_path);
    json results = json::array();
    if (configs.empty()) {
        std::printf("no configs\n");
    } else {
        std::printf("%-10s %6s %6s %6s %4s %14s %14s %10s\n", "variant", "m", "a",
                    "d", "n", "rank", "params", "ratio");
    }
    for (const FusionConfig& c : configs) {
        FusionConfig dense = c;
        dense.variant = Variant::dense;
        dense.m = c.joint_dim();
        dense.rank = 0;
        dense.ranks = {0, 0, 0};
        const std::uint64_t count = param_count(c);
        const std::uint64_t dense_count = param_count(dense);
        json row;
        row["config"] = config_to_json(c);
        row["params"] = count;
        row["dense_params"] = dense_count;
        std::string rank_text = "-";
        if (c.needs_rank()) rank_text = std::to_string(c.rank);
        if (c.variant == Variant::tucker) {
            rank_text = "(" + std::to_string(c.ranks[0]) + "," +
                        std::to_string(c.ranks[1]) + "," + std::to_string(c.ranks[2]) +
                        ")";
        }
        if (count > 0) {
            const double ratio =
                static_cast<double>(dense_count) / static_cast<double>(count);
            row["ratio"] = ratio;
            std::printf("%-10s %6zu %6zu %6zu %4zu %14s %14" PRIu64 " %10.2f\n",
                        std::string(variant_name(c.variant)).c_str(), c.joint_dim(),
                        c.a, c.d, c.n, rank_text.c_str(), count, ratio);
        } else {
            row["ratio"] = nullptr;
            std::printf("%-10s %6zu %6zu %6zu %4zu %14s %14" PRIu64 " %10s\n",
                        std::string(variant_name(c.variant)).c_str(), c.joint_dim(),
                        c.a, c.d, c.n, rank_text.c_str(), count, "-");
        }
        results.push_back(std::move(row));
    }
    json doc;
    doc["command"] = "params";
    doc["version"] = kVersion;
    doc["results"] = std::move(results);
    emit_report(doc, out_path);
    return kOk;
}

int run_equiv(const std::string& config_path, std::uint64_t seed, std::size_t trials,
              double tol, std::size_t parallel, std::size_t cap,
              const std::string& out_path) {
    if (tol < 0.0) throw std::invalid_argument("--tol must be non-negative");
    const std::vector<FusionConfig> configs = load_configs(config_path);
    for (const FusionConfig& c : configs) {
        if (c.variant == Variant::concat) {
            throw std::invalid_argument(
                "Concat has no joint tensor; equivalence does not apply");
        }
        check_dense_cap(c, cap);
    }
    json results = json::array();
    bool all_pass = true;
    for (std::size_t ci = 0; ci < configs.size(); ++ci) {
        const FusionConfig& c = configs[ci];
        std::vector<double> errors(trials, 0.0);
        run_trials(trials, parallel, [&](std::size_t t) {
            std::mt19937_64 rng = derive_stream(seed, ci * trials + t);
            errors[t] = equiv_trial(c, rng);
        });
        double worst = 0.0;
        for (double e : errors) worst = std::max(worst, e);
        const bool pass = worst <= tol;
        all_pass = all_pass && pass;
        std::printf("equiv %s  trials=%zu  max_rel_err=%.3e  %s\n",
                    describe(c).c_str(), trials, worst, pass ? "PASS" : "FAIL");
        json row;
        row["config"] = config_to_json(c);
        row["max_rel_error"] = worst;
        row["pass"] = pass;
        results.push_back(std::move(row));
    }
    json doc;
    doc["command"] = "equiv";
    doc["version"] = kVersion;
    doc["seed"] = seed;
    doc["trials"] = trials;
    doc["tol"] = tol;
    doc["parallel"] = parallel;
    doc["dense_cap"] = cap;
    doc["results"] = std::move(results);
    doc["pass"] = all_pass;
    emit_report(doc, out_path);
    return all_pass ? kOk : kPropertyFailure;
}

int run_checkgrad(const std::string& config_path, std::uint64_t seed,
                  std::size_t seeds, double h, double tol, std::size_t parallel,
                  std::size_t cap, const std::string& out_path) {
    if (tol < 0.0) throw std::invalid_argument("--tol must be non-negative");
    const std::vector<FusionConfig> configs = load_configs(config_path);
    for (const FusionConfig& c : configs) {
        if (c.variant == Variant::dense) check_dense_cap(c, cap);
    }
    json results = json::array();
    bool all_pass = true;
    for (std::size_t ci = 0; ci < configs.size(); ++ci) {
        const FusionConfig& c = configs[ci];
        std::vector<std::vector<SlotError>> per_trial(seeds);
        run_trials(seeds, parallel, [&](std::size_t t) {
            std::mt19937_64 rng = derive_stream(seed, ci * seeds + t);
            per_trial[t] = gradcheck_trial(c, rng, h);
        });
        std::vector<SlotError> worst;
        for (const auto& trial : per_trial) {
            if (worst.empty()) worst = trial;
            for (std::size_t s = 0; s < trial.size(); ++s) {
                worst[s].error = std::max(worst[s].error, trial[s].error);
            }
        }
        json slots = json::array();
        bool config_pass = true;
        double config_worst = 0.0;
        for (const SlotError& s : worst) {
            const bool pass = s.error <= tol;
            config_pass = config_pass && pass;
            config_worst = std::max(config_worst, s.error);
            slots.push_back({{"slot", s.slot}, {"worst_error", s.error}, {"pass", pass}});
        }
        all_pass = all_pass && config_pass;
        std::printf("checkgrad %s  seeds=%zu  worst_rel_err=%.3e  %s\n",
                    describe(c).c_str(), seeds, config_worst,
                    config_pass ? "PASS" : "FAIL");
        json row;
        row["config"] = config_to_json(c);
        row["slots"] = std::move(slots);
        row["worst_error"] = config_worst;
        row["pass"] = config_pass;
        results.push_back(std::move(row));
    }
    json doc;
    doc["command"] = "checkgrad";
    doc["version"] = kVersion;
    doc["seed"] = seed;
    doc["seeds"] = seeds;
    doc["h"] = h;
    doc["tol"] = tol;
    doc["parallel"] = parallel;
    doc["dense_cap"] = cap;
    doc["results"] = std::move(results);
    doc["pass"] = all_pass;
    emit_report(doc, out_path);
    return all_pass ? kOk : kPropertyFailure;
}

int run_bench(const std::string& config_path, std::uint64_t seed,
              std::size_t iterations, const std::string& out_path) {
    const std::vector<FusionConfig> configs = load_configs(config_path);
    json results = json::array();
    for (std::size_t ci = 0; ci < configs.size(); ++ci) {
        const FusionConfig& c = configs[ci];
        std::mt19937_64 rng = derive_stream(seed, ci);
        const FusionLayer layer = FusionLayer::random(c, rng, kInitStd);
        std::normal_distribution<double> unit(0.0, 1.0);
        DenseTensor z_a(Shape({c.a}));
        DenseTensor z_d(Shape({c.d}));
        for (double& x : z_a.data()) x = unit(rng);
        for (double& x : z_d.data()) x = unit(rng);

        json row;
        row["config"] = config_to_json(c);
        row["params"] = param_count(c);
        if (iterations == 0) {
            std::printf("bench %s  iterations=0 (skipped)\n", describe(c).c_str());
            results.push_back(std::move(row));
            continue;
        }

        const std::size_t warmup = std::min<std::size_t>(10, iterations);
        double checksum = 0.0;
        for (std::size_t i = 0; i < warmup; ++i) {
            const DenseTensor y = layer.forward(z_a, z_d);
            checksum += y.data()[0];
        }
        std::vector<double> ns(iterations, 0.0);
        alloctrack::reset();
        for (std::size_t i = 0; i < iterations; ++i) {
            const auto t0 = std::chrono::steady_clock::now();
            const DenseTensor y = layer.forward(z_a, z_d);
            const auto t1 = std::chrono::steady_clock::now();
            for (const double v : y.data()) checksum += v;
            ns[i] = std::chrono::duration<double, std::nano>(t1 - t0).count();
        }
        const std::size_t max_alloc = alloctrack::max_single_allocation_bytes();
        const std::uint64_t allocs = alloctrack::allocation_count();
        std::sort(ns.begin(), ns.end());
        const double median = ns[(ns.size() - 1) / 2];
        const double p95 =
            ns[static_cast<std::size_t>(0.95 * static_cast<double>(ns.size() - 1))];
        std::printf(
            "bench %s  iterations=%zu  median=%.0f ns  p95=%.0f ns  "
            "max_alloc=%zu B\n",
            describe(c).c_str(), iterations, median, p95, max_alloc);
        row["iterations"] = iterations;
        row["median_ns"] = median;
        row["p95_ns"] = p95;
        row["max_single_alloc_bytes"] = max_alloc;
        row["allocations"] = allocs;
        row["checksum"] = checksum;
        results.push_back(std::move(row));
    }
    json doc;
    doc["command"] = "bench";
    doc["version"] = kVersion;
    doc["seed"] = seed;
    doc["iterations"] = iterations;
    doc["results"] = std::move(results);
    emit_report(doc, out_path);
    return kOk;
}

struct ToySpec {
    FusionConfig config;
    std::uint64_t seed = 0;
    std::size_t samples = 1000;
    double noise_sigma = 0.0;
    std::size_t epochs = 2000;
    std::size_t batch_size = 0;
    double lr = 1e-4;
    double lambda2 = 0.0;
    double mse_threshold = 1e-3;
};

ToySpec parse_toy_spec(const json& j) {
    if (!j.is_object()) throw std::invalid_argument("runspec must be a JSON object");
    const std::set<std::string> allowed = {"config",     "seed",       "samples",
                                           "noise_sigma", "epochs",     "batch_size",
                                           "lr",          "lambda2",    "mse_threshold"};
    for (const auto& item : j.items()) {
        if (!allowed.contains(item.key())) {
            throw std::invalid_argument("unknown runspec key: " + item.key());
        }
    }
    if (!j.contains("config")) throw std::invalid_argument("runspec requires a config");
    ToySpec spec;
    spec.config = config_from_json(j.at("config"));
    spec.seed = j.value("seed", spec.seed);
    spec.samples = j.value("samples", spec.samples);
    spec.noise_sigma = j.value("noise_sigma", spec.noise_sigma);
    spec.epochs = j.value("epochs", spec.epochs);
    spec.batch_size = j.value("batch_size", spec.batch_size);
    spec.lr = j.value("lr", spec.lr);
    spec.lambda2 = j.value("lambda2", spec.lambda2);
    spec.mse_threshold = j.value("mse_threshold", spec.mse_threshold);
    if (spec.samples < 1) throw std::invalid_argument("samples must be at least 1");
    if (spec.mse_threshold < 0.0) {
        throw std::invalid_argument("mse_threshold must be non-negative");
    }
    return spec;
}

int run_traintoy(const std::string& config_path, bool seed_given,
                 std::uint64_t seed_override, const std::string& out_path,
                 const std::string& save_task_prefix,
                 const std::string& load_task_prefix,
                 const std::string& save_student_prefix) {
    ToySpec spec = parse_toy_spec(load_json_file(config_path));
    if (seed_given) spec.seed = seed_override;

    SyntheticTask task =
        load_task_prefix.empty()
            ? generate_task(spec.config, spec.samples, spec.noise_sigma, spec.seed)
            : load_task(load_task_prefix);
    if (!load_task_prefix.empty()) {
        spec.samples = task.samples.size();
        spec.noise_sigma = task.noise_sigma;
        spec.seed = task.seed;
    }
    if (!save_task_prefix.empty()) save_task(task, save_task_prefix);

    std::mt19937_64 student_rng(spec.seed + 1);
    FusionLayer student = FusionLayer::random(spec.config, student_rng, kInitStd);

    TrainOptions options;
    options.epochs = spec.epochs;
    options.batch_size = spec.batch_size;
    options.lr = spec.lr;
    options.lambda2 = spec.lambda2;
    const TrainReport report = train(student, task, options);
    if (!save_student_prefix.empty()) save_layer(student, save_student_prefix);

    const bool converged = !report.diverged &&
                           report.final_train_mse() <= spec.mse_threshold;
    json doc = report_to_json(report);
    doc["command"] = "traintoy";
    doc["samples"] = spec.samples;
    doc["noise_sigma"] = spec.noise_sigma;
    doc["mse_threshold"] = spec.mse_threshold;
    doc["student_seed"] = spec.seed + 1;
    doc["converged"] = converged;
    emit_report(doc, out_path);

    std::printf("traintoy %s  samples=%zu sigma=%g lr=%g lambda2=%g\n",
                describe(spec.config).c_str(), spec.samples, spec.noise_sigma,
                spec.lr, spec.lambda2);
    std::printf("  epochs_run=%zu  train_mse=%.6e  val_mse=%.6e  penalty=%.6e\n",
                report.train_mse.size() - 1, report.final_train_mse(),
                report.val_mse.back(), report.final_penalty);
    if (report.diverged) {
        std::printf("  DIVERGED\n");
        return kPropertyFailure;
    }
    std::printf("  converged=%s (threshold %.3e)\n", converged ? "true" : "false",
                spec.mse_threshold);
    return converged ? kOk : kPropertyFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"polynomial fusion layer toolkit"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    std::string config_path, out_path;
    std::uint64_t seed = 0;
    std::size_t parallel = 1;
    std::size_t dense_cap = kDefaultDenseCap;

    CLI::App* params = app.add_subcommand("params", "parameter counts per variant");
    params->add_option("--config", config_path, "config JSON (object or array)")
        ->required();
    params->add_option("--out", out_path, "write the JSON report here");

    CLI::App* equiv =
        app.add_subcommand("equiv", "factorized vs dense forward equivalence");
    std::size_t equiv_trials = 1000;
    double equiv_tol = 1e-10;
    equiv->add_option("--config", config_path, "config JSON (object or array)")
        ->required();
    equiv->add_option("--seed", seed, "master seed");
    equiv->add_option("--trials", equiv_trials, "random trials per config");
    equiv->add_option("--tol", equiv_tol, "max relative error accepted");
    equiv->add_option("--parallel", parallel, "worker threads for trials");
    equiv->add_option("--dense-cap", dense_cap,
                      "max joint-tensor entries to materialize");
    equiv->add_option("--out", out_path, "write the JSON report here");

    CLI::App* checkgrad =
        app.add_subcommand("checkgrad", "analytic vs finite-difference gradients");
    checkgrad->set_help_flag("--help", "print help");  // frees -h for --h
    std::size_t grad_seeds = 100;
    double grad_tol = 1e-6;
    double grad_h = 1e-5;
    checkgrad->add_option("--config", config_path, "config JSON (object or array)")
        ->required();
    checkgrad->add_option("--seed", seed, "master seed");
    checkgrad->add_option("--trials", grad_seeds, "seeded trials per config");
    checkgrad->add_option("--tol", grad_tol, "max relative error accepted");
    checkgrad->add_option("--h", grad_h, "central-difference step")
        ->check(CLI::PositiveNumber);
    checkgrad->add_option("--parallel", parallel, "worker threads for trials");
    checkgrad->add_option("--dense-cap", dense_cap,
                          "max joint-tensor entries to materialize");
    checkgrad->add_option("--out", out_path, "write the JSON report here");

    CLI::App* bench = app.add_subcommand("bench", "forward-pass timing");
    std::size_t iterations = 1000;
    bench->add_option("--config", config_path, "config JSON (object or array)")
        ->required();
    bench->add_option("--seed", seed, "master seed");
    bench->add_option("--iterations", iterations, "timed forwards per config");
    bench->add_option("--out", out_path, "write the JSON report here");

    CLI::App* traintoy = app.add_subcommand("traintoy", "teacher-student training");
    std::string save_task_prefix, load_task_prefix, save_student_prefix;
    traintoy->add_option("--config", config_path, "runspec JSON")->required();
    traintoy->add_option("--seed", seed, "override the runspec seed");
    traintoy->add_option("--save-task", save_task_prefix,
                         "write the task bundle to <prefix>.json/.blob");
    traintoy->add_option("--load-task", load_task_prefix,
                         "train on a saved task bundle instead of generating");
    traintoy->add_option("--save-student", save_student_prefix,
                         "write the trained student to <prefix>.json/.blob");
    traintoy->add_option("--out", out_path, "write the JSON report here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kValidationError;
    }

    try {
        if (params->parsed()) return run_params(config_path, out_path);
        if (equiv->parsed()) {
            return run_equiv(config_path, seed, equiv_trials, equiv_tol, parallel,
                             dense_cap, out_path);
        }
        if (checkgrad->parsed()) {
            return run_checkgrad(config_path, seed, grad_seeds, grad_h, grad_tol,
                                 parallel, dense_cap, out_path);
        }
        if (bench->parsed()) return run_bench(config_path, seed, iterations, out_path);
        if (traintoy->parsed()) {
            return run_traintoy(config_path, traintoy->count("--seed") > 0, seed,
                                out_path, save_task_prefix, load_task_prefix,
                                save_student_prefix);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kValidationError;
    }
    return kValidationError;
}
