#include "polyfuse/serialize.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>
#include <utility>

#include "polyfuse/version.hpp"

namespace polyfuse {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

void require(bool cond, const std::string& msg) {
    if (!cond) fail(msg);
}

void require_little_endian() {
    require(std::endian::native == std::endian::little,
            "blob files are little-endian; big-endian hosts are unsupported");
}

void check_keys(const json& j, const std::set<std::string>& allowed,
                const char* what) {
    require(j.is_object(), std::string(what) + " must be a JSON object");
    for (const auto& item : j.items()) {
        require(allowed.contains(item.key()),
                std::string("unknown key in ") + what + ": " + item.key());
    }
}

std::size_t get_size(const json& j, const char* key) {
    require(j.contains(key), std::string("missing key: ") + key);
    const json& v = j.at(key);
    require(v.is_number_unsigned(), std::string(key) + " must be a non-negative integer");
    return v.get<std::size_t>();
}

struct Field {
    std::string name;
    std::vector<std::size_t> dims;
    std::size_t offset = 0;
};

json manifest_header(const char* kind, const FusionConfig& config) {
    json j;
    j["format"] = "polyfuse-bundle";
    j["version"] = kVersion;
    j["layout"] = "first-index-fastest";
    j["encoding"] = "float64-le";
    j["kind"] = kind;
    j["config"] = config_to_json(config);
    return j;
}

void write_bundle(const std::string& prefix, json manifest,
                  const std::vector<std::pair<std::string, const DenseTensor*>>& fields) {
    require_little_endian();
    json jfields = json::array();
    std::size_t offset = 0;
    for (const auto& [name, tensor] : fields) {
        json f;
        f["name"] = name;
        f["dims"] = tensor->shape().dims();
        f["offset"] = offset;
        jfields.push_back(std::move(f));
        offset += tensor->size();
    }
    manifest["fields"] = std::move(jfields);

    std::ofstream mf(prefix + ".json");
    require(mf.good(), "cannot open " + prefix + ".json for writing");
    mf << manifest.dump(2) << "\n";
    require(mf.good(), "failed writing " + prefix + ".json");

    std::ofstream bf(prefix + ".blob", std::ios::binary);
    require(bf.good(), "cannot open " + prefix + ".blob for writing");
    for (const auto& [name, tensor] : fields) {
        const std::span<const double> d = tensor->data();
        bf.write(reinterpret_cast<const char*>(d.data()),
                 static_cast<std::streamsize>(d.size() * sizeof(double)));
    }
    require(bf.good(), "failed writing " + prefix + ".blob");
}

struct Bundle {
    json manifest;
    std::vector<Field> fields;
    std::vector<double> blob;

    const Field& field(const std::string& name) const {
        for (const Field& f : fields) {
            if (f.name == name) return f;
        }
        fail("bundle has no field named " + name);
    }

    DenseTensor tensor(const std::string& name) const {
        const Field& f = field(name);
        const Shape shape(f.dims);
        require(f.offset + shape.element_count() <= blob.size(),
                "field " + name + " overruns the blob");
        std::vector<double> data(blob.begin() + static_cast<std::ptrdiff_t>(f.offset),
                                 blob.begin() + static_cast<std::ptrdiff_t>(
                                                    f.offset + shape.element_count()));
        return DenseTensor::from_flat(shape, std::move(data));
    }
};

Bundle read_bundle(const std::string& prefix, const char* kind) {
    require_little_endian();
    std::ifstream mf(prefix + ".json");
    require(mf.good(), "cannot open " + prefix + ".json");
    Bundle b;
    mf >> b.manifest;
    require(b.manifest.value("format", "") == "polyfuse-bundle",
            "not a polyfuse bundle: " + prefix + ".json");
    require(b.manifest.value("kind", "") == kind,
            std::string("bundle kind mismatch: expected ") + kind);
    require(b.manifest.value("layout", "") == "first-index-fastest",
            "unsupported layout");
    require(b.manifest.value("encoding", "") == "float64-le", "unsupported encoding");
    require(b.manifest.contains("fields") && b.manifest["fields"].is_array(),
            "manifest has no fields array");
    for (const json& jf : b.manifest["fields"]) {
        Field f;
        f.name = jf.at("name").get<std::string>();
        f.dims = jf.at("dims").get<std::vector<std::size_t>>();
        f.offset = jf.at("offset").get<std::size_t>();
        b.fields.push_back(std::move(f));
    }

    std::ifstream bf(prefix + ".blob", std::ios::binary | std::ios::ate);
    require(bf.good(), "cannot open " + prefix + ".blob");
    const std::streamsize bytes = bf.tellg();
    require(bytes >= 0 && bytes % static_cast<std::streamsize>(sizeof(double)) == 0,
            "blob size is not a multiple of 8 bytes");
    b.blob.resize(static_cast<std::size_t>(bytes) / sizeof(double));
    bf.seekg(0);
    bf.read(reinterpret_cast<char*>(b.blob.data()), bytes);
    require(bf.good() || bytes == 0, "failed reading " + prefix + ".blob");
    for (double x : b.blob) {
        require(std::isfinite(x), "blob contains a non-finite value");
    }
    return b;
}

}  // namespace

json config_to_json(const FusionConfig& config) {
    config.validate();
    json j;
    j["variant"] = std::string(variant_name(config.variant));
    j["m"] = config.joint_dim();
    j["a"] = config.a;
    j["d"] = config.d;
    j["n"] = config.n;
    if (config.needs_rank()) j["rank"] = config.rank;
    if (config.variant == Variant::tucker) j["ranks"] = config.ranks;
    return j;
}

FusionConfig config_from_json(const json& j) {
    check_keys(j, {"variant", "m", "a", "d", "n", "rank", "ranks"}, "config");
    require(j.contains("variant") && j.at("variant").is_string(),
            "config requires a variant name");
    FusionConfig c;
    c.variant = variant_from_name(j.at("variant").get<std::string>());
    c.a = get_size(j, "a");
    c.d = get_size(j, "d");
    if (j.contains("m")) {
        c.m = get_size(j, "m");
    } else {
        require(c.variant == Variant::concat, "config requires m");
    }
    if (j.contains("n")) c.n = get_size(j, "n");
    if (j.contains("rank")) c.rank = get_size(j, "rank");
    if (j.contains("ranks")) {
        const json& r = j.at("ranks");
        require(r.is_array() && r.size() == 3, "ranks must be a 3-element array");
        for (std::size_t i = 0; i < 3; ++i) {
            require(r[i].is_number_unsigned(), "ranks entries must be non-negative integers");
            c.ranks[i] = r[i].get<std::size_t>();
        }
    }
    c.validate();
    return c;
}

json report_to_json(const TrainReport& report) {
    json j;
    j["version"] = kVersion;
    j["config"] = config_to_json(report.config);
    j["task_seed"] = report.task_seed;
    j["epochs"] = report.options.epochs;
    j["batch_size"] = report.options.batch_size;
    j["lr"] = report.options.lr;
    j["lambda2"] = report.options.lambda2;
    j["beta1"] = report.options.adam.beta1;
    j["beta2"] = report.options.adam.beta2;
    j["epsilon"] = report.options.adam.epsilon;
    j["divergence_threshold"] = report.options.divergence_threshold;
    j["init_std"] = report.init_std;
    j["train_mse"] = report.train_mse;
    j["val_mse"] = report.val_mse;
    j["final_penalty"] = report.final_penalty;
    j["diverged"] = report.diverged;
    j["wall_ms"] = report.wall_ms;
    return j;
}

void save_layer(const FusionLayer& layer, const std::string& prefix) {
    json manifest = manifest_header("layer", layer.config());
    std::vector<std::pair<std::string, const DenseTensor*>> fields;
    for (const auto& v : param_views(layer)) fields.emplace_back(v.name, v.tensor);
    write_bundle(prefix, std::move(manifest), fields);
}

FusionLayer load_layer(const std::string& prefix) {
    const Bundle b = read_bundle(prefix, "layer");
    require(b.manifest.contains("config"), "layer manifest has no config");
    const FusionConfig config = config_from_json(b.manifest["config"]);

    if (config.variant == Variant::dense && b.fields.size() == 1 &&
        b.fields[0].name == "W") {
        return FusionLayer::from_joint_tensor(config, b.tensor("W"));
    }
    FusionLayer layer = FusionLayer::zeros(config);
    auto views = param_views(layer);
    require(views.size() == b.fields.size(),
            "bundle field count does not match the config's parameter slots");
    for (auto& v : views) {
        DenseTensor loaded = b.tensor(v.name);
        require(loaded.shape() == v.tensor->shape(),
                "field " + v.name + " has the wrong dims for the config");
        *v.tensor = std::move(loaded);
    }
    return layer;
}

void save_task(const SyntheticTask& task, const std::string& prefix) {
    const FusionConfig& c = task.teacher.config();
    json manifest = manifest_header("task", c);
    manifest["noise_sigma"] = task.noise_sigma;
    manifest["seed"] = task.seed;
    manifest["num_samples"] = task.samples.size();

    const std::size_t n = task.samples.size();
    require(n >= 1, "a task needs at least one sample");
    const std::size_t m = c.joint_dim();
    DenseTensor za(Shape({c.a, n}));
    DenseTensor zd(Shape({c.d, n}));
    DenseTensor y(Shape({m, n}));
    for (std::size_t s = 0; s < n; ++s) {
        std::copy_n(task.samples[s].z_a.data().data(), c.a,
                    za.data().data() + s * c.a);
        std::copy_n(task.samples[s].z_d.data().data(), c.d,
                    zd.data().data() + s * c.d);
        std::copy_n(task.samples[s].target.data().data(), m, y.data().data() + s * m);
    }

    std::vector<std::pair<std::string, const DenseTensor*>> fields;
    std::vector<ConstParamView> views = param_views(task.teacher);
    for (const auto& v : views) fields.emplace_back("teacher." + v.name, v.tensor);
    fields.emplace_back("Za", &za);
    fields.emplace_back("Zd", &zd);
    fields.emplace_back("Y", &y);
    write_bundle(prefix, std::move(manifest), fields);
}

SyntheticTask load_task(const std::string& prefix) {
    const Bundle b = read_bundle(prefix, "task");
    require(b.manifest.contains("config"), "task manifest has no config");
    const FusionConfig config = config_from_json(b.manifest["config"]);
    const std::size_t n = get_size(b.manifest, "num_samples");
    require(n >= 1, "a task needs at least one sample");

    FusionLayer teacher = FusionLayer::zeros(config);
    for (auto& v : param_views(teacher)) {
        DenseTensor loaded = b.tensor("teacher." + v.name);
        require(loaded.shape() == v.tensor->shape(),
                "teacher field " + v.name + " has the wrong dims");
        *v.tensor = std::move(loaded);
    }

    const DenseTensor za = b.tensor("Za");
    const DenseTensor zd = b.tensor("Zd");
    const DenseTensor y = b.tensor("Y");
    const std::size_t m = config.joint_dim();
    require(za.shape() == Shape({config.a, n}) && zd.shape() == Shape({config.d, n}) &&
                y.shape() == Shape({m, n}),
            "sample matrices have the wrong dims");

    SyntheticTask task{std::move(teacher), {}, 0.0, 0};
    require(b.manifest.contains("noise_sigma") && b.manifest.contains("seed"),
            "task manifest is missing noise_sigma or seed");
    task.noise_sigma = b.manifest["noise_sigma"].get<double>();
    task.seed = b.manifest["seed"].get<std::uint64_t>();
    task.samples.reserve(n);
    for (std::size_t s = 0; s < n; ++s) {
        Sample sample{DenseTensor(Shape({config.a})), DenseTensor(Shape({config.d})),
                      DenseTensor(Shape({m}))};
        std::copy_n(za.data().data() + s * config.a, config.a,
                    sample.z_a.data().data());
        std::copy_n(zd.data().data() + s * config.d, config.d,
                    sample.z_d.data().data());
        std::copy_n(y.data().data() + s * m, m, sample.target.data().data());
        task.samples.push_back(std::move(sample));
    }
    return task;
}

}  // namespace polyfuse
