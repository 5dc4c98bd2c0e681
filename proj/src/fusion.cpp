#include "polyfuse/fusion.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>
#include <utility>

namespace polyfuse {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

void require(bool cond, const std::string& msg) {
    if (!cond) fail(msg);
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

void require_vector(const DenseTensor& x, std::size_t len, const char* what) {
    require(x.order() == 1 && x.dim(1) == len,
            std::string(what) + " must be a vector of length " + std::to_string(len));
}

/// y[t] += m(:,t) . x for a column-major rows x cols matrix, i.e. y = m^T x.
std::vector<double> mat_t_vec(const DenseTensor& m, std::span<const double> x) {
    const std::size_t rows = m.dim(1), cols = m.dim(2);
    const double* md = m.data().data();
    std::vector<double> y(cols, 0.0);
    for (std::size_t t = 0; t < cols; ++t) {
        const double* col = md + t * rows;
        double acc = 0.0;
        for (std::size_t q = 0; q < rows; ++q) acc += col[q] * x[q];
        y[t] = acc;
    }
    return y;
}

/// Same as mat_t_vec with x implicitly phi-padded: the matrix has
/// x.size() + 1 rows and the last row multiplies the constant 1.
std::vector<double> mat_t_vec_phi(const DenseTensor& m, std::span<const double> x) {
    const std::size_t rows = m.dim(1), cols = m.dim(2);
    const double* md = m.data().data();
    std::vector<double> y(cols, 0.0);
    for (std::size_t t = 0; t < cols; ++t) {
        const double* col = md + t * rows;
        double acc = col[rows - 1];
        for (std::size_t q = 0; q + 1 < rows; ++q) acc += col[q] * x[q];
        y[t] = acc;
    }
    return y;
}

/// y += m v for a column-major matrix, streaming one column at a time.
void mat_vec_add(const DenseTensor& m, std::span<const double> v, double* y) {
    const std::size_t rows = m.dim(1), cols = m.dim(2);
    const double* md = m.data().data();
    for (std::size_t t = 0; t < cols; ++t) {
        const double* col = md + t * rows;
        const double vt = v[t];
        if (vt == 0.0) continue;
        for (std::size_t p = 0; p < rows; ++p) y[p] += col[p] * vt;
    }
}

void check_params(const FusionConfig& c, const FusionLayer::Params& p) {
    const std::size_t m = c.joint_dim();
    switch (c.variant) {
        case Variant::concat:
            require(std::holds_alternative<std::monostate>(p),
                    "Concat layers carry no parameters");
            return;
        case Variant::dense:
            if (const auto* dp = std::get_if<DenseParams>(&p)) {
                require(dp->bias.shape() == Shape({m}) &&
                            dp->w_a.shape() == Shape({m, c.a}) &&
                            dp->w_d.shape() == Shape({m, c.d}) &&
                            dp->w_ad.shape() == Shape({m, c.a, c.d}),
                        "dense parameter shapes do not match the config");
                return;
            }
            if (const auto* jp = std::get_if<JointParams>(&p)) {
                require(jp->w.shape() == Shape({m, c.a + 1, c.d + 1}),
                        "joint tensor shape does not match the config");
                return;
            }
            fail("Dense layers take DenseParams or JointParams");
        case Variant::cp: {
            const auto* f = std::get_if<CpFactors>(&p);
            require(f != nullptr, "PF-CP layers take CpFactors");
            f->validate();
            require(f->a1.dim(1) == m && f->a2.dim(1) == c.a + 1 &&
                        f->a3.dim(1) == c.d + 1 && f->rank() == c.rank,
                    "CP factor shapes do not match the config");
            return;
        }
        case Variant::tucker: {
            const auto* f = std::get_if<TuckerFactors>(&p);
            require(f != nullptr, "PF-Tucker layers take TuckerFactors");
            f->validate();
            require(f->u1.dim(1) == m && f->u2.dim(1) == c.a + 1 &&
                        f->u3.dim(1) == c.d + 1 && f->rank(1) == c.ranks[0] &&
                        f->rank(2) == c.ranks[1] && f->rank(3) == c.ranks[2],
                    "Tucker factor shapes do not match the config");
            return;
        }
        case Variant::cmf:
        case Variant::cmf_sr: {
            const auto* f = std::get_if<CmfParams>(&p);
            require(f != nullptr, "PF-CMF layers take CmfParams");
            f->validate();
            require(f->shared_rows == (c.variant == Variant::cmf_sr),
                    "row sharing flag does not match the variant");
            require(f->bias.dim(1) == m && f->u.dim(1) == m &&
                        f->v_a.dim(1) == c.a && f->v_d.dim(1) == c.d &&
                        f->rank() == c.rank,
                    "CMF factor shapes do not match the config");
            return;
        }
    }
    fail("unknown variant");
}

}  // namespace

std::string_view variant_name(Variant v) {
    switch (v) {
        case Variant::dense: return "Dense";
        case Variant::cp: return "PF-CP";
        case Variant::tucker: return "PF-Tucker";
        case Variant::cmf: return "PF-CMF";
        case Variant::cmf_sr: return "PF-CMF-SR";
        case Variant::concat: return "Concat";
    }
    fail("unknown variant");
}

Variant variant_from_name(std::string_view name) {
    const std::string key = lower(name);
    if (key == "dense") return Variant::dense;
    if (key == "pf-cp") return Variant::cp;
    if (key == "pf-tucker") return Variant::tucker;
    if (key == "pf-cmf") return Variant::cmf;
    if (key == "pf-cmf-sr") return Variant::cmf_sr;
    if (key == "concat") return Variant::concat;
    fail("unknown variant name: " + std::string(name));
}

void FusionConfig::validate() const {
    require(a >= 1 && d >= 1, "embedding dims a and d must be at least 1");
    if (variant == Variant::concat) {
        require(m == 0 || m == a + d,
                "Concat determines the joint dim as a + d; omit m or set it to a + d");
    } else {
        require(m >= 1, "joint dim m must be at least 1");
    }
    const bool has_rank = rank != 0;
    const bool has_ranks = ranks[0] != 0 || ranks[1] != 0 || ranks[2] != 0;
    if (needs_rank()) {
        require(has_rank, std::string(variant_name(variant)) + " requires a rank");
        require(!has_ranks, "ranks triple only applies to PF-Tucker");
    } else if (variant == Variant::tucker) {
        require(ranks[0] >= 1 && ranks[1] >= 1 && ranks[2] >= 1,
                "PF-Tucker requires a positive ranks triple");
        require(!has_rank, "PF-Tucker takes ranks, not a single rank");
    } else {
        require(!has_rank && !has_ranks,
                std::string(variant_name(variant)) + " takes no rank");
    }
}

FusionLayer::FusionLayer(FusionConfig config, Params params)
    : config_(config), params_(std::move(params)) {
    config_.validate();
    check_params(config_, params_);
}

FusionLayer FusionLayer::zeros(const FusionConfig& config) {
    config.validate();
    const std::size_t m = config.joint_dim(), a = config.a, d = config.d;
    switch (config.variant) {
        case Variant::dense:
            return FusionLayer(config, DenseParams{DenseTensor(Shape({m})),
                                                   DenseTensor(Shape({m, a})),
                                                   DenseTensor(Shape({m, d})),
                                                   DenseTensor(Shape({m, a, d}))});
        case Variant::cp:
            return FusionLayer(config, CpFactors::zeros(m, a, d, config.rank));
        case Variant::tucker:
            return FusionLayer(config,
                               TuckerFactors::zeros(m, a, d, config.ranks[0],
                                                    config.ranks[1], config.ranks[2]));
        case Variant::cmf:
            return FusionLayer(config, CmfParams::zeros(m, a, d, config.rank, false));
        case Variant::cmf_sr:
            return FusionLayer(config, CmfParams::zeros(m, a, d, config.rank, true));
        case Variant::concat:
            return FusionLayer(config, std::monostate{});
    }
    fail("unknown variant");
}

FusionLayer FusionLayer::random(const FusionConfig& config, std::mt19937_64& rng,
                                double stddev) {
    require(stddev >= 0.0, "stddev must be non-negative");
    FusionLayer layer = zeros(config);
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& view : param_views(layer)) {
        for (double& x : view.tensor->data()) x = dist(rng);
    }
    return layer;
}

FusionLayer FusionLayer::from_joint_tensor(const FusionConfig& config, DenseTensor w) {
    require(config.variant == Variant::dense,
            "joint tensors are a Dense-variant parameterization");
    return FusionLayer(config, JointParams{std::move(w)});
}

DenseTensor FusionLayer::forward(const DenseTensor& z_a, const DenseTensor& z_d) const {
    require_vector(z_a, config_.a, "z_a");
    require_vector(z_d, config_.d, "z_d");
    return std::visit(
        [&](const auto& p) -> DenseTensor {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, std::monostate>) {
                return forward_concat_baseline(z_a, z_d);
            } else if constexpr (std::is_same_v<T, DenseParams>) {
                return forward_dense(p, z_a, z_d);
            } else if constexpr (std::is_same_v<T, JointParams>) {
                return forward_joint_dense(p.w, z_a, z_d);
            } else if constexpr (std::is_same_v<T, CpFactors>) {
                return forward_cp(p, z_a, z_d);
            } else if constexpr (std::is_same_v<T, TuckerFactors>) {
                return forward_tucker(p, z_a, z_d);
            } else {
                return forward_cmf(p, z_a, z_d);
            }
        },
        params_);
}

DenseTensor forward_dense(const DenseParams& p, const DenseTensor& z_a,
                          const DenseTensor& z_d) {
    const std::size_t m = p.bias.dim(1), a = p.w_a.dim(2), d = p.w_d.dim(2);
    require_vector(z_a, a, "z_a");
    require_vector(z_d, d, "z_d");
    DenseTensor out = p.bias;
    double* y = out.data().data();
    mat_vec_add(p.w_a, z_a.data(), y);
    mat_vec_add(p.w_d, z_d.data(), y);
    const double* t = p.w_ad.data().data();
    const double* za = z_a.data().data();
    const double* zd = z_d.data().data();
    for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t q = 0; q < a; ++q) {
            const double scale = za[q] * zd[r];
            if (scale == 0.0) continue;
            const double* slice = t + (q + r * a) * m;
            for (std::size_t p_ = 0; p_ < m; ++p_) y[p_] += slice[p_] * scale;
        }
    }
    return out;
}

DenseTensor forward_joint_dense(const DenseTensor& w, const DenseTensor& z_a,
                                const DenseTensor& z_d) {
    require(w.order() == 3, "joint tensor must have order 3");
    const std::size_t m = w.dim(1), a = w.dim(2) - 1, d = w.dim(3) - 1;
    require(w.dim(2) >= 2 && w.dim(3) >= 2, "joint tensor dims 2 and 3 must be >= 2");
    require_vector(z_a, a, "z_a");
    require_vector(z_d, d, "z_d");
    DenseTensor out(Shape({m}));
    double* y = out.data().data();
    const double* wd = w.data().data();
    const double* za = z_a.data().data();
    const double* zd = z_d.data().data();
    for (std::size_t r = 0; r <= d; ++r) {
        const double cd = r < d ? zd[r] : 1.0;
        if (cd == 0.0) continue;
        for (std::size_t q = 0; q <= a; ++q) {
            const double scale = (q < a ? za[q] : 1.0) * cd;
            if (scale == 0.0) continue;
            const double* slice = wd + (q + r * (a + 1)) * m;
            for (std::size_t p = 0; p < m; ++p) y[p] += slice[p] * scale;
        }
    }
    return out;
}

DenseTensor forward_cp(const CpFactors& f, const DenseTensor& z_a,
                       const DenseTensor& z_d) {
    f.validate();
    require_vector(z_a, f.a2.dim(1) - 1, "z_a");
    require_vector(z_d, f.a3.dim(1) - 1, "z_d");
    const std::vector<double> p2 = mat_t_vec_phi(f.a2, z_a.data());
    const std::vector<double> p3 = mat_t_vec_phi(f.a3, z_d.data());
    std::vector<double> h(f.rank());
    for (std::size_t t = 0; t < h.size(); ++t) h[t] = p2[t] * p3[t];
    DenseTensor out(Shape({f.a1.dim(1)}));
    mat_vec_add(f.a1, h, out.data().data());
    return out;
}

DenseTensor forward_tucker(const TuckerFactors& f, const DenseTensor& z_a,
                           const DenseTensor& z_d) {
    f.validate();
    require_vector(z_a, f.u2.dim(1) - 1, "z_a");
    require_vector(z_d, f.u3.dim(1) - 1, "z_d");
    const std::vector<double> w2 = mat_t_vec_phi(f.u2, z_a.data());
    const std::vector<double> w3 = mat_t_vec_phi(f.u3, z_d.data());
    const std::size_t k1 = f.rank(1), k2 = f.rank(2), k3 = f.rank(3);
    const double* g = f.core.data().data();
    std::vector<double> t(k1, 0.0);
    for (std::size_t l = 0; l < k3; ++l) {
        for (std::size_t j = 0; j < k2; ++j) {
            const double scale = w2[j] * w3[l];
            if (scale == 0.0) continue;
            const double* slice = g + (j + l * k2) * k1;
            for (std::size_t i = 0; i < k1; ++i) t[i] += slice[i] * scale;
        }
    }
    DenseTensor out(Shape({f.u1.dim(1)}));
    mat_vec_add(f.u1, t, out.data().data());
    return out;
}

DenseTensor forward_cmf(const CmfParams& p, const DenseTensor& z_a,
                        const DenseTensor& z_d) {
    p.validate();
    require_vector(z_a, p.v_a.dim(1), "z_a");
    require_vector(z_d, p.v_d.dim(1), "z_d");
    const std::vector<double> pa = mat_t_vec(p.v_a, z_a.data());
    const std::vector<double> pd = mat_t_vec(p.v_d, z_d.data());
    const std::vector<double> q2 =
        p.shared_rows ? pa : mat_t_vec(p.mode2(), z_a.data());
    const std::vector<double> q3 =
        p.shared_rows ? pd : mat_t_vec(p.mode3(), z_d.data());
    std::vector<double> h(p.rank());
    for (std::size_t t = 0; t < h.size(); ++t) h[t] = pa[t] + pd[t] + q2[t] * q3[t];
    DenseTensor out = p.bias;
    mat_vec_add(p.u, h, out.data().data());
    return out;
}

DenseTensor concat_noise(const DenseTensor& z_tilde, std::span<const double> z_n) {
    require(z_tilde.order() == 1, "z_tilde must be a vector");
    std::vector<double> out(z_tilde.data().begin(), z_tilde.data().end());
    out.insert(out.end(), z_n.begin(), z_n.end());
    const std::size_t len = out.size();
    return DenseTensor::from_flat(Shape({len}), std::move(out));
}

DenseTensor forward_concat_baseline(const DenseTensor& z_a, const DenseTensor& z_d) {
    require(z_a.order() == 1 && z_d.order() == 1, "inputs must be vectors");
    return concat_noise(z_a, z_d.data());
}

std::uint64_t param_count(const FusionConfig& config) {
    // Unlike layer construction, counting tolerates rank 0 as a degenerate
    // limit (the factorized blocks vanish and only unfactorized slots remain).
    require(config.a >= 1 && config.d >= 1, "embedding dims a and d must be at least 1");
    if (config.variant == Variant::concat) {
        require(config.m == 0 || config.m == config.a + config.d,
                "Concat determines the joint dim as a + d; omit m or set it to a + d");
    } else {
        require(config.m >= 1, "joint dim m must be at least 1");
    }
    const std::uint64_t m = config.joint_dim(), a = config.a, d = config.d;
    const std::uint64_t k = config.rank;
    switch (config.variant) {
        case Variant::dense: return m + m * a + m * d + m * a * d;
        case Variant::cp: return k * (m + a + 1 + d + 1);
        case Variant::tucker: {
            const std::uint64_t k1 = config.ranks[0], k2 = config.ranks[1],
                                k3 = config.ranks[2];
            return k1 * k2 * k3 + m * k1 + (a + 1) * k2 + (d + 1) * k3;
        }
        case Variant::cmf: return m + k * (m + 2 * a + 2 * d);
        case Variant::cmf_sr: return m + k * (m + a + d);
        case Variant::concat: return 0;
    }
    fail("unknown variant");
}

namespace {

template <typename View, typename Layer>
std::vector<View> views_of(Layer& layer) {
    std::vector<View> out;
    std::visit(
        [&](auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, DenseParams>) {
                out = {{"b", &p.bias}, {"W_a", &p.w_a}, {"W_d", &p.w_d},
                       {"W_ad", &p.w_ad}};
            } else if constexpr (std::is_same_v<T, JointParams>) {
                out = {{"W", &p.w}};
            } else if constexpr (std::is_same_v<T, CpFactors>) {
                out = {{"A1", &p.a1}, {"A2", &p.a2}, {"A3", &p.a3}};
            } else if constexpr (std::is_same_v<T, TuckerFactors>) {
                out = {{"G", &p.core}, {"U1", &p.u1}, {"U2", &p.u2}, {"U3", &p.u3}};
            } else if constexpr (std::is_same_v<T, CmfParams>) {
                out = {{"b", &p.bias}, {"U", &p.u}, {"V_a", &p.v_a}, {"V_d", &p.v_d}};
                if (!p.shared_rows) {
                    out.push_back({"B2", &*p.b2});
                    out.push_back({"B3", &*p.b3});
                }
            }
        },
        layer.params());
    return out;
}

}  // namespace

std::vector<ParamView> param_views(FusionLayer& layer) {
    return views_of<ParamView>(layer);
}

std::vector<ConstParamView> param_views(const FusionLayer& layer) {
    return views_of<ConstParamView>(layer);
}

}  // namespace polyfuse
