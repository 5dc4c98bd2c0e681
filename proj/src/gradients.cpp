#include "polyfuse/gradients.hpp"

#include <cmath>

#include <stdexcept>
#include <utility>

namespace polyfuse {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

void require(bool cond, const std::string& msg) {
    if (!cond) fail(msg);
}

/// y = m^T x for a column-major rows x cols matrix.
std::vector<double> mat_t_vec(const DenseTensor& m, std::span<const double> x) {
    const std::size_t rows = m.dim(1), cols = m.dim(2);
    const double* md = m.data().data();
    std::vector<double> y(cols);
    for (std::size_t t = 0; t < cols; ++t) {
        const double* col = md + t * rows;
        double acc = 0.0;
        for (std::size_t q = 0; q < rows; ++q) acc += col[q] * x[q];
        y[t] = acc;
    }
    return y;
}

/// y = m v for a column-major matrix.
std::vector<double> mat_vec(const DenseTensor& m, std::span<const double> v) {
    const std::size_t rows = m.dim(1), cols = m.dim(2);
    const double* md = m.data().data();
    std::vector<double> y(rows, 0.0);
    for (std::size_t t = 0; t < cols; ++t) {
        const double* col = md + t * rows;
        const double vt = v[t];
        for (std::size_t p = 0; p < rows; ++p) y[p] += col[p] * vt;
    }
    return y;
}

/// u v^T as a |u| x |v| matrix.
DenseTensor outer_mv(std::span<const double> u, std::span<const double> v) {
    DenseTensor out(Shape({u.size(), v.size()}));
    double* o = out.data().data();
    for (std::size_t t = 0; t < v.size(); ++t) {
        const double vt = v[t];
        for (std::size_t p = 0; p < u.size(); ++p) o[p + t * u.size()] = u[p] * vt;
    }
    return out;
}

DenseTensor vec_tensor(std::span<const double> v) {
    return DenseTensor::from_flat(Shape({v.size()}),
                                  std::vector<double>(v.begin(), v.end()));
}

std::vector<double> hadamard(std::span<const double> x, std::span<const double> y) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
    return out;
}

std::vector<double> phi(std::span<const double> x) { return pad_one(x); }

ParamGradients backward_dense(const DenseParams& p, std::span<const double> za,
                              std::span<const double> zd, std::span<const double> u) {
    const std::size_t m = p.bias.dim(1), a = p.w_a.dim(2), d = p.w_d.dim(2);
    ParamGradients g;
    g.names = {"b", "W_a", "W_d", "W_ad"};
    g.grads.push_back(vec_tensor(u));
    g.grads.push_back(outer_mv(u, za));
    g.grads.push_back(outer_mv(u, zd));
    DenseTensor gt(Shape({m, a, d}));
    double* gtd = gt.data().data();
    std::vector<double> dza = mat_t_vec(p.w_a, u);
    std::vector<double> dzd = mat_t_vec(p.w_d, u);
    const double* t = p.w_ad.data().data();
    for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t q = 0; q < a; ++q) {
            const double* slice = t + (q + r * a) * m;
            double* gslice = gtd + (q + r * a) * m;
            const double scale = za[q] * zd[r];
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                gslice[i] = u[i] * scale;
                acc += slice[i] * u[i];
            }
            dza[q] += acc * zd[r];
            dzd[r] += acc * za[q];
        }
    }
    g.grads.push_back(std::move(gt));
    g.dz_a = vec_tensor(dza);
    g.dz_d = vec_tensor(dzd);
    return g;
}

ParamGradients backward_joint(const JointParams& jp, std::span<const double> za,
                              std::span<const double> zd, std::span<const double> u) {
    const DenseTensor& w = jp.w;
    const std::size_t m = w.dim(1), ap = w.dim(2), dp = w.dim(3);
    const std::vector<double> fa = phi(za);
    const std::vector<double> fd = phi(zd);
    ParamGradients g;
    g.names = {"W"};
    DenseTensor gw(w.shape());
    double* gwd = gw.data().data();
    std::vector<double> dza(za.size(), 0.0);
    std::vector<double> dzd(zd.size(), 0.0);
    const double* wd = w.data().data();
    for (std::size_t r = 0; r < dp; ++r) {
        for (std::size_t q = 0; q < ap; ++q) {
            const double* slice = wd + (q + r * ap) * m;
            double* gslice = gwd + (q + r * ap) * m;
            const double scale = fa[q] * fd[r];
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                gslice[i] = u[i] * scale;
                acc += slice[i] * u[i];
            }
            if (q < za.size()) dza[q] += acc * fd[r];
            if (r < zd.size()) dzd[r] += acc * fa[q];
        }
    }
    g.grads.push_back(std::move(gw));
    g.dz_a = vec_tensor(dza);
    g.dz_d = vec_tensor(dzd);
    return g;
}

ParamGradients backward_cp(const CpFactors& f, std::span<const double> za,
                           std::span<const double> zd, std::span<const double> u) {
    const std::vector<double> fa = phi(za);
    const std::vector<double> fd = phi(zd);
    const std::vector<double> p2 = mat_t_vec(f.a2, fa);
    const std::vector<double> p3 = mat_t_vec(f.a3, fd);
    const std::vector<double> h = hadamard(p2, p3);
    const std::vector<double> dh = mat_t_vec(f.a1, u);
    const std::vector<double> dp2 = hadamard(dh, p3);
    const std::vector<double> dp3 = hadamard(dh, p2);
    ParamGradients g;
    g.names = {"A1", "A2", "A3"};
    g.grads.push_back(outer_mv(u, h));
    g.grads.push_back(outer_mv(fa, dp2));
    g.grads.push_back(outer_mv(fd, dp3));
    const std::vector<double> full_a = mat_vec(f.a2, dp2);
    const std::vector<double> full_d = mat_vec(f.a3, dp3);
    g.dz_a = vec_tensor(std::span(full_a).first(za.size()));
    g.dz_d = vec_tensor(std::span(full_d).first(zd.size()));
    return g;
}

ParamGradients backward_tucker(const TuckerFactors& f, std::span<const double> za,
                               std::span<const double> zd,
                               std::span<const double> u) {
    const std::vector<double> fa = phi(za);
    const std::vector<double> fd = phi(zd);
    const std::vector<double> w2 = mat_t_vec(f.u2, fa);
    const std::vector<double> w3 = mat_t_vec(f.u3, fd);
    const std::size_t k1 = f.rank(1), k2 = f.rank(2), k3 = f.rank(3);
    const double* core = f.core.data().data();
    std::vector<double> t(k1, 0.0);
    for (std::size_t l = 0; l < k3; ++l) {
        for (std::size_t j = 0; j < k2; ++j) {
            const double scale = w2[j] * w3[l];
            const double* slice = core + (j + l * k2) * k1;
            for (std::size_t i = 0; i < k1; ++i) t[i] += slice[i] * scale;
        }
    }
    const std::vector<double> dt = mat_t_vec(f.u1, u);
    DenseTensor gcore(f.core.shape());
    double* gc = gcore.data().data();
    std::vector<double> dw2(k2, 0.0);
    std::vector<double> dw3(k3, 0.0);
    for (std::size_t l = 0; l < k3; ++l) {
        for (std::size_t j = 0; j < k2; ++j) {
            const double* slice = core + (j + l * k2) * k1;
            double* gslice = gc + (j + l * k2) * k1;
            const double scale = w2[j] * w3[l];
            double acc = 0.0;
            for (std::size_t i = 0; i < k1; ++i) {
                gslice[i] = dt[i] * scale;
                acc += slice[i] * dt[i];
            }
            dw2[j] += acc * w3[l];
            dw3[l] += acc * w2[j];
        }
    }
    ParamGradients g;
    g.names = {"G", "U1", "U2", "U3"};
    g.grads.push_back(std::move(gcore));
    g.grads.push_back(outer_mv(u, t));
    g.grads.push_back(outer_mv(fa, dw2));
    g.grads.push_back(outer_mv(fd, dw3));
    const std::vector<double> full_a = mat_vec(f.u2, dw2);
    const std::vector<double> full_d = mat_vec(f.u3, dw3);
    g.dz_a = vec_tensor(std::span(full_a).first(za.size()));
    g.dz_d = vec_tensor(std::span(full_d).first(zd.size()));
    return g;
}

ParamGradients backward_cmf(const CmfParams& p, std::span<const double> za,
                            std::span<const double> zd, std::span<const double> u) {
    const std::vector<double> pa = mat_t_vec(p.v_a, za);
    const std::vector<double> pd = mat_t_vec(p.v_d, zd);
    const std::vector<double> q2 = p.shared_rows ? pa : mat_t_vec(p.mode2(), za);
    const std::vector<double> q3 = p.shared_rows ? pd : mat_t_vec(p.mode3(), zd);
    std::vector<double> h(p.rank());
    for (std::size_t t = 0; t < h.size(); ++t) h[t] = pa[t] + pd[t] + q2[t] * q3[t];
    const std::vector<double> dh = mat_t_vec(p.u, u);
    const std::vector<double> dq2 = hadamard(dh, q3);
    const std::vector<double> dq3 = hadamard(dh, q2);
    ParamGradients g;
    g.names = {"b", "U", "V_a", "V_d"};
    g.grads.push_back(vec_tensor(u));
    g.grads.push_back(outer_mv(u, h));
    if (p.shared_rows) {
        std::vector<double> sum2(dh.size()), sum3(dh.size());
        for (std::size_t t = 0; t < dh.size(); ++t) {
            sum2[t] = dh[t] + dq2[t];
            sum3[t] = dh[t] + dq3[t];
        }
        g.grads.push_back(outer_mv(za, sum2));
        g.grads.push_back(outer_mv(zd, sum3));
        g.dz_a = vec_tensor(mat_vec(p.v_a, sum2));
        g.dz_d = vec_tensor(mat_vec(p.v_d, sum3));
    } else {
        g.grads.push_back(outer_mv(za, dh));
        g.grads.push_back(outer_mv(zd, dh));
        g.names.push_back("B2");
        g.names.push_back("B3");
        g.grads.push_back(outer_mv(za, dq2));
        g.grads.push_back(outer_mv(zd, dq3));
        std::vector<double> dza = mat_vec(p.v_a, dh);
        const std::vector<double> extra_a = mat_vec(p.mode2(), dq2);
        for (std::size_t i = 0; i < dza.size(); ++i) dza[i] += extra_a[i];
        std::vector<double> dzd = mat_vec(p.v_d, dh);
        const std::vector<double> extra_d = mat_vec(p.mode3(), dq3);
        for (std::size_t i = 0; i < dzd.size(); ++i) dzd[i] += extra_d[i];
        g.dz_a = vec_tensor(dza);
        g.dz_d = vec_tensor(dzd);
    }
    return g;
}

ParamGradients backward_concat(std::span<const double> za, std::span<const double> zd,
                               std::span<const double> u) {
    ParamGradients g;
    g.dz_a = vec_tensor(u.first(za.size()));
    g.dz_d = vec_tensor(u.subspan(za.size(), zd.size()));
    return g;
}

}  // namespace

const DenseTensor& ParamGradients::grad(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return grads[i];
    }
    fail("no gradient slot named " + std::string(name));
}

ParamGradients backward(const FusionLayer& layer, const DenseTensor& z_a,
                        const DenseTensor& z_d, const DenseTensor& upstream) {
    const FusionConfig& c = layer.config();
    require(z_a.order() == 1 && z_a.dim(1) == c.a, "z_a has the wrong shape");
    require(z_d.order() == 1 && z_d.dim(1) == c.d, "z_d has the wrong shape");
    require(upstream.order() == 1 && upstream.dim(1) == c.joint_dim(),
            "upstream must be a vector of length joint_dim()");
    const std::span<const double> za = z_a.data();
    const std::span<const double> zd = z_d.data();
    const std::span<const double> u = upstream.data();
    return std::visit(
        [&](const auto& p) -> ParamGradients {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, std::monostate>) {
                return backward_concat(za, zd, u);
            } else if constexpr (std::is_same_v<T, DenseParams>) {
                return backward_dense(p, za, zd, u);
            } else if constexpr (std::is_same_v<T, JointParams>) {
                return backward_joint(p, za, zd, u);
            } else if constexpr (std::is_same_v<T, CpFactors>) {
                return backward_cp(p, za, zd, u);
            } else if constexpr (std::is_same_v<T, TuckerFactors>) {
                return backward_tucker(p, za, zd, u);
            } else {
                return backward_cmf(p, za, zd, u);
            }
        },
        layer.params());
}

std::vector<double> finite_diff_gradient(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> x, double h) {
    require(h > 0.0, "step h must be positive");
    std::vector<double> probe(x.begin(), x.end());
    std::vector<double> grad(x.size());
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double fp = f(probe);
        probe[i] = orig - h;
        const double fm = f(probe);
        probe[i] = orig;
        require(std::isfinite(fp) && std::isfinite(fm),
                "finite_diff_gradient: non-finite function value");
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

double frobenius_penalty(const FusionLayer& layer) {
    double total = 0.0;
    for (const auto& view : param_views(layer)) {
        for (double x : view.tensor->data()) total += x * x;
    }
    return total;
}

}  // namespace polyfuse
