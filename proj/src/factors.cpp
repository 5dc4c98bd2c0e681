#include "polyfuse/factors.hpp"

#include <stdexcept>
#include <string>

namespace polyfuse {

namespace {

void require(bool cond, const std::string& what) {
    if (!cond) throw std::invalid_argument(what);
}

void require_matrix(const DenseTensor& t, const char* name) {
    require(t.order() == 2, std::string(name) + " must be order 2");
}

}  // namespace

CpFactors CpFactors::zeros(std::size_t m, std::size_t a, std::size_t d, std::size_t k) {
    return CpFactors{DenseTensor(Shape{m, k}), DenseTensor(Shape{a + 1, k}),
                     DenseTensor(Shape{d + 1, k})};
}

void CpFactors::validate() const {
    require_matrix(a1, "CpFactors.a1");
    require_matrix(a2, "CpFactors.a2");
    require_matrix(a3, "CpFactors.a3");
    require(a1.dim(2) == a2.dim(2) && a1.dim(2) == a3.dim(2),
            "CpFactors: factor column counts differ");
}

TuckerFactors TuckerFactors::zeros(std::size_t m, std::size_t a, std::size_t d,
                                   std::size_t k1, std::size_t k2, std::size_t k3) {
    return TuckerFactors{DenseTensor(Shape{k1, k2, k3}), DenseTensor(Shape{m, k1}),
                         DenseTensor(Shape{a + 1, k2}), DenseTensor(Shape{d + 1, k3})};
}

void TuckerFactors::validate() const {
    require(core.order() == 3, "TuckerFactors.core must be order 3");
    require_matrix(u1, "TuckerFactors.u1");
    require_matrix(u2, "TuckerFactors.u2");
    require_matrix(u3, "TuckerFactors.u3");
    require(u1.dim(2) == core.dim(1) && u2.dim(2) == core.dim(2) &&
                u3.dim(2) == core.dim(3),
            "TuckerFactors: factor column counts do not match core dims");
}

CmfParams CmfParams::zeros(std::size_t m, std::size_t a, std::size_t d, std::size_t k,
                           bool shared) {
    CmfParams p{DenseTensor(Shape{m}),    DenseTensor(Shape{m, k}),
                DenseTensor(Shape{a, k}), DenseTensor(Shape{d, k}),
                std::nullopt,             std::nullopt,
                shared};
    if (!shared) {
        p.b2 = DenseTensor(Shape{a, k});
        p.b3 = DenseTensor(Shape{d, k});
    }
    return p;
}

void CmfParams::validate() const {
    require(bias.order() == 1, "CmfParams.bias must be order 1");
    require_matrix(u, "CmfParams.u");
    require_matrix(v_a, "CmfParams.v_a");
    require_matrix(v_d, "CmfParams.v_d");
    require(bias.size() == u.dim(1), "CmfParams: bias length does not match u rows");
    const std::size_t k = u.dim(2);
    require(v_a.dim(2) == k && v_d.dim(2) == k, "CmfParams: rank mismatch in row spaces");
    if (shared_rows) {
        require(!b2.has_value() && !b3.has_value(),
                "CmfParams: shared_rows ties b2/b3 to v_a/v_d; they must not be stored");
    } else {
        require(b2.has_value() && b3.has_value(), "CmfParams: b2/b3 missing");
        require_matrix(*b2, "CmfParams.b2");
        require_matrix(*b3, "CmfParams.b3");
        require(b2->dim(1) == v_a.dim(1) && b2->dim(2) == k &&
                    b3->dim(1) == v_d.dim(1) && b3->dim(2) == k,
                "CmfParams: b2/b3 dims mismatch");
    }
}

DenseTensor cp_reconstruct(const CpFactors& f) {
    f.validate();
    const std::size_t m = f.a1.dim(1);
    const std::size_t a1dim = f.a2.dim(1);
    const std::size_t d1dim = f.a3.dim(1);
    const std::size_t k = f.rank();

    DenseTensor w(Shape{m, a1dim, d1dim});
    std::span<double> out = w.data();
    std::span<const double> m1 = f.a1.data();
    std::span<const double> m2 = f.a2.data();
    std::span<const double> m3 = f.a3.data();
    for (std::size_t r = 0; r < k; ++r) {
        for (std::size_t t3 = 0; t3 < d1dim; ++t3) {
            const double c3 = m3[t3 + r * d1dim];
            for (std::size_t t2 = 0; t2 < a1dim; ++t2) {
                const double c23 = m2[t2 + r * a1dim] * c3;
                const std::size_t base = t2 * m + t3 * m * a1dim;
                for (std::size_t p = 0; p < m; ++p) {
                    out[base + p] += m1[p + r * m] * c23;
                }
            }
        }
    }
    return w;
}

DenseTensor tucker_reconstruct(const TuckerFactors& f) {
    f.validate();
    DenseTensor w = mode_n_mat_product(f.core, 1, f.u1);
    w = mode_n_mat_product(w, 2, f.u2);
    return mode_n_mat_product(w, 3, f.u3);
}

DenseTensor cmf_assemble_dense(const CmfParams& p, std::size_t m, std::size_t a,
                               std::size_t d) {
    p.validate();
    require(p.u.dim(1) == m && p.v_a.dim(1) == a && p.v_d.dim(1) == d,
            "cmf_assemble_dense: dims (m,a,d) do not match parameters");
    const std::size_t k = p.rank();
    const DenseTensor& b2 = p.mode2();
    const DenseTensor& b3 = p.mode3();

    DenseTensor w(Shape{m, a + 1, d + 1});
    for (std::size_t i = 0; i < m; ++i) w(i, a, d) = p.bias(i);
    for (std::size_t q = 0; q < a; ++q) {
        for (std::size_t i = 0; i < m; ++i) {
            double s = 0.0;
            for (std::size_t t = 0; t < k; ++t) s += p.u(i, t) * p.v_a(q, t);
            w(i, q, d) = s;
        }
    }
    for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t i = 0; i < m; ++i) {
            double s = 0.0;
            for (std::size_t t = 0; t < k; ++t) s += p.u(i, t) * p.v_d(r, t);
            w(i, a, r) = s;
        }
    }
    for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t q = 0; q < a; ++q) {
            for (std::size_t i = 0; i < m; ++i) {
                double s = 0.0;
                for (std::size_t t = 0; t < k; ++t) {
                    s += p.u(i, t) * b2(q, t) * b3(r, t);
                }
                w(i, q, r) = s;
            }
        }
    }
    return w;
}

std::vector<double> pad_one(std::span<const double> x) {
    std::vector<double> out(x.begin(), x.end());
    out.push_back(1.0);
    return out;
}

DenseTensor pad_one(const DenseTensor& x) {
    require(x.order() == 1, "pad_one: input must be order 1");
    return DenseTensor::vector(pad_one(x.data()));
}

}  // namespace polyfuse
