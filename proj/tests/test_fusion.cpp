#include <doctest.h>

#include <cmath>
#include <cstddef>
#include <random>
#include <variant>

#include "polyfuse/factors.hpp"
#include "polyfuse/fusion.hpp"
#include "polyfuse/tensor.hpp"

using namespace polyfuse;

namespace {

FusionConfig make_config(Variant v, std::size_t m, std::size_t a, std::size_t d,
                         std::size_t rank = 0) {
    FusionConfig c;
    c.variant = v;
    c.m = m;
    c.a = a;
    c.d = d;
    if (v == Variant::tucker) {
        c.ranks = {rank, rank, rank};
    } else {
        c.rank = rank;
    }
    return c;
}

DenseTensor random_vec(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> unit(0.0, 1.0);
    DenseTensor v(Shape({n}));
    for (double& x : v.data()) x = unit(rng);
    return v;
}

double max_abs_diff(const DenseTensor& a, const DenseTensor& b) {
    REQUIRE(a.shape() == b.shape());
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
    }
    return worst;
}

const FusionConfig kPaperDense = make_config(Variant::dense, 384, 256, 128);

}  // namespace

TEST_CASE("variant names") {
    CHECK(variant_name(Variant::cp) == "PF-CP");
    CHECK(variant_from_name("PF-CMF-SR") == Variant::cmf_sr);
    CHECK(variant_from_name("pf-tucker") == Variant::tucker);
    CHECK(variant_from_name("DENSE") == Variant::dense);
    CHECK_THROWS_AS(variant_from_name("PF-XX"), std::invalid_argument);
}

TEST_CASE("config validation") {
    CHECK_NOTHROW(make_config(Variant::dense, 4, 3, 2).validate());
    CHECK_NOTHROW(make_config(Variant::cp, 4, 3, 2, 2).validate());
    CHECK_NOTHROW(make_config(Variant::tucker, 4, 3, 2, 2).validate());
    CHECK_NOTHROW(make_config(Variant::cmf_sr, 4, 3, 2, 2).validate());

    CHECK_THROWS_AS(make_config(Variant::dense, 4, 0, 2).validate(),
                    std::invalid_argument);
    CHECK_THROWS_AS(make_config(Variant::dense, 0, 3, 2).validate(),
                    std::invalid_argument);
    CHECK_THROWS_AS(make_config(Variant::dense, 4, 3, 2, 2).validate(),
                    std::invalid_argument);
    CHECK_THROWS_AS(make_config(Variant::cp, 4, 3, 2).validate(),
                    std::invalid_argument);
    CHECK_THROWS_AS(make_config(Variant::tucker, 4, 3, 2).validate(),
                    std::invalid_argument);
    SUBCASE("rank and ranks are mutually exclusive") {
        FusionConfig c = make_config(Variant::cp, 4, 3, 2, 2);
        c.ranks = {2, 2, 2};
        CHECK_THROWS_AS(c.validate(), std::invalid_argument);
        FusionConfig t = make_config(Variant::tucker, 4, 3, 2, 2);
        t.rank = 2;
        CHECK_THROWS_AS(t.validate(), std::invalid_argument);
    }
    SUBCASE("concat fixes the joint dim") {
        FusionConfig c = make_config(Variant::concat, 0, 3, 2);
        CHECK_NOTHROW(c.validate());
        CHECK(c.joint_dim() == 5);
        c.m = 5;
        CHECK_NOTHROW(c.validate());
        c.m = 4;
        CHECK_THROWS_AS(c.validate(), std::invalid_argument);
        c.m = 0;
        c.rank = 1;
        CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    }
    SUBCASE("derived dims") {
        FusionConfig c = make_config(Variant::dense, 4, 3, 2);
        c.n = 7;
        CHECK(c.joint_dim() == 4);
        CHECK(c.concat_dim() == 11);
        CHECK(c.dense_entries() == 4 * 4 * 3);
    }
}

TEST_CASE("forward_dense") {
    const std::size_t m = 2, a = 2, d = 2;
    std::mt19937_64 rng(1);
    SUBCASE("zero inputs give the bias regardless of the maps") {
        FusionLayer layer =
            FusionLayer::random(make_config(Variant::dense, m, a, d), rng, 1.0);
        auto& p = std::get<DenseParams>(layer.params());
        const DenseTensor y =
            layer.forward(DenseTensor::zeros(Shape({a})), DenseTensor::zeros(Shape({d})));
        CHECK(y == p.bias);
    }
    SUBCASE("bias-only parameters give the bias everywhere") {
        FusionLayer layer = FusionLayer::zeros(make_config(Variant::dense, m, a, d));
        std::get<DenseParams>(layer.params()).bias = DenseTensor::vector({3, -1});
        const DenseTensor y = layer.forward(random_vec(a, rng), random_vec(d, rng));
        CHECK(y == DenseTensor::vector({3, -1}));
    }
    SUBCASE("matches the brute-force second-order sum") {
        FusionLayer layer =
            FusionLayer::random(make_config(Variant::dense, m, a, d), rng, 1.0);
        const auto& p = std::get<DenseParams>(layer.params());
        const DenseTensor z_a = random_vec(a, rng);
        const DenseTensor z_d = random_vec(d, rng);
        const DenseTensor y = layer.forward(z_a, z_d);
        for (std::size_t i = 0; i < m; ++i) {
            double acc = p.bias(i);
            for (std::size_t q = 0; q < a; ++q) acc += p.w_a(i, q) * z_a(q);
            for (std::size_t r = 0; r < d; ++r) acc += p.w_d(i, r) * z_d(r);
            for (std::size_t q = 0; q < a; ++q)
                for (std::size_t r = 0; r < d; ++r)
                    acc += p.w_ad(i, q, r) * z_a(q) * z_d(r);
            CHECK(y(i) == doctest::Approx(acc).epsilon(1e-12));
        }
    }
    SUBCASE("first-order audio term isolates") {
        FusionLayer layer =
            FusionLayer::random(make_config(Variant::dense, 3, a, d), rng, 1.0);
        const auto& p = std::get<DenseParams>(layer.params());
        const DenseTensor z_a = random_vec(a, rng);
        const DenseTensor zero_a = DenseTensor::zeros(Shape({a}));
        const DenseTensor zero_d = DenseTensor::zeros(Shape({d}));
        const DenseTensor with = layer.forward(z_a, zero_d);
        const DenseTensor without = layer.forward(zero_a, zero_d);
        for (std::size_t i = 0; i < 3; ++i) {
            double wa = 0.0;
            for (std::size_t q = 0; q < a; ++q) wa += p.w_a(i, q) * z_a(q);
            CHECK(with(i) - without(i) == doctest::Approx(wa).epsilon(1e-12));
        }
    }
}

TEST_CASE("forward_joint_dense") {
    const std::size_t m = 3, a = 2, d = 2;
    std::mt19937_64 rng(2);
    std::normal_distribution<double> unit(0.0, 1.0);
    DenseTensor w(Shape({m, a + 1, d + 1}));
    for (double& x : w.data()) x = unit(rng);

    SUBCASE("zero inputs return exactly the bias block") {
        const DenseTensor y = forward_joint_dense(w, DenseTensor::zeros(Shape({a})),
                                                  DenseTensor::zeros(Shape({d})));
        for (std::size_t i = 0; i < m; ++i) CHECK(y(i) == w(i, a, d));
    }
    SUBCASE("equals forward_dense on the block-assembled tensor") {
        DenseParams p{DenseTensor::zeros(Shape({m})), DenseTensor::zeros(Shape({m, a})),
                      DenseTensor::zeros(Shape({m, d})),
                      DenseTensor::zeros(Shape({m, a, d}))};
        for (std::size_t i = 0; i < m; ++i) {
            p.bias(i) = w(i, a, d);
            for (std::size_t q = 0; q < a; ++q) p.w_a(i, q) = w(i, q, d);
            for (std::size_t r = 0; r < d; ++r) p.w_d(i, r) = w(i, a, r);
            for (std::size_t q = 0; q < a; ++q)
                for (std::size_t r = 0; r < d; ++r) p.w_ad(i, q, r) = w(i, q, r);
        }
        const DenseTensor z_a = random_vec(a, rng);
        const DenseTensor z_d = random_vec(d, rng);
        CHECK(max_abs_diff(forward_joint_dense(w, z_a, z_d),
                           forward_dense(p, z_a, z_d)) < 1e-12);
    }
    SUBCASE("rank-1 joint tensor factorizes the output") {
        const DenseTensor u = random_vec(m, rng);
        const DenseTensor v = random_vec(a + 1, rng);
        const DenseTensor t = random_vec(d + 1, rng);
        const DenseTensor w1 = outer_product({u, v, t});
        const DenseTensor z_a = random_vec(a, rng);
        const DenseTensor z_d = random_vec(d, rng);
        const DenseTensor y = forward_joint_dense(w1, z_a, z_d);
        const std::vector<double> pa = pad_one(z_a.data());
        const std::vector<double> pd = pad_one(z_d.data());
        double sv = 0.0, st = 0.0;
        for (std::size_t q = 0; q <= a; ++q) sv += v(q) * pa[q];
        for (std::size_t r = 0; r <= d; ++r) st += t(r) * pd[r];
        for (std::size_t i = 0; i < m; ++i) {
            CHECK(y(i) == doctest::Approx(u(i) * sv * st).epsilon(1e-12));
        }
    }
    SUBCASE("linear in the padded audio input") {
        const DenseTensor za1 = random_vec(a, rng);
        const DenseTensor za2 = random_vec(a, rng);
        DenseTensor sum(Shape({a}));
        for (std::size_t i = 0; i < a; ++i) sum.data()[i] = za1(i) + za2(i);
        const DenseTensor z_d = random_vec(d, rng);
        const DenseTensor zero = DenseTensor::zeros(Shape({a}));
        const DenseTensor lhs = forward_joint_dense(w, sum, z_d);
        const DenseTensor y1 = forward_joint_dense(w, za1, z_d);
        const DenseTensor y2 = forward_joint_dense(w, za2, z_d);
        const DenseTensor y0 = forward_joint_dense(w, zero, z_d);
        for (std::size_t i = 0; i < m; ++i) {
            CHECK(lhs(i) == doctest::Approx(y1(i) + y2(i) - y0(i)).epsilon(1e-12));
        }
    }
    SUBCASE("linear in the padded identity input") {
        const DenseTensor zd1 = random_vec(d, rng);
        const DenseTensor zd2 = random_vec(d, rng);
        DenseTensor sum(Shape({d}));
        for (std::size_t i = 0; i < d; ++i) sum.data()[i] = zd1(i) + zd2(i);
        const DenseTensor z_a = random_vec(a, rng);
        const DenseTensor zero = DenseTensor::zeros(Shape({d}));
        const DenseTensor lhs = forward_joint_dense(w, z_a, sum);
        const DenseTensor y1 = forward_joint_dense(w, z_a, zd1);
        const DenseTensor y2 = forward_joint_dense(w, z_a, zd2);
        const DenseTensor y0 = forward_joint_dense(w, z_a, zero);
        for (std::size_t i = 0; i < m; ++i) {
            CHECK(lhs(i) == doctest::Approx(y1(i) + y2(i) - y0(i)).epsilon(1e-12));
        }
    }
}

TEST_CASE("forward_cp") {
    SUBCASE("rank-1 bias block and full-phi contraction") {
        CpFactors f = CpFactors::zeros(2, 1, 1, 1);
        f.a1 = DenseTensor::from_flat(Shape({2, 1}), {1, 2});
        f.a2 = DenseTensor::from_flat(Shape({2, 1}), {3, 4});
        f.a3 = DenseTensor::from_flat(Shape({2, 1}), {5, 6});
        const DenseTensor w = cp_reconstruct(f);
        // Contracting the reconstruction with basis vectors picks W(:,1,1).
        const DenseTensor sel = mode_n_vec_product(
            mode_n_vec_product(w, 3, DenseTensor::vector({1, 0})), 2,
            DenseTensor::vector({1, 0}));
        CHECK(sel == DenseTensor::vector({15, 30}));
        // The forward pass contracts with phi: [z,1] on both sides.
        const DenseTensor z_a = DenseTensor::vector({1});
        const DenseTensor z_d = DenseTensor::vector({1});
        const DenseTensor y = forward_cp(f, z_a, z_d);
        CHECK(y(0) == doctest::Approx(1.0 * (3 + 4) * (5 + 6)).epsilon(1e-12));
        CHECK(y(1) == doctest::Approx(2.0 * (3 + 4) * (5 + 6)).epsilon(1e-12));
        CHECK(max_abs_diff(y, forward_joint_dense(w, z_a, z_d)) < 1e-12);
    }
    SUBCASE("zero factors give the zero vector") {
        const DenseTensor y = forward_cp(CpFactors::zeros(3, 2, 2, 2),
                                         DenseTensor::vector({1, 2}),
                                         DenseTensor::vector({3, 4}));
        CHECK(y == DenseTensor::zeros(Shape({3})));
    }
    SUBCASE("matches the reconstruction oracle") {
        std::mt19937_64 rng(3);
        FusionLayer layer =
            FusionLayer::random(make_config(Variant::cp, 3, 2, 2, 2), rng, 1.0);
        const auto& f = std::get<CpFactors>(layer.params());
        for (int trial = 0; trial < 50; ++trial) {
            const DenseTensor z_a = random_vec(2, rng);
            const DenseTensor z_d = random_vec(2, rng);
            CHECK(max_abs_diff(layer.forward(z_a, z_d),
                               forward_joint_dense(cp_reconstruct(f), z_a, z_d)) <
                  1e-10);
        }
    }
}

TEST_CASE("forward_tucker") {
    const std::size_t m = 3, a = 2, d = 2;
    std::mt19937_64 rng(4);
    std::normal_distribution<double> unit(0.0, 1.0);
    SUBCASE("identity factors evaluate the core as the joint tensor") {
        TuckerFactors f = TuckerFactors::zeros(m, a, d, m, a + 1, d + 1);
        for (double& x : f.core.data()) x = unit(rng);
        f.u1 = DenseTensor::identity(m);
        f.u2 = DenseTensor::identity(a + 1);
        f.u3 = DenseTensor::identity(d + 1);
        const DenseTensor z_a = random_vec(a, rng);
        const DenseTensor z_d = random_vec(d, rng);
        CHECK(max_abs_diff(forward_tucker(f, z_a, z_d),
                           forward_joint_dense(f.core, z_a, z_d)) < 1e-12);
    }
    SUBCASE("zero core gives the zero vector") {
        TuckerFactors f = TuckerFactors::zeros(m, a, d, 2, 2, 2);
        for (double& x : f.u1.data()) x = unit(rng);
        for (double& x : f.u2.data()) x = unit(rng);
        for (double& x : f.u3.data()) x = unit(rng);
        CHECK(forward_tucker(f, random_vec(a, rng), random_vec(d, rng)) ==
              DenseTensor::zeros(Shape({m})));
    }
    SUBCASE("matches the reconstruction oracle") {
        FusionLayer layer =
            FusionLayer::random(make_config(Variant::tucker, m, a, d, 2), rng, 1.0);
        const auto& f = std::get<TuckerFactors>(layer.params());
        const DenseTensor w = tucker_reconstruct(f);
        for (int trial = 0; trial < 50; ++trial) {
            const DenseTensor z_a = random_vec(a, rng);
            const DenseTensor z_d = random_vec(d, rng);
            CHECK(max_abs_diff(layer.forward(z_a, z_d),
                               forward_joint_dense(w, z_a, z_d)) < 1e-10);
        }
    }
}

TEST_CASE("forward_cmf") {
    const std::size_t m = 3, a = 2, d = 2, k = 2;
    std::mt19937_64 rng(5);
    SUBCASE("zero inputs give the bias exactly") {
        FusionLayer layer =
            FusionLayer::random(make_config(Variant::cmf, m, a, d, k), rng, 1.0);
        const auto& p = std::get<CmfParams>(layer.params());
        const DenseTensor y = layer.forward(DenseTensor::zeros(Shape({a})),
                                            DenseTensor::zeros(Shape({d})));
        CHECK(y == p.bias);
    }
    SUBCASE("matches the assembly oracle, both tying modes") {
        for (const Variant v : {Variant::cmf, Variant::cmf_sr}) {
            FusionLayer layer =
                FusionLayer::random(make_config(v, m, a, d, k), rng, 1.0);
            const auto& p = std::get<CmfParams>(layer.params());
            const DenseTensor w = cmf_assemble_dense(p, m, a, d);
            for (int trial = 0; trial < 50; ++trial) {
                const DenseTensor z_a = random_vec(a, rng);
                const DenseTensor z_d = random_vec(d, rng);
                CHECK(max_abs_diff(layer.forward(z_a, z_d),
                                   forward_joint_dense(w, z_a, z_d)) < 1e-10);
            }
        }
    }
    SUBCASE("shared rows equal copied ties bitwise") {
        FusionLayer shared =
            FusionLayer::random(make_config(Variant::cmf_sr, m, a, d, k), rng, 1.0);
        const auto& sp = std::get<CmfParams>(shared.params());
        CmfParams copied = CmfParams::zeros(m, a, d, k, false);
        copied.bias = sp.bias;
        copied.u = sp.u;
        copied.v_a = sp.v_a;
        copied.v_d = sp.v_d;
        copied.b2 = sp.v_a;
        copied.b3 = sp.v_d;
        const DenseTensor z_a = random_vec(a, rng);
        const DenseTensor z_d = random_vec(d, rng);
        CHECK(forward_cmf(sp, z_a, z_d) == forward_cmf(copied, z_a, z_d));
    }
}

TEST_CASE("concatenation") {
    SUBCASE("noise concatenation order and length") {
        const DenseTensor z = concat_noise(DenseTensor::vector({1, 2}),
                                           std::vector<double>{9});
        CHECK(z == DenseTensor::vector({1, 2, 9}));
    }
    SUBCASE("empty noise leaves the joint vector unchanged") {
        const DenseTensor z_tilde = DenseTensor::vector({4, 5, 6});
        CHECK(concat_noise(z_tilde, {}) == z_tilde);
    }
    SUBCASE("length is m + n across random sizes") {
        std::mt19937_64 rng(6);
        std::uniform_int_distribution<std::size_t> len(1, 12);
        for (int trial = 0; trial < 30; ++trial) {
            const std::size_t m = len(rng), n = len(rng) - 1;
            const DenseTensor z_tilde = random_vec(m, rng);
            const std::vector<double> z_n(n, 0.5);
            CHECK(concat_noise(z_tilde, z_n).size() == m + n);
        }
    }
    SUBCASE("paper configuration yields c = 394") {
        FusionConfig c = kPaperDense;
        c.n = 10;
        CHECK(c.concat_dim() == 394);
        std::mt19937_64 rng(7);
        const DenseTensor z_tilde = random_vec(384, rng);
        const std::vector<double> z_n(10, 0.0);
        CHECK(concat_noise(z_tilde, z_n).size() == 394);
    }
    SUBCASE("baseline concatenates the raw embeddings") {
        CHECK(forward_concat_baseline(DenseTensor::vector({1}),
                                      DenseTensor::vector({2, 3})) ==
              DenseTensor::vector({1, 2, 3}));
        std::mt19937_64 rng(8);
        CHECK(forward_concat_baseline(random_vec(256, rng), random_vec(128, rng))
                  .size() == 384);
    }
    SUBCASE("concat layer carries no parameters") {
        FusionConfig c = make_config(Variant::concat, 0, 5, 4);
        FusionLayer layer = FusionLayer::zeros(c);
        CHECK(std::holds_alternative<std::monostate>(layer.params()));
        CHECK(param_views(layer).empty());
        std::mt19937_64 rng(9);
        const DenseTensor z_a = random_vec(5, rng);
        const DenseTensor z_d = random_vec(4, rng);
        const DenseTensor y = layer.forward(z_a, z_d);
        CHECK(y.size() == 9);
        for (std::size_t i = 0; i < 5; ++i) CHECK(y(i) == z_a(i));
        for (std::size_t i = 0; i < 4; ++i) CHECK(y(5 + i) == z_d(i));
    }
}

TEST_CASE("param_count at the paper configuration") {
    CHECK(param_count(kPaperDense) == 12730752ULL);
    CHECK(param_count(make_config(Variant::cp, 384, 256, 128, 128)) == 98560ULL);
    FusionConfig tucker = make_config(Variant::tucker, 384, 256, 128);
    tucker.ranks = {192, 128, 64};
    CHECK(param_count(tucker) == 1687744ULL);
    CHECK(param_count(make_config(Variant::cmf, 384, 256, 128, 128)) == 147840ULL);
    CHECK(param_count(make_config(Variant::cmf_sr, 384, 256, 128, 128)) == 98688ULL);
    CHECK(param_count(make_config(Variant::concat, 0, 256, 128)) == 0ULL);

    SUBCASE("compression ratios") {
        const double dense = static_cast<double>(param_count(kPaperDense));
        CHECK(dense / 98560.0 == doctest::Approx(129.17).epsilon(1e-3));
        CHECK(dense / 98688.0 == doctest::Approx(129.00).epsilon(1e-3));
    }
    SUBCASE("rank-0 limit counts only unfactorized slots") {
        CHECK(param_count(make_config(Variant::cmf, 384, 256, 128, 0)) == 384ULL);
        CHECK(param_count(make_config(Variant::cmf_sr, 384, 256, 128, 0)) == 384ULL);
        CHECK(param_count(make_config(Variant::cp, 384, 256, 128, 0)) == 0ULL);
    }
    SUBCASE("counts equal stored element totals") {
        for (const Variant v :
             {Variant::dense, Variant::cp, Variant::tucker, Variant::cmf,
              Variant::cmf_sr, Variant::concat}) {
            FusionConfig c = make_config(v, v == Variant::concat ? 0 : 6, 5, 4,
                                         v == Variant::concat || v == Variant::dense
                                             ? 0
                                             : 3);
            FusionLayer layer = FusionLayer::zeros(c);
            std::uint64_t stored = 0;
            for (const auto& view : param_views(layer)) stored += view.tensor->size();
            CHECK(stored == param_count(c));
        }
    }
    SUBCASE("row sharing saves exactly the tied rows") {
        std::mt19937_64 rng(10);
        std::uniform_int_distribution<std::size_t> dim(1, 40);
        for (int trial = 0; trial < 200; ++trial) {
            const std::size_t m = dim(rng), a = dim(rng), d = dim(rng);
            std::uniform_int_distribution<std::size_t> kdist(1, std::min(a, d));
            const std::size_t k = kdist(rng);
            const auto sr = param_count(make_config(Variant::cmf_sr, m, a, d, k));
            const auto cmf = param_count(make_config(Variant::cmf, m, a, d, k));
            CHECK(sr <= cmf);
            CHECK(cmf - sr == k * (a + d));
        }
    }
}

TEST_CASE("layer construction and parameter views") {
    std::mt19937_64 rng(11);
    SUBCASE("view names follow the declared slot order") {
        FusionLayer dense = FusionLayer::zeros(make_config(Variant::dense, 3, 2, 2));
        const auto dv = param_views(dense);
        REQUIRE(dv.size() == 4);
        CHECK(dv[0].name == "b");
        CHECK(dv[1].name == "W_a");
        CHECK(dv[2].name == "W_d");
        CHECK(dv[3].name == "W_ad");

        FusionLayer cmf = FusionLayer::zeros(make_config(Variant::cmf, 3, 2, 2, 2));
        const auto cv = param_views(cmf);
        REQUIRE(cv.size() == 6);
        CHECK(cv[4].name == "B2");
        CHECK(cv[5].name == "B3");

        FusionLayer sr = FusionLayer::zeros(make_config(Variant::cmf_sr, 3, 2, 2, 2));
        CHECK(param_views(sr).size() == 4);
    }
    SUBCASE("tied views alias the stored arrays") {
        FusionLayer sr =
            FusionLayer::random(make_config(Variant::cmf_sr, 3, 2, 2, 2), rng, 1.0);
        auto& p = std::get<CmfParams>(sr.params());
        const auto views = param_views(sr);
        bool found = false;
        for (const auto& v : views) {
            if (v.name == "V_a") {
                CHECK(v.tensor == &p.v_a);
                found = true;
            }
        }
        CHECK(found);
        CHECK(&p.mode2() == &p.v_a);
    }
    SUBCASE("random layers are reproducible from the generator") {
        const FusionConfig c = make_config(Variant::cp, 3, 2, 2, 2);
        std::mt19937_64 r1(42), r2(42);
        FusionLayer l1 = FusionLayer::random(c, r1, 0.02);
        FusionLayer l2 = FusionLayer::random(c, r2, 0.02);
        const DenseTensor z_a = random_vec(2, rng);
        const DenseTensor z_d = random_vec(2, rng);
        CHECK(l1.forward(z_a, z_d) == l2.forward(z_a, z_d));
    }
    SUBCASE("from_joint_tensor is dense-only") {
        DenseTensor w(Shape({3, 3, 3}));
        CHECK_NOTHROW(FusionLayer::from_joint_tensor(make_config(Variant::dense, 3, 2, 2),
                                                     w));
        CHECK_THROWS_AS(
            FusionLayer::from_joint_tensor(make_config(Variant::cp, 3, 2, 2, 2), w),
            std::invalid_argument);
    }
    SUBCASE("mismatched parameter shapes are rejected") {
        CHECK_THROWS_AS(FusionLayer(make_config(Variant::cp, 3, 2, 2, 2),
                                    CpFactors::zeros(3, 2, 2, 3)),
                        std::invalid_argument);
        CHECK_THROWS_AS(FusionLayer(make_config(Variant::concat, 0, 2, 2),
                                    CpFactors::zeros(3, 2, 2, 2)),
                        std::invalid_argument);
    }
    SUBCASE("forward rejects wrong input lengths") {
        FusionLayer layer = FusionLayer::zeros(make_config(Variant::dense, 3, 2, 2));
        CHECK_THROWS_AS(layer.forward(DenseTensor::vector({1, 2, 3}),
                                      DenseTensor::vector({1, 2})),
                        std::invalid_argument);
    }
}
