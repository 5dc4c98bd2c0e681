#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "polyfuse/tensor.hpp"

namespace polyfuse {

/// CP factors of the joint parameter tensor: a1 is m x k, a2 is (a+1) x k,
/// a3 is (d+1) x k, all sharing the rank (column count) k.
struct CpFactors {
    DenseTensor a1, a2, a3;

    std::size_t rank() const { return a1.dim(2); }
    static CpFactors zeros(std::size_t m, std::size_t a, std::size_t d, std::size_t k);
    void validate() const;
};

/// Tucker core g (k1 x k2 x k3) with factor matrices u1 (m x k1),
/// u2 ((a+1) x k2), u3 ((d+1) x k3).
struct TuckerFactors {
    DenseTensor core, u1, u2, u3;

    std::size_t rank(std::size_t mode) const { return core.dim(mode); }
    static TuckerFactors zeros(std::size_t m, std::size_t a, std::size_t d,
                               std::size_t k1, std::size_t k2, std::size_t k3);
    void validate() const;
};

/// Coupled matrix-tensor parameters. u (m x k) is the column space shared by
/// both first-order maps and the bilinear tensor's mode-1 factor (never stored
/// twice); v_a (a x k) and v_d (d x k) are the row spaces. b2/b3 are the
/// bilinear mode-2/3 factors; with shared_rows they are v_a/v_d themselves
/// (tied storage read through mode2()/mode3(), not copies).
struct CmfParams {
    DenseTensor bias;  // length m, kept outside the factorization
    DenseTensor u;
    DenseTensor v_a, v_d;
    std::optional<DenseTensor> b2, b3;  // disengaged iff shared_rows
    bool shared_rows = false;

    const DenseTensor& mode2() const { return shared_rows ? v_a : *b2; }
    const DenseTensor& mode3() const { return shared_rows ? v_d : *b3; }
    std::size_t rank() const { return u.dim(2); }
    static CmfParams zeros(std::size_t m, std::size_t a, std::size_t d, std::size_t k,
                           bool shared_rows);
    void validate() const;
};

/// Dense m x (a+1) x (d+1) tensor of the CP factors, summed over rank-1
/// components a1(:,r) o a2(:,r) o a3(:,r).
DenseTensor cp_reconstruct(const CpFactors& f);

/// Dense tensor of the Tucker factors via sequential mode-n matrix products
/// of the core.
DenseTensor tucker_reconstruct(const TuckerFactors& f);

/// Dense joint tensor of the CMF parameters, dims (m, a, d) as declared:
/// slice (:, a, d) holds the bias, (:, 0:a, d) holds u*v_a^T, (:, a, 0:d)
/// holds u*v_d^T, and (:, 0:a, 0:d) holds the bilinear CP tensor with
/// factors (u, mode2, mode3). Test oracle only; forward passes never build it.
DenseTensor cmf_assemble_dense(const CmfParams& p, std::size_t m, std::size_t a,
                               std::size_t d);

/// phi(x) = [x, 1]: copy of x with a trailing one appended.
std::vector<double> pad_one(std::span<const double> x);
DenseTensor pad_one(const DenseTensor& x);

}  // namespace polyfuse
