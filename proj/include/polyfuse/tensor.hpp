#pragma once

#include <array>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace polyfuse {

/// Dimensions (I_1,...,I_N) of an order-N tensor, N >= 1, every I_n >= 1.
/// The element count prod I_n is validated against overflow at construction.
class Shape {
public:
    Shape(std::initializer_list<std::size_t> dims);
    explicit Shape(std::vector<std::size_t> dims);

    std::size_t order() const { return dims_.size(); }
    /// I_axis with 1-based axis numbering, matching the mode numbering.
    std::size_t dim(std::size_t axis) const {
        if (axis < 1 || axis > dims_.size()) {
            throw std::invalid_argument("Shape::dim: axis out of range");
        }
        return dims_[axis - 1];
    }
    const std::vector<std::size_t>& dims() const { return dims_; }
    std::size_t element_count() const { return count_; }

    bool operator==(const Shape& other) const { return dims_ == other.dims_; }
    bool operator!=(const Shape& other) const { return !(*this == other); }

    std::string to_string() const;

private:
    std::vector<std::size_t> dims_;
    std::size_t count_ = 0;
};

/// Dense order-N tensor of 64-bit reals. The first index varies fastest in
/// the flat buffer: element (i_1,...,i_N), 0-based, sits at flat offset
/// i_1 + i_2*I_1 + i_3*I_1*I_2 + ... so order-2 tensors are column-major
/// matrices. Order-1 and order-2 tensors serve as the library's vectors and
/// matrices. All operations return fresh values; nothing aliases.
class DenseTensor {
public:
    DenseTensor() : shape_({1}), data_(1, 0.0) {}
    explicit DenseTensor(Shape shape);  // zero-filled

    /// Builds a tensor from a flat buffer already in the stated layout.
    /// Throws std::invalid_argument on length mismatch or non-finite entries.
    static DenseTensor from_flat(Shape shape, std::vector<double> data);

    static DenseTensor zeros(Shape shape) { return DenseTensor(std::move(shape)); }
    static DenseTensor vector(std::vector<double> entries);
    /// Order-2 tensor from rows given in reading order.
    static DenseTensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static DenseTensor identity(std::size_t n);

    const Shape& shape() const { return shape_; }
    std::size_t order() const { return shape_.order(); }
    /// I_axis, 1-based like Shape::dim.
    std::size_t dim(std::size_t axis) const { return shape_.dim(axis); }
    std::size_t size() const { return data_.size(); }

    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }

    double at(std::span<const std::size_t> index) const;
    double& at(std::span<const std::size_t> index);

    template <typename... Ix>
    double operator()(Ix... ix) const {
        const std::array<std::size_t, sizeof...(Ix)> idx{static_cast<std::size_t>(ix)...};
        return at(idx);
    }
    template <typename... Ix>
    double& operator()(Ix... ix) {
        const std::array<std::size_t, sizeof...(Ix)> idx{static_cast<std::size_t>(ix)...};
        return at(idx);
    }

    bool operator==(const DenseTensor& other) const {
        return shape_ == other.shape_ && data_ == other.data_;
    }

private:
    std::size_t offset_of(std::span<const std::size_t> index) const;

    Shape shape_;
    std::vector<double> data_;
};

/// Mode-n unfolding X_(n), an I_n x (prod_{k!=n} I_k) matrix. Modes are
/// 1-based, matching the x_n notation. Element (i_1,...,i_N) lands in row
/// i_n, column sum_{k!=n} i_k * prod_{m<k, m!=n} I_m (0-based form of the
/// kolda2009 convention).
DenseTensor unfold(const DenseTensor& x, std::size_t mode);

/// Inverse of unfold: fold(unfold(x, n), n, x.shape()) == x bitwise.
DenseTensor fold(const DenseTensor& m, std::size_t mode, const Shape& shape);

/// Mode-n vector product X x_n v, contracting mode n. The result has order
/// N-1; an order-1 operand yields a length-1 order-1 tensor holding the dot
/// product (callers extract the scalar).
DenseTensor mode_n_vec_product(const DenseTensor& x, std::size_t mode, const DenseTensor& v);

/// Mode-n matrix product X x_n M with M of size p x I_n; mode n is replaced
/// by p. Satisfies result_(n) = M * X_(n).
DenseTensor mode_n_mat_product(const DenseTensor& x, std::size_t mode, const DenseTensor& m);

/// Outer product of N vectors: element (i_1,...,i_N) = prod_n v_n(i_n).
DenseTensor outer_product(const std::vector<DenseTensor>& vectors);

/// Kronecker product of two matrices; block (i,j) of the result is A(i,j)*B.
DenseTensor kronecker(const DenseTensor& a, const DenseTensor& b);

/// Khatri-Rao (columnwise Kronecker) product of I x K and J x K matrices.
DenseTensor khatri_rao(const DenseTensor& a, const DenseTensor& b);

double frobenius_norm(const DenseTensor& x);

DenseTensor matmul(const DenseTensor& a, const DenseTensor& b);
DenseTensor transpose(const DenseTensor& a);

}  // namespace polyfuse
