#include "polyfuse/tensor.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace polyfuse {

namespace {

[[noreturn]] void fail(const std::string& what) { throw std::invalid_argument(what); }

void require(bool cond, const std::string& what) {
    if (!cond) fail(what);
}

void require_finite(std::span<const double> values, const char* where) {
    for (double v : values) {
        if (!std::isfinite(v)) fail(std::string(where) + ": non-finite entry");
    }
}

// Sizes of the index blocks below, at, and above one axis. Every mode-wise
// operation reduces to loops over (left, axis, right).
struct AxisSplit {
    std::size_t left = 1;
    std::size_t mid = 1;
    std::size_t right = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t mode) {
    require(mode >= 1 && mode <= shape.order(),
            "mode " + std::to_string(mode) + " out of range for order-" +
                std::to_string(shape.order()) + " tensor");
    AxisSplit s;
    const std::vector<std::size_t>& dims = shape.dims();
    const std::size_t axis = mode - 1;
    for (std::size_t k = 0; k < axis; ++k) s.left *= dims[k];
    s.mid = dims[axis];
    for (std::size_t k = axis + 1; k < shape.order(); ++k) s.right *= dims[k];
    return s;
}

}  // namespace

Shape::Shape(std::initializer_list<std::size_t> dims)
    : Shape(std::vector<std::size_t>(dims)) {}

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    require(!dims_.empty(), "Shape: order must be >= 1");
    count_ = 1;
    for (std::size_t d : dims_) {
        require(d >= 1, "Shape: every dimension must be >= 1");
        if (count_ > std::numeric_limits<std::size_t>::max() / d) {
            fail("Shape: element count overflows");
        }
        count_ *= d;
    }
}

std::string Shape::to_string() const {
    std::ostringstream out;
    out << '(';
    for (std::size_t k = 0; k < dims_.size(); ++k) {
        if (k) out << ", ";
        out << dims_[k];
    }
    out << ')';
    return out.str();
}

DenseTensor::DenseTensor(Shape shape)
    : shape_(std::move(shape)), data_(shape_.element_count(), 0.0) {}

DenseTensor DenseTensor::from_flat(Shape shape, std::vector<double> data) {
    require(data.size() == shape.element_count(),
            "from_flat: data length " + std::to_string(data.size()) +
                " does not match shape " + shape.to_string());
    require_finite(data, "from_flat");
    DenseTensor t(std::move(shape));
    t.data_ = std::move(data);
    return t;
}

DenseTensor DenseTensor::vector(std::vector<double> entries) {
    const std::size_t len = entries.size();
    return from_flat(Shape{len}, std::move(entries));
}

DenseTensor DenseTensor::from_rows(
    std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    require(r >= 1, "from_rows: no rows");
    const std::size_t c = rows.begin()->size();
    DenseTensor t(Shape{r, c});
    std::size_t i = 0;
    for (const auto& row : rows) {
        require(row.size() == c, "from_rows: ragged rows");
        std::size_t j = 0;
        for (double v : row) t.data_[i + j++ * r] = v;
        ++i;
    }
    require_finite(t.data_, "from_rows");
    return t;
}

DenseTensor DenseTensor::identity(std::size_t n) {
    DenseTensor t(Shape{n, n});
    for (std::size_t i = 0; i < n; ++i) t.data_[i + i * n] = 1.0;
    return t;
}

std::size_t DenseTensor::offset_of(std::span<const std::size_t> index) const {
    require(index.size() == order(),
            "index of rank " + std::to_string(index.size()) +
                " into order-" + std::to_string(order()) + " tensor");
    std::size_t off = 0;
    std::size_t stride = 1;
    const std::vector<std::size_t>& dims = shape_.dims();
    for (std::size_t k = 0; k < index.size(); ++k) {
        require(index[k] < dims[k], "index out of bounds at axis " + std::to_string(k));
        off += index[k] * stride;
        stride *= dims[k];
    }
    return off;
}

double DenseTensor::at(std::span<const std::size_t> index) const {
    return data_[offset_of(index)];
}

double& DenseTensor::at(std::span<const std::size_t> index) {
    return data_[offset_of(index)];
}

DenseTensor unfold(const DenseTensor& x, std::size_t mode) {
    const AxisSplit s = split_at(x.shape(), mode);
    DenseTensor out(Shape{s.mid, s.left * s.right});
    std::span<const double> src = x.data();
    std::span<double> dst = out.data();
    for (std::size_t r = 0; r < s.right; ++r) {
        for (std::size_t j = 0; j < s.mid; ++j) {
            const std::size_t src_base = j * s.left + r * s.left * s.mid;
            const std::size_t dst_base = j + r * s.left * s.mid;
            for (std::size_t l = 0; l < s.left; ++l) {
                dst[dst_base + l * s.mid] = src[src_base + l];
            }
        }
    }
    return out;
}

DenseTensor fold(const DenseTensor& m, std::size_t mode, const Shape& shape) {
    require(m.order() == 2, "fold: input must be order 2");
    const AxisSplit s = split_at(shape, mode);
    require(m.dim(1) == s.mid && m.dim(2) == s.left * s.right,
            "fold: matrix dims " + m.shape().to_string() +
                " do not match target shape " + shape.to_string() + " at mode " +
                std::to_string(mode));
    DenseTensor out(shape);
    std::span<const double> src = m.data();
    std::span<double> dst = out.data();
    for (std::size_t r = 0; r < s.right; ++r) {
        for (std::size_t j = 0; j < s.mid; ++j) {
            const std::size_t src_base = j + r * s.left * s.mid;
            const std::size_t dst_base = j * s.left + r * s.left * s.mid;
            for (std::size_t l = 0; l < s.left; ++l) {
                dst[dst_base + l] = src[src_base + l * s.mid];
            }
        }
    }
    return out;
}

DenseTensor mode_n_vec_product(const DenseTensor& x, std::size_t mode,
                               const DenseTensor& v) {
    require(v.order() == 1, "mode_n_vec_product: v must be order 1");
    const AxisSplit s = split_at(x.shape(), mode);
    require(v.size() == s.mid,
            "mode_n_vec_product: vector length " + std::to_string(v.size()) +
                " does not match mode-" + std::to_string(mode) + " dim " +
                std::to_string(s.mid));

    std::vector<std::size_t> dims;
    for (std::size_t k = 0; k < x.order(); ++k) {
        if (k != mode - 1) dims.push_back(x.shape().dims()[k]);
    }
    if (dims.empty()) dims.push_back(1);  // order-1 operand: scalar as length-1 vector

    DenseTensor out{Shape(std::move(dims))};
    std::span<const double> src = x.data();
    std::span<const double> w = v.data();
    std::span<double> dst = out.data();
    for (std::size_t r = 0; r < s.right; ++r) {
        for (std::size_t j = 0; j < s.mid; ++j) {
            const double vj = w[j];
            const std::size_t src_base = j * s.left + r * s.left * s.mid;
            const std::size_t dst_base = r * s.left;
            for (std::size_t l = 0; l < s.left; ++l) {
                dst[dst_base + l] += src[src_base + l] * vj;
            }
        }
    }
    return out;
}

DenseTensor mode_n_mat_product(const DenseTensor& x, std::size_t mode,
                               const DenseTensor& m) {
    require(m.order() == 2, "mode_n_mat_product: m must be order 2");
    const AxisSplit s = split_at(x.shape(), mode);
    require(m.dim(2) == s.mid,
            "mode_n_mat_product: matrix cols " + std::to_string(m.dim(2)) +
                " do not match mode-" + std::to_string(mode) + " dim " +
                std::to_string(s.mid));
    const std::size_t p = m.dim(1);

    std::vector<std::size_t> dims = x.shape().dims();
    dims[mode - 1] = p;
    DenseTensor out{Shape(std::move(dims))};

    std::span<const double> src = x.data();
    std::span<const double> mm = m.data();
    std::span<double> dst = out.data();
    for (std::size_t r = 0; r < s.right; ++r) {
        for (std::size_t j = 0; j < s.mid; ++j) {
            const std::size_t src_base = j * s.left + r * s.left * s.mid;
            for (std::size_t q = 0; q < p; ++q) {
                const double mqj = mm[q + j * p];
                const std::size_t dst_base = q * s.left + r * s.left * p;
                for (std::size_t l = 0; l < s.left; ++l) {
                    dst[dst_base + l] += src[src_base + l] * mqj;
                }
            }
        }
    }
    return out;
}

DenseTensor outer_product(const std::vector<DenseTensor>& vectors) {
    require(!vectors.empty(), "outer_product: empty vector list");
    for (const DenseTensor& v : vectors) {
        require(v.order() == 1, "outer_product: all operands must be order 1");
    }
    // Appending each vector as a new slowest index keeps earlier indices fastest.
    std::vector<double> acc(vectors[0].data().begin(), vectors[0].data().end());
    std::vector<std::size_t> dims{vectors[0].size()};
    for (std::size_t k = 1; k < vectors.size(); ++k) {
        std::span<const double> v = vectors[k].data();
        std::vector<double> next(acc.size() * v.size());
        for (std::size_t j = 0; j < v.size(); ++j) {
            for (std::size_t i = 0; i < acc.size(); ++i) {
                next[i + j * acc.size()] = acc[i] * v[j];
            }
        }
        acc = std::move(next);
        dims.push_back(v.size());
    }
    return DenseTensor::from_flat(Shape(std::move(dims)), std::move(acc));
}

DenseTensor kronecker(const DenseTensor& a, const DenseTensor& b) {
    require(a.order() == 2 && b.order() == 2, "kronecker: operands must be order 2");
    const std::size_t ia = a.dim(1), ja = a.dim(2);
    const std::size_t ib = b.dim(1), jb = b.dim(2);
    DenseTensor out(Shape{ia * ib, ja * jb});
    for (std::size_t qa = 0; qa < ja; ++qa) {
        for (std::size_t qb = 0; qb < jb; ++qb) {
            for (std::size_t pa = 0; pa < ia; ++pa) {
                const double apq = a(pa, qa);
                for (std::size_t pb = 0; pb < ib; ++pb) {
                    out(pa * ib + pb, qa * jb + qb) = apq * b(pb, qb);
                }
            }
        }
    }
    return out;
}

DenseTensor khatri_rao(const DenseTensor& a, const DenseTensor& b) {
    require(a.order() == 2 && b.order() == 2, "khatri_rao: operands must be order 2");
    require(a.dim(2) == b.dim(2),
            "khatri_rao: column counts differ (" + std::to_string(a.dim(2)) + " vs " +
                std::to_string(b.dim(2)) + ")");
    const std::size_t ia = a.dim(1), ib = b.dim(1), k = a.dim(2);
    DenseTensor out(Shape{ia * ib, k});
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t pa = 0; pa < ia; ++pa) {
            const double av = a(pa, c);
            for (std::size_t pb = 0; pb < ib; ++pb) {
                out(pa * ib + pb, c) = av * b(pb, c);
            }
        }
    }
    return out;
}

double frobenius_norm(const DenseTensor& x) {
    double sum = 0.0;
    for (double v : x.data()) sum += v * v;
    return std::sqrt(sum);
}

DenseTensor matmul(const DenseTensor& a, const DenseTensor& b) {
    require(a.order() == 2 && b.order() == 2, "matmul: operands must be order 2");
    require(a.dim(2) == b.dim(1),
            "matmul: inner dims differ (" + std::to_string(a.dim(2)) + " vs " +
                std::to_string(b.dim(1)) + ")");
    const std::size_t rows = a.dim(1), inner = a.dim(2), cols = b.dim(2);
    DenseTensor out(Shape{rows, cols});
    std::span<const double> ad = a.data();
    std::span<const double> bd = b.data();
    std::span<double> od = out.data();
    for (std::size_t j = 0; j < cols; ++j) {
        for (std::size_t t = 0; t < inner; ++t) {
            const double btj = bd[t + j * inner];
            const std::size_t a_base = t * rows;
            const std::size_t o_base = j * rows;
            for (std::size_t i = 0; i < rows; ++i) {
                od[o_base + i] += ad[a_base + i] * btj;
            }
        }
    }
    return out;
}

DenseTensor transpose(const DenseTensor& a) {
    require(a.order() == 2, "transpose: operand must be order 2");
    const std::size_t rows = a.dim(1), cols = a.dim(2);
    DenseTensor out(Shape{cols, rows});
    for (std::size_t j = 0; j < cols; ++j) {
        for (std::size_t i = 0; i < rows; ++i) out(j, i) = a(i, j);
    }
    return out;
}

}  // namespace polyfuse
