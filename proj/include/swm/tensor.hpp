#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "swm/errors.hpp"

namespace swm {

#ifdef SWM_SINGLE_PRECISION
using real = float;
#else
using real = double;
#endif

using Shape = std::vector<std::int64_t>;

std::string shape_str(const Shape& s);

// Dense row-major value tensor. Copyable value type; all module state is
// built out of these. Checked factories reject non-finite data.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, real value);
    static Tensor from_data(Shape shape, std::vector<real> data);
    static Tensor scalar(real value);
    // 1-D convenience.
    static Tensor vector(std::initializer_list<real> values);
    static Tensor vector(std::vector<real> values);

    // Global toggle for finite-validation at construction. On by default;
    // benchmarks may disable it.
    static void set_checked(bool on);
    static bool checked();

    const Shape& shape() const { return shape_; }
    std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    std::int64_t extent(std::int64_t axis) const;
    // Rows/cols of a rank-2 tensor (rank-1 counts as a single row).
    std::int64_t rows() const;
    std::int64_t cols() const;

    bool empty() const { return data_.empty(); }

    real* data() { return data_.data(); }
    const real* data() const { return data_.data(); }
    std::span<real> values() { return data_; }
    std::span<const real> values() const { return data_; }

    real& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    real operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    real& at(std::int64_t i, std::int64_t j) { return data_[static_cast<std::size_t>(i * cols_ + j)]; }
    real at(std::int64_t i, std::int64_t j) const { return data_[static_cast<std::size_t>(i * cols_ + j)]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    // Throws NumericError if any value is non-finite.
    void require_finite(const std::string& context) const;

    std::size_t byte_size() const { return data_.size() * sizeof(real); }

private:
    Tensor(Shape shape, std::vector<real> data);

    Shape shape_;
    std::vector<real> data_;
    std::int64_t cols_ = 0;  // innermost extent, cached for 2-D indexing
};

// Shape checks used across modules.
void require_rank(const Tensor& t, std::int64_t rank, const std::string& context);
void require_shape(const Tensor& t, const Shape& shape, const std::string& context);

}  // namespace swm
