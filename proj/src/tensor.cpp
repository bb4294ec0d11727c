#include "swm/tensor.hpp"

#include <atomic>
#include <numeric>
#include <sstream>

namespace swm {

namespace {
std::atomic<bool> g_checked{true};

std::int64_t shape_product(const Shape& shape) {
    std::int64_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}
}  // namespace

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << "]";
    return os.str();
}

void Tensor::set_checked(bool on) { g_checked.store(on); }
bool Tensor::checked() { return g_checked.load(); }

Tensor::Tensor(Shape shape, std::vector<real> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    cols_ = shape_.empty() ? 1 : shape_.back();
}

Tensor Tensor::zeros(Shape shape) {
    for (auto e : shape) {
        if (e < 0) throw ShapeError("tensor extents must be non-negative, got " + shape_str(shape));
    }
    auto n = shape_product(shape);
    return Tensor(std::move(shape), std::vector<real>(static_cast<std::size_t>(n), real(0)));
}

Tensor Tensor::full(Shape shape, real value) {
    Tensor t = zeros(std::move(shape));
    for (auto& v : t.data_) v = value;
    if (checked()) t.require_finite("Tensor::full");
    return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<real> data) {
    for (auto e : shape) {
        if (e < 0) throw ShapeError("tensor extents must be non-negative, got " + shape_str(shape));
    }
    if (shape_product(shape) != static_cast<std::int64_t>(data.size())) {
        throw ShapeError("tensor data size " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
    }
    Tensor t(std::move(shape), std::move(data));
    if (checked()) t.require_finite("Tensor::from_data");
    return t;
}

Tensor Tensor::scalar(real value) { return from_data({1}, {value}); }

Tensor Tensor::vector(std::initializer_list<real> values) {
    return from_data({static_cast<std::int64_t>(values.size())}, std::vector<real>(values));
}

Tensor Tensor::vector(std::vector<real> values) {
    auto n = static_cast<std::int64_t>(values.size());
    return from_data({n}, std::move(values));
}

std::int64_t Tensor::extent(std::int64_t axis) const {
    if (axis < 0 || axis >= rank()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape_));
    }
    return shape_[static_cast<std::size_t>(axis)];
}

std::int64_t Tensor::rows() const {
    if (rank() == 1) return 1;
    if (rank() == 2) return shape_[0];
    throw ShapeError("rows() expects rank 1 or 2, got " + shape_str(shape_));
}

std::int64_t Tensor::cols() const {
    if (rank() == 0) throw ShapeError("cols() on empty tensor");
    return shape_.back();
}

bool Tensor::all_finite() const {
    for (auto v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::require_finite(const std::string& context) const {
    if (!all_finite()) throw NumericError(context + ": non-finite value in tensor " + shape_str(shape_));
}

void require_rank(const Tensor& t, std::int64_t rank, const std::string& context) {
    if (t.rank() != rank) {
        throw ShapeError(context + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(t.shape()));
    }
}

void require_shape(const Tensor& t, const Shape& shape, const std::string& context) {
    if (t.shape() != shape) {
        throw ShapeError(context + ": expected shape " + shape_str(shape) + ", got " +
                         shape_str(t.shape()));
    }
}

}  // namespace swm
