#include "simnet/tensor.hpp"

#include <cmath>
#include <sstream>

namespace simnet {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {

void validate_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > 2) {
    throw ShapeError("tensor: rank must be 1 or 2, got shape " + shape_str(shape));
  }
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor: zero-sized dimension in " + shape_str(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  validate_shape(shape_);
  values_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  validate_shape(shape_);
  if (values_.size() != shape_size(shape_)) {
    throw ShapeError("tensor: shape " + shape_str(shape_) + " needs " +
                     std::to_string(shape_size(shape_)) + " values, got " +
                     std::to_string(values_.size()));
  }
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::vector(std::vector<double> values) {
  const auto n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  std::vector<double> v;
  std::size_t cols = rows.size() ? rows.begin()->size() : 0;
  for (const auto& r : rows) {
    if (r.size() != cols) throw ShapeError("tensor: ragged matrix literal");
    v.insert(v.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(v));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

Tensor Tensor::scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

Tensor Tensor::column(std::size_t c) const {
  Tensor out({rows()});
  for (std::size_t r = 0; r < rows(); ++r) out[r] = at(r, c);
  return out;
}

Tensor Tensor::transposed() const {
  Tensor out({cols(), rows()});
  for (std::size_t r = 0; r < rows(); ++r)
    for (std::size_t c = 0; c < cols(); ++c) out.at(c, r) = at(r, c);
  return out;
}

bool Tensor::all_finite() const {
  for (double v : values_)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace simnet
