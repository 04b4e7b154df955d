#include "hybridnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hybridnet/errors.hpp"

namespace hybridnet {

std::size_t shape_numel(const Shape& dims) {
  std::size_t n = 1;
  for (std::size_t d : dims) n *= d;
  return n;
}

std::string shape_to_string(const Shape& dims) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out << 'x';
    out << dims[i];
  }
  out << ']';
  return out.str();
}

void require_finite(std::span<const double> values, const char* context) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError(std::string(context) + ": non-finite value at index " + std::to_string(i));
    }
  }
}

Tensor::Tensor(Shape dims) : dims_(std::move(dims)), data_(shape_numel(dims_), 0.0) {}

Tensor::Tensor(Shape dims, std::vector<double> data) : dims_(std::move(dims)), data_(std::move(data)) {
  if (data_.size() != shape_numel(dims_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match dims " +
                     shape_to_string(dims_));
  }
  require_finite(data_, "tensor construction");
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::filled(Shape dims, double value) {
  Tensor t(std::move(dims));
  require_finite({&value, 1}, "tensor fill");
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= dims_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for dims " + shape_to_string(dims_));
  }
  return dims_[axis];
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor with dims " + shape_to_string(dims_));
  return data_[0];
}

double Tensor::at(std::size_t c, std::size_t y, std::size_t x) const {
  return data_[(c * dims_[1] + y) * dims_[2] + x];
}

double Tensor::at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
  return data_[((n * dims_[1] + c) * dims_[2] + y) * dims_[3] + x];
}

Tensor Tensor::reshaped(Shape dims) const {
  if (shape_numel(dims) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_to_string(dims_) + " to " + shape_to_string(dims));
  }
  Tensor t;
  t.dims_ = std::move(dims);
  t.data_ = data_;
  return t;
}

}  // namespace hybridnet
