#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace hybridnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& dims);
std::string shape_to_string(const Shape& dims);

/// Dense row-major array of doubles.
///
/// Construction from explicit data rejects NaN/Inf. Copies are deep; a Tensor
/// shared between threads is only read. `mutable_data()` exists for kernels
/// that fill a freshly allocated output and for optimizer updates.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape dims);
  Tensor(Shape dims, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor filled(Shape dims, double value);

  const Shape& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const noexcept { return data_.size(); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> mutable_data() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double item() const;

  // Row-major accessors for rank 3 / 4 tensors.
  double at(std::size_t c, std::size_t y, std::size_t x) const;
  double at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const;

  Tensor reshaped(Shape dims) const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape dims_;
  std::vector<double> data_;
};

// Throws NumericError if any value is NaN or infinite.
void require_finite(std::span<const double> values, const char* context);

}  // namespace hybridnet
