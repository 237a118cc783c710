#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace retgan {

/// Dense row-major tensor of 64-bit floats. Value-semantic; shape is a list
/// of positive extents and product(shape) == data.size() always holds.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);  // zero-filled
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<std::size_t> shape, double v);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // rank-2 helpers
  std::size_t rows() const;
  std::size_t cols() const;
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  bool is_scalar() const { return data_.size() == 1; }
  double scalar_value() const;

  /// Same data, new shape; element count must match.
  Tensor reshaped(std::vector<std::size_t> shape) const;

  void fill(double v);

  std::string shape_str() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::string shape_to_string(const std::vector<std::size_t>& shape);

/// FNV-1a over the raw bytes of all tensors, in order. Used by the
/// freeze-checks (encoder parameters must be bit-identical before/after
/// training) and the determinism harnesses.
std::uint64_t bit_checksum(const Tensor& t);
std::uint64_t bit_checksum(const std::vector<const Tensor*>& ts);

}  // namespace retgan
