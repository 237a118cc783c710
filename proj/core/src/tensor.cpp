#include "retgan/tensor.hpp"

#include <cmath>

#include "retgan/check.hpp"

namespace retgan {

namespace {
std::size_t checked_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    RETGAN_CHECK(d > 0, "tensor shape has zero extent: " << shape_to_string(shape));
    n *= d;
  }
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(checked_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  RETGAN_CHECK(checked_product(shape_) == data_.size(),
               "tensor data length " << data_.size() << " does not match shape "
                                     << shape_to_string(shape_));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

std::size_t Tensor::rows() const {
  RETGAN_CHECK(rank() == 2, "rows() needs a rank-2 tensor, got " << shape_str());
  return shape_[0];
}

std::size_t Tensor::cols() const {
  RETGAN_CHECK(rank() == 2, "cols() needs a rank-2 tensor, got " << shape_str());
  return shape_[1];
}

double& Tensor::at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
double Tensor::at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

double Tensor::scalar_value() const {
  RETGAN_CHECK(is_scalar(), "expected scalar tensor, got shape " << shape_str());
  return data_[0];
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  RETGAN_CHECK(checked_product(shape) == data_.size(),
               "reshape " << shape_str() << " -> " << shape_to_string(shape)
                          << " changes element count");
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

std::string shape_to_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::uint64_t bit_checksum(const Tensor& t) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint64_t word) {
    for (int b = 0; b < 8; ++b) {
      h ^= (word >> (8 * b)) & 0xffu;
      h *= 1099511628211ull;
    }
  };
  for (std::size_t d : t.shape()) mix(static_cast<std::uint64_t>(d));
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::uint64_t w;
    static_assert(sizeof(double) == sizeof(std::uint64_t));
    const double v = t[i];
    __builtin_memcpy(&w, &v, 8);
    mix(w);
  }
  return h;
}

std::uint64_t bit_checksum(const std::vector<const Tensor*>& ts) {
  std::uint64_t h = 0x9e3779b97f4a7c15ull;
  for (const Tensor* t : ts) h = h * 0x100000001b3ull ^ bit_checksum(*t);
  return h;
}

}  // namespace retgan
