#include "retgan/rng.hpp"

#include <cmath>

#include "retgan/check.hpp"

namespace retgan {

namespace {
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

std::uint64_t mix64(std::uint64_t x) {
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}
}  // namespace

std::uint64_t Rng::next_u64() {
  ++ctr_;
  return mix64(key_ + ctr_ * kGolden);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t Rng::below(std::uint64_t n) {
  RETGAN_CHECK(n > 0, "Rng::below(0)");
  // Rejection-free modulo is fine here: n is tiny relative to 2^64, the bias
  // is below 2^-50.
  return next_u64() % n;
}

double Rng::normal() {
  // Box-Muller, cosine branch. u1 nudged away from 0 so log stays finite.
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1 > 0.0 ? u1 : 0x1.0p-53));
  return r * std::cos(6.283185307179586476925286766559 * u2);
}

Rng Rng::fork(std::uint64_t domain, std::uint64_t index) const {
  return Rng(mix64(mix64(key_ ^ domain * kGolden) ^ index * kGolden));
}

}  // namespace retgan
