#include "retgan/math.hpp"

#include <cmath>

#include "retgan/check.hpp"

#ifdef RETGAN_HAVE_OPENBLAS
#include <cblas.h>
extern "C" void openblas_set_num_threads(int);
#endif

namespace retgan::num {

namespace {

#ifdef RETGAN_HAVE_OPENBLAS
struct BlasSingleThread {
  BlasSingleThread() { openblas_set_num_threads(1); }
};
const BlasSingleThread blas_init;
#else
// Fallback kernel: i-k-j loop order so the inner loop streams rows of B.
void gemm_fallback(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
                   double alpha, const double* a, std::size_t lda, const double* b,
                   std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * ldc;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = alpha * (ta ? a[p * lda + i] : a[i * lda + p]);
      if (av == 0.0) continue;
      const double* brow = tb ? nullptr : b + p * ldb;
      if (tb) {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * ldb + p];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}
#endif

void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
          std::size_t ldc) {
#ifdef RETGAN_HAVE_OPENBLAS
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), 1.0, c, static_cast<int>(ldc));
#else
  gemm_fallback(ta, tb, m, n, k, alpha, a, lda, b, ldb, c, ldc);
#endif
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  RETGAN_CHECK(a.rank() == 2 && b.rank() == 2,
               "matmul needs rank-2 tensors, got " << a.shape_str() << " and " << b.shape_str());
  RETGAN_CHECK(a.cols() == b.rows(),
               "matmul inner dimensions disagree: " << a.shape_str() << " vs " << b.shape_str());
  Tensor c({a.rows(), b.cols()});
  gemm(false, false, a.rows(), b.cols(), a.cols(), 1.0, a.data(), a.cols(), b.data(), b.cols(),
       c.data(), c.cols());
  return c;
}

void matmul_acc(const Tensor& a, bool transpose_a, const Tensor& b, bool transpose_b,
                double alpha, Tensor& c) {
  const std::size_t m = transpose_a ? a.cols() : a.rows();
  const std::size_t k = transpose_a ? a.rows() : a.cols();
  const std::size_t kb = transpose_b ? b.cols() : b.rows();
  const std::size_t n = transpose_b ? b.rows() : b.cols();
  RETGAN_CHECK(k == kb && c.rows() == m && c.cols() == n,
               "matmul_acc shape mismatch: " << a.shape_str() << (transpose_a ? "^T" : "") << " * "
                                             << b.shape_str() << (transpose_b ? "^T" : "")
                                             << " -> " << c.shape_str());
  gemm(transpose_a, transpose_b, m, n, k, alpha, a.data(), a.cols(), b.data(), b.cols(), c.data(),
       c.cols());
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  RETGAN_CHECK(m.rank() == 2 && v.rank() == 1 && v.size() == m.cols(),
               "add_rowvec: " << m.shape_str() << " + row " << v.shape_str());
  Tensor out = m;
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out[r * m.cols() + c] += v[c];
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out[i] < 0.0) out[i] = 0.0;
  return out;
}

Tensor tanh(const Tensor& a) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
  return out;
}

Tensor sigmoid(const Tensor& a) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
  return out;
}

std::size_t patch_bucket(std::size_t flat_index) {
  const std::size_t pixel = flat_index / 3;
  const std::size_t channel = flat_index % 3;
  const std::size_t y = pixel / kImageSide;
  const std::size_t x = pixel % kImageSide;
  const std::size_t grid = kImageSide / kPatchSide;
  return ((y / kPatchSide) * grid + (x / kPatchSide)) * 3 + channel;
}

Tensor patch_pool(const Tensor& images) {
  RETGAN_CHECK(images.rank() == 2 && images.cols() == kImagePixels,
               "patch_pool expects [B x " << kImagePixels << "], got " << images.shape_str());
  const std::size_t batch = images.rows();
  Tensor out({batch, kPooledDim});
  const double inv = 1.0 / static_cast<double>(kPatchSide * kPatchSide);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* src = images.data() + b * kImagePixels;
    double* dst = out.data() + b * kPooledDim;
    for (std::size_t i = 0; i < kImagePixels; ++i) dst[patch_bucket(i)] += src[i];
    for (std::size_t j = 0; j < kPooledDim; ++j) dst[j] *= inv;
  }
  return out;
}

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(const double* a, std::size_t n) { return std::sqrt(dot(a, a, n)); }

void sym_eig(const Tensor& a, Tensor& eigenvalues, Tensor& eigenvectors) {
  RETGAN_CHECK(a.rank() == 2 && a.rows() == a.cols(),
               "sym_eig expects a square matrix, got " << a.shape_str());
  const std::size_t n = a.rows();
  Tensor m = a;
  eigenvectors = Tensor({n, n});
  for (std::size_t i = 0; i < n; ++i) eigenvectors[i * n + i] = 1.0;

  auto off_norm = [&]() {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += m[i * n + j] * m[i * n + j];
    return std::sqrt(2.0 * s);
  };
  double scale = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) scale = std::max(scale, std::abs(m[i]));
  const double tol = (scale > 0.0 ? scale : 1.0) * 1e-14 * static_cast<double>(n);

  const int max_sweeps = 64;
  int sweep = 0;
  for (; sweep < max_sweeps && off_norm() > tol; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = m[p * n + q];
        if (std::abs(apq) <= tol / static_cast<double>(n * n)) continue;
        const double app = m[p * n + p];
        const double aqq = m[q * n + q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t i = 0; i < n; ++i) {
          const double mip = m[i * n + p];
          const double miq = m[i * n + q];
          m[i * n + p] = c * mip - s * miq;
          m[i * n + q] = s * mip + c * miq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double mpi = m[p * n + i];
          const double mqi = m[q * n + i];
          m[p * n + i] = c * mpi - s * mqi;
          m[q * n + i] = s * mpi + c * mqi;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vip = eigenvectors[i * n + p];
          const double viq = eigenvectors[i * n + q];
          eigenvectors[i * n + p] = c * vip - s * viq;
          eigenvectors[i * n + q] = s * vip + c * viq;
        }
      }
    }
  }
  RETGAN_CHECK_RUNTIME(sweep < max_sweeps || off_norm() <= tol,
                       "sym_eig: Jacobi failed to converge after "
                           << max_sweeps << " sweeps, off-diagonal norm " << off_norm()
                           << " (n=" << n << ", scale=" << scale << ")");
  eigenvalues = Tensor({n});
  for (std::size_t i = 0; i < n; ++i) eigenvalues[i] = m[i * n + i];
}

}  // namespace retgan::num
