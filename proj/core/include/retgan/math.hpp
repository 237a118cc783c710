#pragma once

#include <cstddef>

#include "retgan/tensor.hpp"

namespace retgan::num {

/// C = A * B for rank-2 tensors, error on inner-dimension mismatch.
Tensor matmul(const Tensor& a, const Tensor& b);

/// C += alpha * op(A) * op(B) into a preallocated rank-2 tensor.
void matmul_acc(const Tensor& a, bool transpose_a, const Tensor& b, bool transpose_b,
                double alpha, Tensor& c);

/// Row-broadcast affine step: out[r][c] = m[r][c] + v[c].
Tensor add_rowvec(const Tensor& m, const Tensor& v);

Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);

/// 8x8 patch mean over a batch of flattened 32x32x3 rasters (row-major
/// y,x,channel): [B x 3072] -> [B x 48], patch-major then channel.
Tensor patch_pool(const Tensor& images);
constexpr std::size_t kImageSide = 32;
constexpr std::size_t kPatchSide = 8;
constexpr std::size_t kImagePixels = kImageSide * kImageSide * 3;  // 3072
constexpr std::size_t kPooledDim = (kImageSide / kPatchSide) * (kImageSide / kPatchSide) * 3;  // 48
/// Pooled bucket of a flat pixel index.
std::size_t patch_bucket(std::size_t flat_index);

double dot(const double* a, const double* b, std::size_t n);
double l2_norm(const double* a, std::size_t n);

/// Cyclic Jacobi eigendecomposition of a symmetric matrix: A = V diag(w) V^T,
/// eigenvectors in columns of V. Throws runtime_error when the off-diagonal
/// mass fails to converge.
void sym_eig(const Tensor& a, Tensor& eigenvalues, Tensor& eigenvectors);

}  // namespace retgan::num
