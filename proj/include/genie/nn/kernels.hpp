#pragma once

// Dense matrix kernels used by the LSTM and affine ops.
//
// All matrices are row-major with explicit leading dimensions. The parallel
// kernels split work over output tiles only, so every output element is
// produced by one thread with a fixed summation order: results do not depend
// on the thread count. Zero entries of the left operand are skipped, which
// turns products with one-hot feature rows into row gathers.
//
// kernels::reference holds naive serial triple loops kept as the test oracle
// and as the baseline for bench/.

#include <algorithm>
#include <cstddef>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace genie::nn::kernels {

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

inline void set_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(std::max(1, n));
#else
  (void)n;
#endif
}

namespace detail {

// Below this many multiply-adds a parallel region costs more than it saves.
inline constexpr std::size_t kParallelWork = 1u << 15;
inline constexpr std::size_t kColumnBlock = 256;
inline constexpr std::size_t kRowBlock = 16;

template <typename T>
inline void axpy(std::size_t n, T a, const T* __restrict x, T* __restrict y) {
  for (std::size_t j = 0; j < n; ++j) y[j] += a * x[j];
}

}  // namespace detail

// C[M×N] (+)= A[M×K] · B[K×N]
template <typename T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* A,
             std::size_t lda, const T* B, std::size_t ldb, T* C,
             std::size_t ldc, bool accumulate) {
  if (M == 0 || N == 0) return;
  const std::size_t col_blocks = (N + detail::kColumnBlock - 1) / detail::kColumnBlock;
  const std::ptrdiff_t tiles = static_cast<std::ptrdiff_t>(M * col_blocks);
  const bool parallel = M * N * K >= detail::kParallelWork;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t tile = 0; tile < tiles; ++tile) {
    const std::size_t i = static_cast<std::size_t>(tile) / col_blocks;
    const std::size_t j0 = (static_cast<std::size_t>(tile) % col_blocks) * detail::kColumnBlock;
    const std::size_t jn = std::min(detail::kColumnBlock, N - j0);
    T* c = C + i * ldc + j0;
    if (!accumulate) std::fill(c, c + jn, T{0});
    const T* a_row = A + i * lda;
    for (std::size_t k = 0; k < K; ++k) {
      const T a = a_row[k];
      if (a == T{0}) continue;
      detail::axpy(jn, a, B + k * ldb + j0, c);
    }
  }
}

// C[M×N] (+)= A[K×M]ᵀ · B[K×N]
//
// When B is sparse (one-hot feature rows) the inner loop walks only the
// non-zero columns of each B row.
template <typename T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A,
             std::size_t lda, const T* B, std::size_t ldb, T* C,
             std::size_t ldc, bool accumulate) {
  if (M == 0 || N == 0) return;
  if (!accumulate) {
    for (std::size_t i = 0; i < M; ++i) std::fill(C + i * ldc, C + i * ldc + N, T{0});
  }
  if (K == 0) return;

  std::size_t nonzeros = 0;
  std::vector<std::size_t> row_start(K + 1, 0);
  std::vector<std::size_t> nz_cols;
  for (std::size_t r = 0; r < K; ++r) {
    const T* b = B + r * ldb;
    for (std::size_t j = 0; j < N; ++j) nonzeros += b[j] != T{0};
  }
  const bool sparse = nonzeros * 4 < K * N;
  if (sparse) {
    nz_cols.reserve(nonzeros);
    for (std::size_t r = 0; r < K; ++r) {
      const T* b = B + r * ldb;
      for (std::size_t j = 0; j < N; ++j)
        if (b[j] != T{0}) nz_cols.push_back(j);
      row_start[r + 1] = nz_cols.size();
    }
  }

  const std::ptrdiff_t blocks =
      static_cast<std::ptrdiff_t>((M + detail::kRowBlock - 1) / detail::kRowBlock);
  const bool parallel = M * (sparse ? nonzeros : N * K) >= detail::kParallelWork;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) {
    const std::size_t i0 = static_cast<std::size_t>(blk) * detail::kRowBlock;
    const std::size_t i1 = std::min(M, i0 + detail::kRowBlock);
    for (std::size_t r = 0; r < K; ++r) {
      const T* a_row = A + r * lda;
      const T* b = B + r * ldb;
      for (std::size_t i = i0; i < i1; ++i) {
        const T a = a_row[i];
        if (a == T{0}) continue;
        T* c = C + i * ldc;
        if (sparse) {
          for (std::size_t p = row_start[r]; p < row_start[r + 1]; ++p) {
            const std::size_t j = nz_cols[p];
            c[j] += a * b[j];
          }
        } else {
          detail::axpy(N, a, b, c);
        }
      }
    }
  }
}

// dst[cols×rows] = src[rows×cols]ᵀ
template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* src, std::size_t ld_src,
               T* dst, std::size_t ld_dst) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * ld_dst + r] = src[r * ld_src + c];
}

// C[M×N] (+)= A[M×K] · B[N×K]ᵀ, via a transposed copy of B.
template <typename T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A,
             std::size_t lda, const T* B, std::size_t ldb, T* C,
             std::size_t ldc, bool accumulate) {
  thread_local std::vector<T> scratch;
  scratch.resize(K * N);
  transpose(N, K, B, ldb, scratch.data(), N);
  gemm_nn(M, N, K, A, lda, scratch.data(), N, C, ldc, accumulate);
}

// out[c] (+)= Σ_r A[r, c]
template <typename T>
void column_sums(std::size_t rows, std::size_t cols, const T* A, std::size_t lda,
                 T* out, bool accumulate) {
  if (!accumulate) std::fill(out, out + cols, T{0});
  for (std::size_t r = 0; r < rows; ++r) detail::axpy(cols, T{1}, A + r * lda, out);
}

namespace reference {

template <typename T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* A,
             std::size_t lda, const T* B, std::size_t ldb, T* C,
             std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = 0; j < N; ++j) {
      T sum = accumulate ? C[i * ldc + j] : T{0};
      for (std::size_t k = 0; k < K; ++k) sum += A[i * lda + k] * B[k * ldb + j];
      C[i * ldc + j] = sum;
    }
}

template <typename T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A,
             std::size_t lda, const T* B, std::size_t ldb, T* C,
             std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = 0; j < N; ++j) {
      T sum = accumulate ? C[i * ldc + j] : T{0};
      for (std::size_t k = 0; k < K; ++k) sum += A[k * lda + i] * B[k * ldb + j];
      C[i * ldc + j] = sum;
    }
}

template <typename T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A,
             std::size_t lda, const T* B, std::size_t ldb, T* C,
             std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = 0; j < N; ++j) {
      T sum = accumulate ? C[i * ldc + j] : T{0};
      for (std::size_t k = 0; k < K; ++k) sum += A[i * lda + k] * B[j * ldb + k];
      C[i * ldc + j] = sum;
    }
}

}  // namespace reference
}  // namespace genie::nn::kernels
