#pragma once

// Dense matrix-multiply kernels with a fixed accumulation order.
//
// Every output element is accumulated as c + a0*b0 + a1*b1 + ... in
// ascending reduction index, regardless of tiling. Results are therefore
// identical across tile sizes, batch splits and worker counts.

#include <algorithm>
#include <cstddef>

namespace linac::gemm {

namespace detail {

template <typename T>
inline constexpr std::size_t kTileCols = 4 * (64 / sizeof(T));
inline constexpr std::size_t kTileRows = 4;

// acc[r][c] starts at C and accumulates over p ascending.
template <typename T, std::size_t Rows, std::size_t Cols, bool TransA>
inline void micro_tile(std::size_t K, const T* a, std::size_t lda, const T* b,
                       std::size_t ldb, T* c, std::size_t ldc) {
  T acc[Rows][Cols];
  for (std::size_t r = 0; r < Rows; ++r)
    for (std::size_t j = 0; j < Cols; ++j) acc[r][j] = c[r * ldc + j];
  for (std::size_t p = 0; p < K; ++p) {
    const T* brow = b + p * ldb;
    for (std::size_t r = 0; r < Rows; ++r) {
      const T av = TransA ? a[p * lda + r] : a[r * lda + p];
      for (std::size_t j = 0; j < Cols; ++j) acc[r][j] += av * brow[j];
    }
  }
  for (std::size_t r = 0; r < Rows; ++r)
    for (std::size_t j = 0; j < Cols; ++j) c[r * ldc + j] = acc[r][j];
}

template <typename T, bool TransA>
inline void edge_tile(std::size_t rows, std::size_t cols, std::size_t K,
                      const T* a, std::size_t lda, const T* b, std::size_t ldb,
                      T* c, std::size_t ldc) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t p = 0; p < K; ++p) {
      const T av = TransA ? a[p * lda + r] : a[r * lda + p];
      const T* brow = b + p * ldb;
      T* crow = c + r * ldc;
      for (std::size_t j = 0; j < cols; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T, bool TransA>
inline void run(std::size_t M, std::size_t N, std::size_t K, const T* a,
                std::size_t lda, const T* b, std::size_t ldb, T* c,
                std::size_t ldc) {
  constexpr std::size_t R = kTileRows;
  constexpr std::size_t NC = kTileCols<T>;
  auto a_at = [&](std::size_t row) { return TransA ? a + row : a + row * lda; };
  std::size_t i = 0;
  for (; i + R <= M; i += R) {
    std::size_t j = 0;
    for (; j + NC <= N; j += NC)
      micro_tile<T, R, NC, TransA>(K, a_at(i), lda, b + j, ldb,
                                   c + i * ldc + j, ldc);
    for (; j + NC / 2 <= N; j += NC / 2)
      micro_tile<T, R, NC / 2, TransA>(K, a_at(i), lda, b + j, ldb,
                                       c + i * ldc + j, ldc);
    for (; j + NC / 4 <= N; j += NC / 4)
      micro_tile<T, R, NC / 4, TransA>(K, a_at(i), lda, b + j, ldb,
                                       c + i * ldc + j, ldc);
    if (j < N)
      edge_tile<T, TransA>(R, N - j, K, a_at(i), lda, b + j, ldb,
                           c + i * ldc + j, ldc);
  }
  for (; i < M; ++i) {
    std::size_t j = 0;
    for (; j + NC <= N; j += NC)
      micro_tile<T, 1, NC, TransA>(K, a_at(i), lda, b + j, ldb,
                                   c + i * ldc + j, ldc);
    if (j < N)
      edge_tile<T, TransA>(1, N - j, K, a_at(i), lda, b + j, ldb,
                           c + i * ldc + j, ldc);
  }
}

}  // namespace detail

/// C (MxN) += A (MxK) * B (KxN); all row-major.
template <typename T>
inline void matmul_acc(std::size_t M, std::size_t N, std::size_t K, const T* a,
                       const T* b, T* c) {
  detail::run<T, false>(M, N, K, a, K, b, N, c, N);
}

/// C (MxN) += A^T * B where A is stored KxM row-major.
template <typename T>
inline void matmul_tn_acc(std::size_t M, std::size_t N, std::size_t K,
                          const T* a, const T* b, T* c) {
  detail::run<T, true>(M, N, K, a, M, b, N, c, N);
}

/// out (cols x rows) = in (rows x cols) transposed.
template <typename T>
inline void transpose(std::size_t rows, std::size_t cols, const T* in, T* out) {
  constexpr std::size_t kBlock = 16;
  for (std::size_t i0 = 0; i0 < rows; i0 += kBlock)
    for (std::size_t j0 = 0; j0 < cols; j0 += kBlock)
      for (std::size_t i = i0; i < std::min(rows, i0 + kBlock); ++i)
        for (std::size_t j = j0; j < std::min(cols, j0 + kBlock); ++j)
          out[j * rows + i] = in[i * cols + j];
}

}  // namespace linac::gemm
