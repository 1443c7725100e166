#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace coverage {

enum class Exec { Serial, Parallel };

inline Exec default_exec() {
#ifdef _OPENMP
  return Exec::Parallel;
#else
  return Exec::Serial;
#endif
}

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

/// Chunk length for parallel reductions. Partials are combined in chunk
/// order, so the result does not depend on the thread count.
inline constexpr std::ptrdiff_t kReductionChunk = 256;

/// Sums term(0) + term(1) + ... + term(n-1).
///
/// The serial path is a plain left-to-right accumulation and serves as the
/// reference. The parallel path accumulates fixed-size chunks and combines
/// the partials in index order; reruns are bit-identical regardless of
/// thread count, but the association differs from the serial path, so the
/// two may disagree by rounding error.
template <class T, class F>
T chunked_sum(std::ptrdiff_t n, T zero, F&& term, Exec exec) {
  if (exec == Exec::Serial) {
    T acc = zero;
    for (std::ptrdiff_t i = 0; i < n; ++i) acc += term(i);
    return acc;
  }
  const std::ptrdiff_t nchunks = (n + kReductionChunk - 1) / kReductionChunk;
  std::vector<T> partial(static_cast<std::size_t>(std::max<std::ptrdiff_t>(nchunks, 1)), zero);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (std::ptrdiff_t c = 0; c < nchunks; ++c) {
    const std::ptrdiff_t lo = c * kReductionChunk;
    const std::ptrdiff_t hi = std::min(n, lo + kReductionChunk);
    T acc = zero;
    for (std::ptrdiff_t i = lo; i < hi; ++i) acc += term(i);
    partial[static_cast<std::size_t>(c)] = acc;
  }
  T acc = zero;
  for (std::ptrdiff_t c = 0; c < nchunks; ++c) acc += partial[static_cast<std::size_t>(c)];
  return acc;
}

/// Runs body(i) for i in [0, n). Iterations must be independent.
template <class F>
void parallel_for(std::ptrdiff_t n, F&& body, Exec exec) {
  if (exec == Exec::Serial) {
    for (std::ptrdiff_t i = 0; i < n; ++i) body(i);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (std::ptrdiff_t i = 0; i < n; ++i) body(i);
}

}  // namespace coverage
