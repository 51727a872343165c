#pragma once

#include <cstddef>
#include <utility>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace bnv {

// Every data-parallel kernel in this project accepts an ExecMode. kSerial is
// the reference path: the identical loop body run on one thread, kept for
// parity tests and the bench tool. Results must be bit-identical between the
// two modes, which every kernel achieves by writing to disjoint slots and
// reducing in a thread-count-independent order.
enum class ExecMode { kSerial, kParallel };

template <typename F>
void parallel_for(std::size_t n, F&& body, ExecMode mode = ExecMode::kParallel) {
#ifdef _OPENMP
  if (mode == ExecMode::kParallel && n > 1) {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
      body(static_cast<std::size_t>(i));
    }
    return;
  }
#endif
  (void)mode;
  for (std::size_t i = 0; i < n; ++i) body(i);
}

// Chunked variant: body(begin, end) over fixed-size chunks. Chunk boundaries
// depend only on n and chunk_size, never on the thread count, so per-chunk
// partial results can be merged in chunk order for reproducible reductions.
template <typename F>
void parallel_for_chunks(std::size_t n, std::size_t chunk_size, F&& body,
                         ExecMode mode = ExecMode::kParallel) {
  if (chunk_size == 0) chunk_size = 1;
  const std::size_t n_chunks = (n + chunk_size - 1) / chunk_size;
  parallel_for(
      n_chunks,
      [&](std::size_t c) {
        const std::size_t begin = c * chunk_size;
        const std::size_t end = begin + chunk_size < n ? begin + chunk_size : n;
        body(begin, end);
      },
      mode);
}

inline int hardware_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace bnv
