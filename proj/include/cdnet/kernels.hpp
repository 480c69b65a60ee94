#ifndef CDNET_KERNELS_HPP_
#define CDNET_KERNELS_HPP_

// Dense kernels shared by the autodiff ops, the attention benchmark and the
// batch engine. Every kernel has a serial reference; the omp:: variants split
// the outer loop across threads and must produce identical results (each
// output element is reduced in the same order by exactly one thread).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>

namespace cdnet::kernels {

// Multiply-add accounting. When a counter is installed on the calling
// thread, every gemm call adds its exact trip count m*p*q.
struct MacCounter {
  std::uint64_t macs = 0;
};

MacCounter*& active_counter();

class ScopedMacCount {
 public:
  explicit ScopedMacCount(MacCounter& counter) : previous_(active_counter()) {
    active_counter() = &counter;
  }
  ~ScopedMacCount() { active_counter() = previous_; }
  ScopedMacCount(const ScopedMacCount&) = delete;
  ScopedMacCount& operator=(const ScopedMacCount&) = delete;

 private:
  MacCounter* previous_;
};

inline void count_macs(std::size_t m, std::size_t p, std::size_t q) {
  if (MacCounter* c = active_counter()) c->macs += static_cast<std::uint64_t>(m) * p * q;
}

// C[m×q] (+)= A[m×p] · B[p×q]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t p, std::size_t q,
             bool accumulate) {
  count_macs(m, p, q);
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c + i * q;
    if (!accumulate) std::fill(ci, ci + q, T(0));
    const T* ai = a + i * p;
    for (std::size_t r = 0; r < p; ++r) {
      const T av = ai[r];
      const T* br = b + r * q;
      for (std::size_t j = 0; j < q; ++j) ci[j] += av * br[j];
    }
  }
}

// C[m×q] (+)= A[m×p] · B[q×p]ᵀ
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t p, std::size_t q,
             bool accumulate) {
  count_macs(m, p, q);
  for (std::size_t i = 0; i < m; ++i) {
    const T* ai = a + i * p;
    for (std::size_t j = 0; j < q; ++j) {
      const T* bj = b + j * p;
      T acc = 0;
      for (std::size_t r = 0; r < p; ++r) acc += ai[r] * bj[r];
      c[i * q + j] = accumulate ? c[i * q + j] + acc : acc;
    }
  }
}

// C[m×q] (+)= A[p×m]ᵀ · B[p×q]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t p, std::size_t q,
             bool accumulate) {
  count_macs(m, p, q);
  if (!accumulate) std::fill(c, c + m * q, T(0));
  for (std::size_t r = 0; r < p; ++r) {
    const T* ar = a + r * m;
    const T* br = b + r * q;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = ar[i];
      T* ci = c + i * q;
      for (std::size_t j = 0; j < q; ++j) ci[j] += av * br[j];
    }
  }
}

// Row softmax over the columns where `col_mask` is true; masked columns get
// exactly zero weight. An empty mask span means every column is live.
template <typename T>
void softmax_rows(const T* x, T* y, std::size_t m, std::size_t n, std::span<const std::uint8_t> col_mask) {
  const bool masked = !col_mask.empty();
  for (std::size_t i = 0; i < m; ++i) {
    const T* xi = x + i * n;
    T* yi = y + i * n;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (!masked || col_mask[j]) mx = std::max(mx, xi[j]);
    }
    T total = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!masked || col_mask[j]) {
        yi[j] = std::exp(xi[j] - mx);
        total += yi[j];
      } else {
        yi[j] = 0;
      }
    }
    if (total > 0) {
      const T inv = T(1) / total;
      for (std::size_t j = 0; j < n; ++j) yi[j] *= inv;
    }
  }
}

namespace omp {

template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t p, std::size_t q,
             bool accumulate) {
  count_macs(m, p, q);
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static)
  for (std::int64_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    T* ci = c + i * q;
    if (!accumulate) std::fill(ci, ci + q, T(0));
    const T* ai = a + i * p;
    for (std::size_t r = 0; r < p; ++r) {
      const T av = ai[r];
      const T* br = b + r * q;
      for (std::size_t j = 0; j < q; ++j) ci[j] += av * br[j];
    }
  }
}

template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t p, std::size_t q,
             bool accumulate) {
  count_macs(m, p, q);
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static)
  for (std::int64_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const T* ai = a + i * p;
    for (std::size_t j = 0; j < q; ++j) {
      const T* bj = b + j * p;
      T acc = 0;
      for (std::size_t r = 0; r < p; ++r) acc += ai[r] * bj[r];
      c[i * q + j] = accumulate ? c[i * q + j] + acc : acc;
    }
  }
}

template <typename T>
void softmax_rows(const T* x, T* y, std::size_t m, std::size_t n, std::span<const std::uint8_t> col_mask) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < rows; ++i) {
    const auto off = static_cast<std::size_t>(i) * n;
    kernels::softmax_rows(x + off, y + off, 1, n, col_mask);
  }
}

}  // namespace omp
}  // namespace cdnet::kernels

#endif  // CDNET_KERNELS_HPP_
