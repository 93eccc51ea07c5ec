#include "xld/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace xld::kernels {
namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelThreshold = 1 << 15;

template <typename T>
inline T dot(const T* a, const T* b, std::size_t n) {
  T s = 0;
#pragma omp simd reduction(+ : s)
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <typename T>
inline void axpy(T alpha, const T* x, T* y, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <bool kParallel, typename T>
void gemm_nn_impl(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
                  bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (kParallel && m * n * k > kParallelThreshold)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    T* c_row = c + static_cast<std::size_t>(i) * n;
    if (!accumulate) std::fill(c_row, c_row + n, T(0));
    const T* a_row = a + static_cast<std::size_t>(i) * k;
    for (std::size_t p = 0; p < k; ++p) axpy(a_row[p], b + p * n, c_row, n);
  }
}

template <bool kParallel, typename T>
void gemm_nt_impl(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
                  bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (kParallel && m * n * k > kParallelThreshold)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    T* c_row = c + static_cast<std::size_t>(i) * n;
    const T* a_row = a + static_cast<std::size_t>(i) * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T s = dot(a_row, b + j * k, k);
      c_row[j] = accumulate ? c_row[j] + s : s;
    }
  }
}

// Output rows are split into contiguous blocks; each block walks the shared
// dimension in ascending order, so every element sums in the same order
// whatever the block count.
template <typename T>
void gemm_tn_block(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
                   bool accumulate, std::size_t row_begin, std::size_t row_end) {
  if (!accumulate) std::fill(c + row_begin * n, c + row_end * n, T(0));
  for (std::size_t p = 0; p < m; ++p) {
    const T* a_row = a + p * k;
    const T* b_row = b + p * n;
    for (std::size_t i = row_begin; i < row_end; ++i) axpy(a_row[i], b_row, c + i * n, n);
  }
}

template <bool kParallel, typename T>
void gemm_tn_impl(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
                  bool accumulate) {
  if constexpr (kParallel) {
    if (m * n * k > kParallelThreshold && max_threads() > 1) {
#pragma omp parallel
      {
#ifdef _OPENMP
        const auto tid = static_cast<std::size_t>(omp_get_thread_num());
        const auto nth = static_cast<std::size_t>(omp_get_num_threads());
#else
        const std::size_t tid = 0, nth = 1;
#endif
        const std::size_t chunk = (k + nth - 1) / nth;
        const std::size_t begin = std::min(k, tid * chunk);
        const std::size_t end = std::min(k, begin + chunk);
        if (begin < end) gemm_tn_block(m, n, k, a, b, c, accumulate, begin, end);
      }
      return;
    }
  }
  gemm_tn_block(m, n, k, a, b, c, accumulate, 0, k);
}

template <typename T>
void softmax_row(const T* in, T* out, std::size_t cols) {
  T mx = -std::numeric_limits<T>::infinity();
  for (std::size_t j = 0; j < cols; ++j) mx = std::max(mx, in[j]);
  if (mx == -std::numeric_limits<T>::infinity()) {
    std::fill(out, out + cols, T(0));
    return;
  }
  T sum = 0;
  for (std::size_t j = 0; j < cols; ++j) {
    out[j] = std::exp(in[j] - mx);
    sum += out[j];
  }
  const T inv = T(1) / sum;
  for (std::size_t j = 0; j < cols; ++j) out[j] *= inv;
}

template <bool kParallel, typename T>
void softmax_rows_impl(std::size_t rows, std::size_t cols, const T* in, T* out) {
  const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (kParallel && rows * cols > kParallelThreshold)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    softmax_row(in + r * cols, out + r * cols, cols);
  }
}

template <bool kParallel, typename T>
void layer_norm_forward_impl(std::size_t rows, std::size_t cols, const T* x, const T* gain,
                             const T* bias, T eps, T* xhat, T* inv_std, T* y) {
  const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (kParallel && rows * cols > kParallelThreshold)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    const T* xr = x + r * cols;
    T mean = 0;
    for (std::size_t j = 0; j < cols; ++j) mean += xr[j];
    mean /= static_cast<T>(cols);
    T var = 0;
    for (std::size_t j = 0; j < cols; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<T>(cols);
    const T istd = T(1) / std::sqrt(var + eps);
    inv_std[r] = istd;
    T* hr = xhat + r * cols;
    T* yr = y + r * cols;
    for (std::size_t j = 0; j < cols; ++j) {
      hr[j] = (xr[j] - mean) * istd;
      yr[j] = hr[j] * gain[j] + bias[j];
    }
  }
}

template <bool kParallel, typename T>
void layer_norm_backward_input_impl(std::size_t rows, std::size_t cols, const T* dy,
                                    const T* gain, const T* xhat, const T* inv_std, T* dx) {
  const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (kParallel && rows * cols > kParallelThreshold)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    const T* dyr = dy + r * cols;
    const T* hr = xhat + r * cols;
    T mean_g = 0;
    T mean_gh = 0;
    for (std::size_t j = 0; j < cols; ++j) {
      const T g = dyr[j] * gain[j];
      mean_g += g;
      mean_gh += g * hr[j];
    }
    mean_g /= static_cast<T>(cols);
    mean_gh /= static_cast<T>(cols);
    T* dxr = dx + r * cols;
    for (std::size_t j = 0; j < cols; ++j) {
      dxr[j] += inv_std[r] * (dyr[j] * gain[j] - mean_g - hr[j] * mean_gh);
    }
  }
}

struct AttentionTask {
  std::size_t segment;
  std::size_t head;
  std::size_t probs_offset;
};

std::vector<AttentionTask> attention_tasks(std::span<const Segment> segments, std::size_t heads) {
  std::vector<AttentionTask> tasks;
  tasks.reserve(segments.size() * heads);
  std::size_t offset = 0;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const std::size_t block = segments[s].length * segments[s].length;
    for (std::size_t h = 0; h < heads; ++h) {
      tasks.push_back({s, h, offset});
      offset += block;
    }
  }
  return tasks;
}

template <bool kParallel, typename T>
void attention_forward_impl(const AttentionShape& shape, std::span<const Segment> segments,
                            const std::uint8_t* key_mask, const T* q, const T* k, const T* v,
                            T* probs, T* out) {
  const std::size_t width = shape.width;
  const std::size_t dh = shape.head_dim();
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const auto tasks = attention_tasks(segments, shape.heads);
  const auto n_tasks = static_cast<std::ptrdiff_t>(tasks.size());
#pragma omp parallel for schedule(static) if (kParallel && n_tasks > 1)
  for (std::ptrdiff_t t = 0; t < n_tasks; ++t) {
    const AttentionTask& task = tasks[static_cast<std::size_t>(t)];
    const Segment& seg = segments[task.segment];
    const std::size_t len = seg.length;
    const std::size_t col = task.head * dh;
    T* p = probs + task.probs_offset;
    for (std::size_t i = 0; i < len; ++i) {
      const T* qi = q + (seg.offset + i) * width + col;
      T* prow = p + i * len;
      for (std::size_t j = 0; j < len; ++j) {
        prow[j] = !key_mask || key_mask[seg.offset + j]
                      ? scale * dot(qi, k + (seg.offset + j) * width + col, dh)
                      : -std::numeric_limits<T>::infinity();
      }
      softmax_row(prow, prow, len);
      T* oi = out + (seg.offset + i) * width + col;
      std::fill(oi, oi + dh, T(0));
      for (std::size_t j = 0; j < len; ++j) {
        if (prow[j] != T(0)) axpy(prow[j], v + (seg.offset + j) * width + col, oi, dh);
      }
    }
  }
}

template <bool kParallel, typename T>
void attention_backward_impl(const AttentionShape& shape, std::span<const Segment> segments,
                             const T* q, const T* k, const T* v, const T* probs, const T* dout,
                             T* dq, T* dk, T* dv) {
  const std::size_t width = shape.width;
  const std::size_t dh = shape.head_dim();
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const auto tasks = attention_tasks(segments, shape.heads);
  const auto n_tasks = static_cast<std::ptrdiff_t>(tasks.size());
#pragma omp parallel for schedule(static) if (kParallel && n_tasks > 1)
  for (std::ptrdiff_t t = 0; t < n_tasks; ++t) {
    const AttentionTask& task = tasks[static_cast<std::size_t>(t)];
    const Segment& seg = segments[task.segment];
    const std::size_t len = seg.length;
    const std::size_t col = task.head * dh;
    const T* p = probs + task.probs_offset;
    std::vector<T> ds(len);
    for (std::size_t i = 0; i < len; ++i) {
      const T* prow = p + i * len;
      const T* gi = dout + (seg.offset + i) * width + col;
      T weighted = 0;
      for (std::size_t j = 0; j < len; ++j) {
        ds[j] = prow[j] != T(0) ? dot(gi, v + (seg.offset + j) * width + col, dh) : T(0);
        weighted += prow[j] * ds[j];
      }
      for (std::size_t j = 0; j < len; ++j) ds[j] = prow[j] * (ds[j] - weighted) * scale;
      T* dqi = dq + (seg.offset + i) * width + col;
      const T* qi = q + (seg.offset + i) * width + col;
      for (std::size_t j = 0; j < len; ++j) {
        if (prow[j] == T(0)) continue;
        axpy(ds[j], k + (seg.offset + j) * width + col, dqi, dh);
        axpy(ds[j], qi, dk + (seg.offset + j) * width + col, dh);
        axpy(prow[j], gi, dv + (seg.offset + j) * width + col, dh);
      }
    }
  }
}

}  // namespace

std::size_t attention_probs_size(std::span<const Segment> segments, std::size_t heads) {
  std::size_t total = 0;
  for (const auto& s : segments) total += s.length * s.length * heads;
  return total;
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}


#define XLD_INSTANTIATE_KERNELS(T)                                                           \
  template void gemm_nn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool); \
  template void gemm_nt<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool); \
  template void gemm_tn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool); \
  template void softmax_rows<T>(std::size_t, std::size_t, const T*, T*);                         \
  template void layer_norm_forward<T>(std::size_t, std::size_t, const T*, const T*, const T*, T, \
                                      T*, T*, T*);                                               \
  template void layer_norm_backward_input<T>(std::size_t, std::size_t, const T*, const T*,       \
                                             const T*, const T*, T*);                            \
  template void attention_forward<T>(const AttentionShape&, std::span<const Segment>,            \
                                     const std::uint8_t*, const T*, const T*, const T*, T*, T*); \
  template void attention_backward<T>(const AttentionShape&, std::span<const Segment>, const T*, \
                                      const T*, const T*, const T*, const T*, T*, T*, T*);

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate) {
  gemm_nn_impl<true>(m, n, k, a, b, c, accumulate);
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate) {
  gemm_nt_impl<true>(m, n, k, a, b, c, accumulate);
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate) {
  gemm_tn_impl<true>(m, n, k, a, b, c, accumulate);
}

template <typename T>
void softmax_rows(std::size_t rows, std::size_t cols, const T* in, T* out) {
  softmax_rows_impl<true>(rows, cols, in, out);
}

template <typename T>
void layer_norm_forward(std::size_t rows, std::size_t cols, const T* x, const T* gain,
                        const T* bias, T eps, T* xhat, T* inv_std, T* y) {
  layer_norm_forward_impl<true>(rows, cols, x, gain, bias, eps, xhat, inv_std, y);
}

template <typename T>
void layer_norm_backward_input(std::size_t rows, std::size_t cols, const T* dy, const T* gain,
                               const T* xhat, const T* inv_std, T* dx) {
  layer_norm_backward_input_impl<true>(rows, cols, dy, gain, xhat, inv_std, dx);
}

template <typename T>
void attention_forward(const AttentionShape& shape, std::span<const Segment> segments,
                       const std::uint8_t* key_mask, const T* q, const T* k, const T* v,
                       T* probs, T* out) {
  attention_forward_impl<true>(shape, segments, key_mask, q, k, v, probs, out);
}

template <typename T>
void attention_backward(const AttentionShape& shape, std::span<const Segment> segments,
                        const T* q, const T* k, const T* v, const T* probs, const T* dout,
                        T* dq, T* dk, T* dv) {
  attention_backward_impl<true>(shape, segments, q, k, v, probs, dout, dq, dk, dv);
}

XLD_INSTANTIATE_KERNELS(float)
XLD_INSTANTIATE_KERNELS(double)

namespace serial {

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate) {
  gemm_nn_impl<false>(m, n, k, a, b, c, accumulate);
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate) {
  gemm_nt_impl<false>(m, n, k, a, b, c, accumulate);
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate) {
  gemm_tn_impl<false>(m, n, k, a, b, c, accumulate);
}

template <typename T>
void softmax_rows(std::size_t rows, std::size_t cols, const T* in, T* out) {
  softmax_rows_impl<false>(rows, cols, in, out);
}

template <typename T>
void layer_norm_forward(std::size_t rows, std::size_t cols, const T* x, const T* gain,
                        const T* bias, T eps, T* xhat, T* inv_std, T* y) {
  layer_norm_forward_impl<false>(rows, cols, x, gain, bias, eps, xhat, inv_std, y);
}

template <typename T>
void layer_norm_backward_input(std::size_t rows, std::size_t cols, const T* dy, const T* gain,
                               const T* xhat, const T* inv_std, T* dx) {
  layer_norm_backward_input_impl<false>(rows, cols, dy, gain, xhat, inv_std, dx);
}

template <typename T>
void attention_forward(const AttentionShape& shape, std::span<const Segment> segments,
                       const std::uint8_t* key_mask, const T* q, const T* k, const T* v,
                       T* probs, T* out) {
  attention_forward_impl<false>(shape, segments, key_mask, q, k, v, probs, out);
}

template <typename T>
void attention_backward(const AttentionShape& shape, std::span<const Segment> segments,
                        const T* q, const T* k, const T* v, const T* probs, const T* dout,
                        T* dq, T* dk, T* dv) {
  attention_backward_impl<false>(shape, segments, q, k, v, probs, dout, dq, dk, dv);
}

XLD_INSTANTIATE_KERNELS(float)
XLD_INSTANTIATE_KERNELS(double)

}  // namespace serial

#undef XLD_INSTANTIATE_KERNELS

}  // namespace xld::kernels
