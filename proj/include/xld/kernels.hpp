#pragma once

// Dense kernels behind the autodiff ops.
//
// Every kernel exists twice: xld::kernels::serial is the single-threaded
// reference, xld::kernels is the OpenMP version. Both partition work by
// output element and run the same per-element loop, so results agree
// bitwise for any thread count.

#include <cstddef>
#include <cstdint>
#include <span>

namespace xld::kernels {

/// One packed sequence inside a batch: rows [offset, offset + length).
struct Segment {
  std::size_t offset = 0;
  std::size_t length = 0;
};

struct AttentionShape {
  std::size_t rows = 0;   // total packed rows
  std::size_t width = 0;  // model width; row stride of q, k, v, out
  std::size_t heads = 1;
  std::size_t head_dim() const { return width / heads; }
};

// Floats needed to store attention probabilities for all segments and heads.
std::size_t attention_probs_size(std::span<const Segment> segments, std::size_t heads);

// C[m,n] (+)= A[m,k] * B[k,n]
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate);

// C[m,n] (+)= A[m,k] * B[n,k]^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate);

// C[k,n] (+)= A[m,k]^T * B[m,n]
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate);

// Row-wise softmax with max subtraction.
template <typename T>
void softmax_rows(std::size_t rows, std::size_t cols, const T* in, T* out);

// y = xhat * gain + bias with xhat = (x - mean) / sqrt(var + eps).
// Keeps xhat and 1/std per row for the backward pass.
template <typename T>
void layer_norm_forward(std::size_t rows, std::size_t cols, const T* x, const T* gain,
                        const T* bias, T eps, T* xhat, T* inv_std, T* y);

// dx += input gradient of layer_norm_forward. Gain/bias gradients are separate.
template <typename T>
void layer_norm_backward_input(std::size_t rows, std::size_t cols, const T* dy, const T* gain,
                               const T* xhat, const T* inv_std, T* dx);

// Multi-head scaled dot-product attention restricted to each segment. Keys
// with key_mask == 0 get zero weight (null mask: none masked); a row whose keys are all masked
// outputs zeros. probs receives every (segment, head) softmax block,
// segment-major, for the backward pass.
template <typename T>
void attention_forward(const AttentionShape& shape, std::span<const Segment> segments,
                       const std::uint8_t* key_mask, const T* q, const T* k, const T* v,
                       T* probs, T* out);

// Accumulates into dq, dk, dv.
template <typename T>
void attention_backward(const AttentionShape& shape, std::span<const Segment> segments,
                        const T* q, const T* k, const T* v, const T* probs, const T* dout,
                        T* dq, T* dk, T* dv);

namespace serial {

// Same contracts as above, single-threaded.
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate);
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate);
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate);
template <typename T>
void softmax_rows(std::size_t rows, std::size_t cols, const T* in, T* out);
template <typename T>
void layer_norm_forward(std::size_t rows, std::size_t cols, const T* x, const T* gain,
                        const T* bias, T eps, T* xhat, T* inv_std, T* y);
template <typename T>
void layer_norm_backward_input(std::size_t rows, std::size_t cols, const T* dy, const T* gain,
                               const T* xhat, const T* inv_std, T* dx);
template <typename T>
void attention_forward(const AttentionShape& shape, std::span<const Segment> segments,
                       const std::uint8_t* key_mask, const T* q, const T* k, const T* v,
                       T* probs, T* out);
template <typename T>
void attention_backward(const AttentionShape& shape, std::span<const Segment> segments,
                        const T* q, const T* k, const T* v, const T* probs, const T* dout,
                        T* dq, T* dk, T* dv);

}  // namespace serial

// Threads the parallel kernels will use (1 without OpenMP).
int max_threads();

}  // namespace xld::kernels
