#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "xld/kernels.hpp"
#include "xld/rng.hpp"

namespace xld::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape);

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // sized lazily
  bool requires_grad = false;
  bool is_leaf = true;
  bool consumed = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Pushes this node's grad into its inputs.
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
};

/// Dense row-major array with reverse-mode gradient tracking.
///
/// Copies share the underlying node. Operations on tensors that require
/// gradients record a backward closure; backward() walks those closures
/// once and then releases the graph.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false) {
    return from({1}, {value}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->data.size(); }
  std::size_t rows() const { return node_->shape.empty() ? 1 : node_->shape.front(); }
  std::size_t cols() const { return node_->shape.empty() ? 1 : node_->shape.back(); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  T* ptr() { return node_->data.data(); }
  const T* ptr() const { return node_->data.data(); }
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() == node_->data.size() && !node_->data.empty(); }
  std::span<T> grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  std::span<const T> grad() const { return node_->grad; }
  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), T(0)); }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& shared() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
};

// Runs reverse-mode differentiation from a scalar. Throws for non-scalar
// losses, detached losses, and a second call on the same graph.
template <typename T>
void backward(const Tensor<T>& loss);

// Same values, no gradient history.
template <typename T>
Tensor<T> detach(const Tensor<T>& x);

// ---------------------------------------------------------------------------
// Operations. Matrices are [rows, cols].

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const int> ids);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);

// x[N, in] * weight[in, out] + bias[out]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = T(1e-5));

template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

// Inverted dropout; identity when p == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, Rng& rng);

template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                    std::size_t heads, std::span<const kernels::Segment> segments,
                    std::span<const std::uint8_t> key_mask);

// Softmax along `axis`; rejects NaN/Inf input with std::domain_error.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> rows);

}  // namespace xld::nn
