#include "xld/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_set>

namespace xld::nn {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? ", " : "") << shape[i];
  out << ']';
  return out.str();
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  auto node = std::make_shared<Node<T>>();
  node->data.assign(shape_size(shape), T(0));
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  if (values.size() != shape_size(shape)) {
    throw std::invalid_argument("value count " + std::to_string(values.size()) +
                                " does not match shape " + shape_string(shape));
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) throw std::invalid_argument("item() on tensor of shape " + shape_string(shape()));
  return node_->data[0];
}

namespace {

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

// Result node whose gradient requirement follows its inputs.
template <typename T>
Tensor<T> make_result(Shape shape, std::initializer_list<NodePtr<T>> inputs) {
  auto node = std::make_shared<Node<T>>();
  node->data.assign(shape_size(shape), T(0));
  node->shape = std::move(shape);
  node->is_leaf = false;
  for (const auto& in : inputs) {
    if (in->requires_grad) node->requires_grad = true;
  }
  if (node->requires_grad) node->inputs.assign(inputs.begin(), inputs.end());
  return Tensor<T>(std::move(node));
}

template <typename T>
void require_matrix(const Tensor<T>& x, const char* op) {
  if (x.shape().size() != 2) {
    throw std::invalid_argument(std::string(op) + " expects a matrix, got " +
                                shape_string(x.shape()));
  }
}

template <typename T>
void check_finite(const Tensor<T>& x, const char* op) {
  for (T v : x.data()) {
    if (!std::isfinite(v)) throw std::domain_error(std::string(op) + ": non-finite input");
  }
}

}  // namespace

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw std::invalid_argument("backward() needs a scalar loss");
  }
  Node<T>* root = loss.node();
  if (root->consumed) {
    throw std::logic_error("graph already consumed; run the forward pass again");
  }
  if (!root->requires_grad) throw std::logic_error("loss is detached from any parameter");

  // Iterative post-order DFS over nodes that need gradients.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && !seen.contains(child)) {
        seen.insert(child);
        stack.emplace_back(child, 0);
      }
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  for (Node<T>* node : order) {
    if (!node->is_leaf) node->grad.assign(node->data.size(), T(0));
  }
  root->grad.assign(1, T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward_fn) node->backward_fn(*node);
  }
  for (Node<T>* node : order) {
    if (node->is_leaf) continue;
    node->backward_fn = nullptr;
    node->inputs.clear();
    node->consumed = true;
  }
}

template <typename T>
Tensor<T> detach(const Tensor<T>& x) {
  return Tensor<T>::from(x.shape(), std::vector<T>(x.data().begin(), x.data().end()), false);
}

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const int> ids) {
  require_matrix(table, "embedding");
  const std::size_t vocab = table.rows();
  const std::size_t width = table.cols();
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of " +
                              std::to_string(vocab));
    }
  }
  Tensor<T> out = make_result<T>({ids.size(), width}, {table.shared()});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(table.ptr() + static_cast<std::size_t>(ids[i]) * width, width,
                out.ptr() + i * width);
  }
  if (out.requires_grad()) {
    out.node()->backward_fn = [ids = std::vector<int>(ids.begin(), ids.end()),
                               width](Node<T>& self) {
      Node<T>& tab = *self.inputs[0];
      tab.ensure_grad();
      for (std::size_t i = 0; i < ids.size(); ++i) {
        T* dst = tab.grad.data() + static_cast<std::size_t>(ids[i]) * width;
        const T* src = self.grad.data() + i * width;
        for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("add shape mismatch " + shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
  }
  Tensor<T> out = make_result<T>(a.shape(), {a.shared(), b.shared()});
  for (std::size_t i = 0; i < out.size(); ++i) out.ptr()[i] = a.ptr()[i] + b.ptr()[i];
  if (out.requires_grad()) {
    out.node()->backward_fn = [](Node<T>& self) {
      for (auto& in : self.inputs) {
        if (!in->requires_grad) continue;
        in->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) in->grad[i] += self.grad[i];
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("mul shape mismatch " + shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
  }
  Tensor<T> out = make_result<T>(a.shape(), {a.shared(), b.shared()});
  for (std::size_t i = 0; i < out.size(); ++i) out.ptr()[i] = a.ptr()[i] * b.ptr()[i];
  if (out.requires_grad()) {
    out.node()->backward_fn = [](Node<T>& self) {
      Node<T>& x = *self.inputs[0];
      Node<T>& y = *self.inputs[1];
      if (x.requires_grad) {
        x.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) x.grad[i] += self.grad[i] * y.data[i];
      }
      if (y.requires_grad) {
        y.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) y.grad[i] += self.grad[i] * x.data[i];
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  Tensor<T> out = make_result<T>(x.shape(), {x.shared()});
  for (std::size_t i = 0; i < out.size(); ++i) out.ptr()[i] = x.ptr()[i] * factor;
  if (out.requires_grad()) {
    out.node()->backward_fn = [factor](Node<T>& self) {
      Node<T>& in = *self.inputs[0];
      in.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i] * factor;
    };
  }
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  Tensor<T> out = make_result<T>({1}, {x.shared()});
  T total = 0;
  for (T v : x.data()) total += v;
  out.ptr()[0] = total;
  if (out.requires_grad()) {
    out.node()->backward_fn = [](Node<T>& self) {
      Node<T>& in = *self.inputs[0];
      in.ensure_grad();
      for (T& g : in.grad) g += self.grad[0];
    };
  }
  return out;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_matrix(x, "linear");
  require_matrix(weight, "linear");
  const std::size_t n = x.rows();
  const std::size_t in = x.cols();
  const std::size_t out_dim = weight.cols();
  if (weight.rows() != in || bias.size() != out_dim) {
    throw std::invalid_argument("linear: input " + shape_string(x.shape()) + ", weight " +
                                shape_string(weight.shape()) + ", bias " +
                                shape_string(bias.shape()));
  }
  Tensor<T> out = make_result<T>({n, out_dim}, {x.shared(), weight.shared(), bias.shared()});
  T* y = out.ptr();
  for (std::size_t i = 0; i < n; ++i) std::copy_n(bias.ptr(), out_dim, y + i * out_dim);
  kernels::gemm_nn(n, out_dim, in, x.ptr(), weight.ptr(), y, true);
  if (out.requires_grad()) {
    out.node()->backward_fn = [n, in, out_dim](Node<T>& self) {
      Node<T>& xs = *self.inputs[0];
      Node<T>& w = *self.inputs[1];
      Node<T>& b = *self.inputs[2];
      const T* dy = self.grad.data();
      if (xs.requires_grad) {
        xs.ensure_grad();
        kernels::gemm_nt(n, in, out_dim, dy, w.data.data(), xs.grad.data(), true);
      }
      if (w.requires_grad) {
        w.ensure_grad();
        kernels::gemm_tn(n, out_dim, in, xs.data.data(), dy, w.grad.data(), true);
      }
      if (b.requires_grad) {
        b.ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < out_dim; ++j) b.grad[j] += dy[i * out_dim + j];
        }
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  require_matrix(x, "layer_norm");
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  if (gain.size() != cols || bias.size() != cols) {
    throw std::invalid_argument("layer_norm: gain/bias width mismatch");
  }
  Tensor<T> out = make_result<T>(x.shape(), {x.shared(), gain.shared(), bias.shared()});
  std::vector<T> xhat(rows * cols);
  std::vector<T> inv_std(rows);
  kernels::layer_norm_forward(rows, cols, x.ptr(), gain.ptr(), bias.ptr(), eps, xhat.data(),
                              inv_std.data(), out.ptr());
  if (out.requires_grad()) {
    out.node()->backward_fn = [rows, cols, xhat = std::move(xhat),
                               inv_std = std::move(inv_std)](Node<T>& self) {
      Node<T>& xs = *self.inputs[0];
      Node<T>& g = *self.inputs[1];
      Node<T>& b = *self.inputs[2];
      const T* dy = self.grad.data();
      if (xs.requires_grad) {
        xs.ensure_grad();
        kernels::layer_norm_backward_input(rows, cols, dy, g.data.data(), xhat.data(),
                                           inv_std.data(), xs.grad.data());
      }
      if (g.requires_grad) {
        g.ensure_grad();
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < cols; ++j) g.grad[j] += dy[i * cols + j] * xhat[i * cols + j];
        }
      }
      if (b.requires_grad) {
        b.ensure_grad();
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < cols; ++j) b.grad[j] += dy[i * cols + j];
        }
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  Tensor<T> out = make_result<T>(x.shape(), {x.shared()});
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = x.ptr()[i];
    out.ptr()[i] = T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2));
  }
  if (out.requires_grad()) {
    out.node()->backward_fn = [inv_sqrt2](Node<T>& self) {
      Node<T>& in = *self.inputs[0];
      in.ensure_grad();
      const T inv_sqrt_2pi = T(1) / std::sqrt(T(2) * std::numbers::pi_v<T>);
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const T v = in.data[i];
        const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
        const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
        in.grad[i] += self.grad[i] * (cdf + v * pdf);
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, Rng& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw std::invalid_argument("dropout probability must be < 1");
  Tensor<T> out = make_result<T>(x.shape(), {x.shared()});
  const T keep_scale = T(1) / static_cast<T>(1.0 - p);
  std::vector<T> mask(x.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = rng.bernoulli(p) ? T(0) : keep_scale;
    out.ptr()[i] = x.ptr()[i] * mask[i];
  }
  if (out.requires_grad()) {
    out.node()->backward_fn = [mask = std::move(mask)](Node<T>& self) {
      Node<T>& in = *self.inputs[0];
      in.ensure_grad();
      for (std::size_t i = 0; i < mask.size(); ++i) in.grad[i] += self.grad[i] * mask[i];
    };
  }
  return out;
}

template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                    std::size_t heads, std::span<const kernels::Segment> segments,
                    std::span<const std::uint8_t> key_mask) {
  require_matrix(q, "attention");
  if (q.shape() != k.shape() || q.shape() != v.shape()) {
    throw std::invalid_argument("attention: q/k/v shapes differ");
  }
  const kernels::AttentionShape shape{q.rows(), q.cols(), heads};
  if (heads == 0 || shape.width % heads != 0) {
    throw std::invalid_argument("attention: width not divisible by heads");
  }
  if (!key_mask.empty() && key_mask.size() != shape.rows) {
    throw std::invalid_argument("attention: mask length");
  }
  std::size_t covered = 0;
  for (const auto& s : segments) covered = std::max(covered, s.offset + s.length);
  if (covered > shape.rows) throw std::invalid_argument("attention: segment out of range");

  Tensor<T> out = make_result<T>(q.shape(), {q.shared(), k.shared(), v.shared()});
  std::vector<T> probs(kernels::attention_probs_size(segments, heads));
  kernels::attention_forward(shape, segments, key_mask.empty() ? nullptr : key_mask.data(), q.ptr(), k.ptr(), v.ptr(),
                             probs.data(), out.ptr());
  if (out.requires_grad()) {
    out.node()->backward_fn =
        [shape, segs = std::vector<kernels::Segment>(segments.begin(), segments.end()),
         probs = std::move(probs)](Node<T>& self) {
          Node<T>& qn = *self.inputs[0];
          Node<T>& kn = *self.inputs[1];
          Node<T>& vn = *self.inputs[2];
          qn.ensure_grad();
          kn.ensure_grad();
          vn.ensure_grad();
          kernels::attention_backward(shape, std::span<const kernels::Segment>(segs),
                                      qn.data.data(), kn.data.data(), vn.data.data(),
                                      probs.data(), self.grad.data(), qn.grad.data(),
                                      kn.grad.data(), vn.grad.data());
        };
  }
  return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  const Shape& shape = x.shape();
  if (axis >= shape.size()) throw std::invalid_argument("softmax: axis out of range");
  check_finite(x, "softmax");
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= shape[d];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) inner *= shape[d];
  const std::size_t len = shape[axis];

  Tensor<T> out = make_result<T>(shape, {x.shared()});
  if (inner == 1) {
    kernels::softmax_rows(outer, len, x.ptr(), out.ptr());
  } else {
    std::vector<T> slice(len);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t base = o * len * inner + i;
        for (std::size_t j = 0; j < len; ++j) slice[j] = x.ptr()[base + j * inner];
        T mx = *std::max_element(slice.begin(), slice.end());
        T total = 0;
        for (T& s : slice) total += (s = std::exp(s - mx));
        for (std::size_t j = 0; j < len; ++j) out.ptr()[base + j * inner] = slice[j] / total;
      }
    }
  }
  if (out.requires_grad()) {
    out.node()->backward_fn = [outer, inner, len](Node<T>& self) {
      Node<T>& in = *self.inputs[0];
      in.ensure_grad();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t base = o * len * inner + i;
          T dotp = 0;
          for (std::size_t j = 0; j < len; ++j) {
            dotp += self.grad[base + j * inner] * self.data[base + j * inner];
          }
          for (std::size_t j = 0; j < len; ++j) {
            const std::size_t at = base + j * inner;
            in.grad[at] += self.data[at] * (self.grad[at] - dotp);
          }
        }
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> rows) {
  require_matrix(x, "gather_rows");
  const std::size_t cols = x.cols();
  for (std::size_t r : rows) {
    if (r >= x.rows()) throw std::out_of_range("gather_rows: row " + std::to_string(r));
  }
  Tensor<T> out = make_result<T>({rows.size(), cols}, {x.shared()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(x.ptr() + rows[i] * cols, cols, out.ptr() + i * cols);
  }
  if (out.requires_grad()) {
    out.node()->backward_fn = [idx = std::vector<std::size_t>(rows.begin(), rows.end()),
                               cols](Node<T>& self) {
      Node<T>& in = *self.inputs[0];
      in.ensure_grad();
      for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < cols; ++j) in.grad[idx[i] * cols + j] += self.grad[i * cols + j];
      }
    };
  }
  return out;
}

#define XLD_INSTANTIATE_TENSOR(T)                                                              \
  template class Tensor<T>;                                                                    \
  template void backward<T>(const Tensor<T>&);                                                 \
  template Tensor<T> detach<T>(const Tensor<T>&);                                              \
  template Tensor<T> embedding<T>(const Tensor<T>&, std::span<const int>);                     \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                            \
  template Tensor<T> sum<T>(const Tensor<T>&);                                                 \
  template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> layer_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);   \
  template Tensor<T> gelu<T>(const Tensor<T>&);                                                \
  template Tensor<T> dropout<T>(const Tensor<T>&, double, Rng&);                               \
  template Tensor<T> attention<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                  std::size_t, std::span<const kernels::Segment>,              \
                                  std::span<const std::uint8_t>);                              \
  template Tensor<T> softmax<T>(const Tensor<T>&, std::size_t);                                \
  template Tensor<T> gather_rows<T>(const Tensor<T>&, std::span<const std::size_t>);

XLD_INSTANTIATE_TENSOR(float)
XLD_INSTANTIATE_TENSOR(double)

#undef XLD_INSTANTIATE_TENSOR

}  // namespace xld::nn
