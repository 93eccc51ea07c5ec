#include "xld/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "xld/tokenize.hpp"

namespace xld {

void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("alpha must lie in [0, 1], got " + std::to_string(alpha));
  }
}

double cross_entropy(const ProbMatrix& probs, std::span<const int> gold) {
  if (gold.size() != probs.rows) throw std::invalid_argument("gold length != prob rows");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < probs.rows; ++i) {
    if (!probs.valid[i] || gold[i] == kIgnoreLabel) continue;
    if (gold[i] < 0 || static_cast<std::size_t>(gold[i]) >= probs.labels) {
      throw std::out_of_range("gold label " + std::to_string(gold[i]) + " out of range");
    }
    total -= std::log(std::max(probs.row(i)[static_cast<std::size_t>(gold[i])], kProbFloor));
    ++count;
  }
  if (count == 0) throw std::invalid_argument("cross_entropy: every position is ignored");
  return total / static_cast<double>(count);
}

double kl_divergence(const ProbMatrix& p, const ProbMatrix& q) {
  if (p.rows != q.rows || p.labels != q.labels) {
    throw std::invalid_argument("kl_divergence: shape mismatch");
  }
  if (p.valid != q.valid) throw std::invalid_argument("kl_divergence: valid masks differ");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < p.rows; ++i) {
    if (!p.valid[i]) continue;
    const auto pr = p.row(i);
    const auto qr = q.row(i);
    double row = 0.0;
    for (std::size_t j = 0; j < p.labels; ++j) {
      if (pr[j] <= 0.0) continue;
      row += pr[j] * (std::log(std::max(pr[j], kProbFloor)) - std::log(std::max(qr[j], kProbFloor)));
    }
    total += row;
    ++count;
  }
  if (count == 0) throw std::invalid_argument("kl_divergence: no valid rows");
  return total / static_cast<double>(count);
}

double distill_loss(const ProbMatrix& student, const ProbMatrix& teacher, std::span<const int> gold,
                    double alpha) {
  check_alpha(alpha);
  return alpha * cross_entropy(student, gold) + (1.0 - alpha) * kl_divergence(teacher, student);
}

double consistency_loss(const ProbMatrix& augmented, const ProbMatrix& original,
                        std::span<const int> gold, double alpha) {
  check_alpha(alpha);
  if (augmented.rows != original.rows) {
    throw std::invalid_argument("consistency_loss: augmented/original pairing mismatch");
  }
  return alpha * cross_entropy(original, gold) + (1.0 - alpha) * kl_divergence(augmented, original);
}

namespace nn {
namespace {

// Per-row weight so that sum(weight * row_loss) is the mean of sentence means.
std::vector<double> row_weights(std::span<const kernels::Segment> segments, std::size_t rows,
                                const std::vector<std::uint8_t>& active) {
  std::vector<double> weights(rows, 0.0);
  std::size_t live_segments = 0;
  for (const auto& s : segments) {
    std::size_t n = 0;
    for (std::size_t i = s.offset; i < s.offset + s.length; ++i) n += active[i];
    if (n > 0) ++live_segments;
  }
  if (live_segments == 0) return weights;
  for (const auto& s : segments) {
    std::size_t n = 0;
    for (std::size_t i = s.offset; i < s.offset + s.length; ++i) n += active[i];
    if (n == 0) continue;
    const double w = 1.0 / static_cast<double>(n * live_segments);
    for (std::size_t i = s.offset; i < s.offset + s.length; ++i) {
      if (active[i]) weights[i] = w;
    }
  }
  return weights;
}

void check_segments(std::span<const kernels::Segment> segments, std::size_t rows) {
  for (const auto& s : segments) {
    if (s.offset + s.length > rows) throw std::invalid_argument("loss segment out of range");
  }
}

}  // namespace

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& probs, std::span<const int> gold,
                        std::span<const kernels::Segment> segments) {
  const std::size_t rows = probs.rows();
  const std::size_t k = probs.cols();
  if (gold.size() != rows) throw std::invalid_argument("cross_entropy: gold length mismatch");
  check_segments(segments, rows);
  std::vector<std::uint8_t> active(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    active[i] = gold[i] != kIgnoreLabel;
    if (active[i] && (gold[i] < 0 || static_cast<std::size_t>(gold[i]) >= k)) {
      throw std::out_of_range("gold label " + std::to_string(gold[i]) + " out of range");
    }
  }
  const auto weights = row_weights(segments, rows, active);
  if (std::all_of(weights.begin(), weights.end(), [](double w) { return w == 0.0; })) {
    throw std::invalid_argument("cross_entropy: every position is ignored");
  }
  const T floor = static_cast<T>(kProbFloor);
  double value = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    if (weights[i] == 0.0) continue;
    const T p = probs.ptr()[i * k + static_cast<std::size_t>(gold[i])];
    value -= weights[i] * std::log(static_cast<double>(std::max(p, floor)));
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = {1};
  node->data = {static_cast<T>(value)};
  node->is_leaf = false;
  node->requires_grad = probs.requires_grad();
  Tensor<T> out(node);
  if (node->requires_grad) {
    node->inputs = {probs.shared()};
    node->backward_fn = [weights, gold = std::vector<int>(gold.begin(), gold.end()), k,
                         floor](Node<T>& self) {
      Node<T>& in = *self.inputs[0];
      in.ensure_grad();
      for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] == 0.0) continue;
        const std::size_t at = i * k + static_cast<std::size_t>(gold[i]);
        const T p = in.data[at];
        if (p > floor) in.grad[at] -= self.grad[0] * static_cast<T>(weights[i]) / p;
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> kl_divergence(const Tensor<T>& p, const Tensor<T>& q,
                        std::span<const kernels::Segment> segments) {
  if (p.shape() != q.shape()) throw std::invalid_argument("kl_divergence: shape mismatch");
  const std::size_t rows = p.rows();
  const std::size_t k = p.cols();
  check_segments(segments, rows);
  std::vector<std::uint8_t> active(rows, 0);
  for (const auto& s : segments) {
    for (std::size_t i = s.offset; i < s.offset + s.length; ++i) active[i] = 1;
  }
  const auto weights = row_weights(segments, rows, active);
  const T floor = static_cast<T>(kProbFloor);
  double value = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    if (weights[i] == 0.0) continue;
    double row = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const T pj = p.ptr()[i * k + j];
      if (pj <= T(0)) continue;
      const T qj = q.ptr()[i * k + j];
      row += static_cast<double>(pj) * (std::log(static_cast<double>(std::max(pj, floor))) -
                                        std::log(static_cast<double>(std::max(qj, floor))));
    }
    value += weights[i] * row;
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = {1};
  node->data = {static_cast<T>(value)};
  node->is_leaf = false;
  node->requires_grad = p.requires_grad() || q.requires_grad();
  Tensor<T> out(node);
  if (node->requires_grad) {
    node->inputs = {p.shared(), q.shared()};
    node->backward_fn = [weights, k, floor](Node<T>& self) {
      Node<T>& pn = *self.inputs[0];
      Node<T>& qn = *self.inputs[1];
      const T g = self.grad[0];
      if (pn.requires_grad) pn.ensure_grad();
      if (qn.requires_grad) qn.ensure_grad();
      for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] == 0.0) continue;
        const T w = g * static_cast<T>(weights[i]);
        for (std::size_t j = 0; j < k; ++j) {
          const std::size_t at = i * k + j;
          const T pj = pn.data[at];
          const T qj = qn.data[at];
          if (pn.requires_grad && pj > T(0)) {
            const T lp = std::log(std::max(pj, floor));
            const T lq = std::log(std::max(qj, floor));
            pn.grad[at] += w * (lp - lq + (pj > floor ? T(1) : T(0)));
          }
          if (qn.requires_grad && qj > floor) qn.grad[at] -= w * pj / qj;
        }
      }
    };
  }
  return out;
}

template Tensor<float> cross_entropy<float>(const Tensor<float>&, std::span<const int>,
                                            std::span<const kernels::Segment>);
template Tensor<double> cross_entropy<double>(const Tensor<double>&, std::span<const int>,
                                              std::span<const kernels::Segment>);
template Tensor<float> kl_divergence<float>(const Tensor<float>&, const Tensor<float>&,
                                            std::span<const kernels::Segment>);
template Tensor<double> kl_divergence<double>(const Tensor<double>&, const Tensor<double>&,
                                              std::span<const kernels::Segment>);

}  // namespace nn

namespace {

template <typename T>
nn::Tensor<T> softened(const nn::Tensor<T>& logits, double temperature) {
  if (temperature == 1.0) return nn::softmax(logits, 1);
  return nn::softmax(nn::scale(logits, static_cast<T>(1.0 / temperature)), 1);
}

template <typename T>
nn::Tensor<T> mix(const nn::Tensor<T>& ce, const nn::Tensor<T>& kl, double alpha) {
  return nn::add(nn::scale(ce, static_cast<T>(alpha)), nn::scale(kl, static_cast<T>(1.0 - alpha)));
}

void check_temperature(double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
}

}  // namespace

template <typename T>
LossTerms<T> distill_objective(const nn::Tensor<T>& student_logits,
                               const nn::Tensor<T>& teacher_probs, std::span<const int> gold,
                               std::span<const kernels::Segment> segments, double alpha,
                               double temperature) {
  check_alpha(alpha);
  check_temperature(temperature);
  if (teacher_probs.requires_grad()) {
    throw std::invalid_argument("teacher probabilities must be detached");
  }
  const auto probs = nn::softmax(student_logits, 1);
  const auto ce = nn::cross_entropy(probs, gold, segments);
  const auto soft = temperature == 1.0 ? probs : softened(student_logits, temperature);
  const auto kl = nn::kl_divergence(teacher_probs, soft, segments);
  return {mix(ce, kl, alpha), static_cast<double>(ce.item()), static_cast<double>(kl.item())};
}

template <typename T>
LossTerms<T> consistency_objective(const nn::Tensor<T>& augmented_logits,
                                   const nn::Tensor<T>& original_logits, std::span<const int> gold,
                                   std::span<const kernels::Segment> segments, double alpha,
                                   double temperature, ConsistencyGradient flow) {
  check_alpha(alpha);
  check_temperature(temperature);
  if (augmented_logits.shape() != original_logits.shape()) {
    throw std::invalid_argument("consistency: augmented/original pairing mismatch " +
                                nn::shape_string(augmented_logits.shape()) + " vs " +
                                nn::shape_string(original_logits.shape()));
  }
  const auto original = nn::softmax(original_logits, 1);
  const auto ce = nn::cross_entropy(original, gold, segments);
  auto target = temperature == 1.0 ? original : softened(original_logits, temperature);
  if (flow == ConsistencyGradient::kAugmentedOnly) target = nn::detach(target);
  const auto augmented = softened(augmented_logits, temperature);
  const auto kl = nn::kl_divergence(augmented, target, segments);
  return {mix(ce, kl, alpha), static_cast<double>(ce.item()), static_cast<double>(kl.item())};
}

template <typename T>
LossTerms<T> supervised_objective(const nn::Tensor<T>& logits, std::span<const int> gold,
                                  std::span<const kernels::Segment> segments) {
  const auto ce = nn::cross_entropy(nn::softmax(logits, 1), gold, segments);
  return {ce, static_cast<double>(ce.item()), 0.0};
}

template LossTerms<float> distill_objective<float>(const nn::Tensor<float>&,
                                                   const nn::Tensor<float>&, std::span<const int>,
                                                   std::span<const kernels::Segment>, double,
                                                   double);
template LossTerms<double> distill_objective<double>(const nn::Tensor<double>&,
                                                     const nn::Tensor<double>&,
                                                     std::span<const int>,
                                                     std::span<const kernels::Segment>, double,
                                                     double);
template LossTerms<float> consistency_objective<float>(const nn::Tensor<float>&,
                                                       const nn::Tensor<float>&,
                                                       std::span<const int>,
                                                       std::span<const kernels::Segment>, double,
                                                       double, ConsistencyGradient);
template LossTerms<double> consistency_objective<double>(const nn::Tensor<double>&,
                                                         const nn::Tensor<double>&,
                                                         std::span<const int>,
                                                         std::span<const kernels::Segment>,
                                                         double, double, ConsistencyGradient);
template LossTerms<float> supervised_objective<float>(const nn::Tensor<float>&,
                                                      std::span<const int>,
                                                      std::span<const kernels::Segment>);
template LossTerms<double> supervised_objective<double>(const nn::Tensor<double>&,
                                                        std::span<const int>,
                                                        std::span<const kernels::Segment>);

}  // namespace xld
