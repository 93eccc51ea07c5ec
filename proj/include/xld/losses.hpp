#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "xld/kernels.hpp"
#include "xld/tensor.hpp"

namespace xld {

// Floor applied to probabilities inside logarithms.
inline constexpr double kProbFloor = 1e-12;

/// Per-position label distributions; rows with valid == 0 never contribute.
struct ProbMatrix {
  std::size_t rows = 0;
  std::size_t labels = 0;
  std::vector<double> values;  // rows * labels
  std::vector<std::uint8_t> valid;

  ProbMatrix() = default;
  ProbMatrix(std::size_t r, std::size_t k)
      : rows(r), labels(k), values(r * k, 0.0), valid(r, 1) {}

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values).subspan(i * labels, labels);
  }
  std::span<double> row(std::size_t i) { return std::span<double>(values).subspan(i * labels, labels); }
};

// Mean -ln p(gold) over valid, non-ignored rows. Throws when none remain.
double cross_entropy(const ProbMatrix& probs, std::span<const int> gold);

// Mean over valid rows of sum_j p_j ln(p_j / q_j), arguments in that order.
double kl_divergence(const ProbMatrix& p, const ProbMatrix& q);

// alpha * CE(student, gold) + (1 - alpha) * KL(teacher || student)
double distill_loss(const ProbMatrix& student, const ProbMatrix& teacher, std::span<const int> gold,
                    double alpha);

// alpha * CE(original, gold) + (1 - alpha) * KL(augmented || original)
double consistency_loss(const ProbMatrix& augmented, const ProbMatrix& original,
                        std::span<const int> gold, double alpha);

void check_alpha(double alpha);

namespace nn {

// Differentiable forms over word-level rows. `segments` groups rows by
// sentence: each sentence is averaged over its rows first, then sentences
// are averaged.

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& probs, std::span<const int> gold,
                        std::span<const kernels::Segment> segments);

template <typename T>
Tensor<T> kl_divergence(const Tensor<T>& p, const Tensor<T>& q,
                        std::span<const kernels::Segment> segments);

}  // namespace nn

template <typename T>
struct LossTerms {
  nn::Tensor<T> total;
  double ce = 0.0;
  double kl = 0.0;
};

// Student logits are the word rows of the student. Teacher probabilities
// are constants already softened at `temperature`.
template <typename T>
LossTerms<T> distill_objective(const nn::Tensor<T>& student_logits,
                               const nn::Tensor<T>& teacher_probs, std::span<const int> gold,
                               std::span<const kernels::Segment> segments, double alpha,
                               double temperature);

enum class ConsistencyGradient {
  kAugmentedOnly,  // original branch is a fixed target inside the KL term
  kBothBranches,
};

template <typename T>
LossTerms<T> consistency_objective(const nn::Tensor<T>& augmented_logits,
                                   const nn::Tensor<T>& original_logits, std::span<const int> gold,
                                   std::span<const kernels::Segment> segments, double alpha,
                                   double temperature, ConsistencyGradient flow);

// Plain supervised objective; kl stays 0.
template <typename T>
LossTerms<T> supervised_objective(const nn::Tensor<T>& logits, std::span<const int> gold,
                                  std::span<const kernels::Segment> segments);

}  // namespace xld
