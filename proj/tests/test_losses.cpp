#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "xld/losses.hpp"
#include "xld/rng.hpp"
#include "xld/tokenize.hpp"

using xld::ProbMatrix;

namespace {

ProbMatrix uniform(std::size_t rows, std::size_t k) {
  ProbMatrix m(rows, k);
  for (auto& v : m.values) v = 1.0 / static_cast<double>(k);
  return m;
}

ProbMatrix random_probs(xld::Rng& rng, std::size_t rows, std::size_t k, double spread = 2.0) {
  ProbMatrix m(rows, k);
  for (std::size_t i = 0; i < rows; ++i) {
    double total = 0;
    for (auto& v : m.row(i)) total += (v = std::exp(spread * rng.normal()));
    for (auto& v : m.row(i)) v /= total;
  }
  return m;
}

ProbMatrix one_row(std::vector<double> values) {
  ProbMatrix m(1, values.size());
  m.values = std::move(values);
  return m;
}

}  // namespace

TEST_CASE("cross entropy fixtures") {
  const std::vector<int> gold{3, 7, 24};
  CHECK(std::abs(xld::cross_entropy(uniform(3, 25), gold) - 3.2189) < 1e-4);
  CHECK(xld::cross_entropy(uniform(3, 25), gold) == doctest::Approx(std::log(25.0)).epsilon(1e-12));

  ProbMatrix onehot(2, 4);
  onehot.row(0)[1] = 1.0;
  onehot.row(1)[3] = 1.0;
  const std::vector<int> hit{1, 3};
  CHECK(xld::cross_entropy(onehot, hit) == 0.0);

  xld::Rng rng(1);
  const auto p = random_probs(rng, 2, 5);
  const std::vector<int> both{2, xld::kIgnoreLabel};
  const auto single = one_row({p.row(0).begin(), p.row(0).end()});
  const std::vector<int> first{2};
  CHECK(xld::cross_entropy(p, both) == xld::cross_entropy(single, first));

  const std::vector<int> none{xld::kIgnoreLabel, xld::kIgnoreLabel};
  CHECK_THROWS_AS(xld::cross_entropy(p, none), std::invalid_argument);
}

TEST_CASE("kl divergence fixtures") {
  xld::Rng rng(2);
  const auto p = random_probs(rng, 4, 6);
  CHECK(std::abs(xld::kl_divergence(p, p)) < 1e-9);
  CHECK(std::abs(xld::kl_divergence(one_row({1, 0}), one_row({0.5, 0.5})) - 0.6931) < 1e-4);
  CHECK_THROWS_AS(xld::kl_divergence(p, uniform(3, 6)), std::invalid_argument);
  ProbMatrix masked = p;
  masked.valid[1] = 0;
  CHECK_THROWS_AS(xld::kl_divergence(p, masked), std::invalid_argument);
}

TEST_CASE("kl divergence is non-negative over random pairs") {
  xld::Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 2 + rng.index(30);
    const auto p = random_probs(rng, 1, k, 3.0);
    const auto q = random_probs(rng, 1, k, 3.0);
    REQUIRE(xld::kl_divergence(p, q) >= -1e-9);
  }
}

TEST_CASE("kl divergence is asymmetric") {
  const auto p = one_row({0.9, 0.1});
  const auto q = one_row({0.5, 0.5});
  CHECK(std::abs(xld::kl_divergence(p, q) - xld::kl_divergence(q, p)) > 1e-3);
  // 0.9 ln(1.8) + 0.1 ln(0.2)
  CHECK(xld::kl_divergence(p, q) ==
        doctest::Approx(0.9 * std::log(1.8) + 0.1 * std::log(0.2)).epsilon(1e-12));
}

TEST_CASE("composite losses are affine in alpha") {
  xld::Rng rng(4);
  const auto s = random_probs(rng, 5, 25);
  const auto t = random_probs(rng, 5, 25);
  const std::vector<int> gold{0, 5, xld::kIgnoreLabel, 24, 1};
  const double ce_s = xld::cross_entropy(s, gold);
  const double ce_t = xld::cross_entropy(t, gold);
  const double kl_ts = xld::kl_divergence(t, s);
  const double kl_st = xld::kl_divergence(s, t);
  CHECK(xld::distill_loss(s, t, gold, 1.0) == ce_s);
  CHECK(xld::distill_loss(s, t, gold, 0.0) == kl_ts);
  // Consistency: first argument is the augmented side; CE uses the original.
  CHECK(xld::consistency_loss(s, t, gold, 1.0) == ce_t);
  CHECK(xld::consistency_loss(s, t, gold, 0.0) == kl_st);
  for (double a : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    CHECK(std::abs(xld::distill_loss(s, t, gold, a) - (a * ce_s + (1 - a) * kl_ts)) < 1e-12);
    CHECK(std::abs(xld::consistency_loss(s, t, gold, a) - (a * ce_t + (1 - a) * kl_st)) < 1e-12);
  }
  CHECK_THROWS_AS(xld::distill_loss(s, t, gold, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(xld::consistency_loss(s, t, gold, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(xld::consistency_loss(s, uniform(4, 25), gold, 0.5), std::invalid_argument);
}

TEST_CASE("arithmetic substitution") {
  CHECK(std::abs((0.8 * 1.0 + 0.2 * 0.5) - 0.9) < 1e-9);
  // Realize CE = 1.0 and KL = 0.5 with concrete distributions.
  const double p_gold = std::exp(-1.0);
  const auto student = one_row({p_gold, 1 - p_gold});
  const std::vector<int> gold{0};
  // Find teacher q with KL(q || student) = 0.5 by bisection on q0.
  double lo = p_gold, hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (xld::kl_divergence(one_row({mid, 1 - mid}), student) < 0.5 ? lo : hi) = mid;
  }
  const auto teacher = one_row({lo, 1 - lo});
  CHECK(std::abs(xld::distill_loss(student, teacher, gold, 0.8) - 0.9) < 1e-9);

  const double p2 = std::exp(-2.0);
  const auto original = one_row({p2, 1 - p2});
  lo = p2;
  hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (xld::kl_divergence(one_row({mid, 1 - mid}), original) < 0.25 ? lo : hi) = mid;
  }
  const auto augmented = one_row({lo, 1 - lo});
  CHECK(std::abs(xld::consistency_loss(augmented, original, gold, 0.8) - 1.65) < 1e-9);
}

TEST_CASE("alpha=0 consistency on identical inputs is zero") {
  xld::Rng rng(5);
  const auto p = random_probs(rng, 3, 25);
  const std::vector<int> gold{1, 2, 3};
  CHECK(std::abs(xld::consistency_loss(p, p, gold, 0.0)) < 1e-12);
}

TEST_CASE("tensor losses reduce per sentence then per batch") {
  namespace nn = xld::nn;
  xld::Rng rng(6);
  const auto pm = random_probs(rng, 5, 4);
  const auto qm = random_probs(rng, 5, 4);
  const auto p = nn::Tensor<double>::from({5, 4}, pm.values);
  const auto q = nn::Tensor<double>::from({5, 4}, qm.values);
  std::vector<xld::kernels::Segment> segs{{0, 2}, {2, 3}};
  std::vector<int> gold{1, xld::kIgnoreLabel, 0, 3, 2};

  auto sub = [&](std::size_t from, std::size_t n, const ProbMatrix& m) {
    ProbMatrix out(n, 4);
    std::copy(m.values.begin() + from * 4, m.values.begin() + (from + n) * 4, out.values.begin());
    return out;
  };
  const double ce = 0.5 * (xld::cross_entropy(sub(0, 2, pm), std::vector<int>{1, -1}) +
                           xld::cross_entropy(sub(2, 3, pm), std::vector<int>{0, 3, 2}));
  CHECK(nn::cross_entropy(p, gold, segs).item() == doctest::Approx(ce).epsilon(1e-12));
  const double kl = 0.5 * (xld::kl_divergence(sub(0, 2, pm), sub(0, 2, qm)) +
                           xld::kl_divergence(sub(2, 3, pm), sub(2, 3, qm)));
  CHECK(nn::kl_divergence(p, q, segs).item() == doctest::Approx(kl).epsilon(1e-12));
}

TEST_CASE("tensor objectives respect alpha boundaries and detachment") {
  namespace nn = xld::nn;
  xld::Rng rng(7);
  std::vector<double> a(12), b(12);
  for (auto& v : a) v = rng.normal();
  for (auto& v : b) v = rng.normal();
  const auto s = nn::Tensor<double>::from({3, 4}, a, true);
  const auto o = nn::Tensor<double>::from({3, 4}, b, true);
  std::vector<xld::kernels::Segment> segs{{0, 3}};
  std::vector<int> gold{0, 1, 2};
  const auto t = nn::detach(nn::softmax(o, 1));

  const auto d1 = xld::distill_objective(s, t, gold, segs, 1.0, 1.0);
  CHECK(d1.total.item() == d1.ce);
  const auto d0 = xld::distill_objective(s, t, gold, segs, 0.0, 1.0);
  CHECK(d0.total.item() == d0.kl);
  CHECK_THROWS_AS(xld::distill_objective(s, nn::softmax(o, 1), gold, segs, 0.5, 1.0),
                  std::invalid_argument);

  const auto c = xld::consistency_objective(s, o, gold, segs, 0.0, 1.0,
                                            xld::ConsistencyGradient::kAugmentedOnly);
  nn::backward(c.total);
  CHECK(s.has_grad());
  // At alpha=0 only the KL term remains and the clean branch is its fixed target.
  for (double g : o.grad()) CHECK(g == 0.0);
}
