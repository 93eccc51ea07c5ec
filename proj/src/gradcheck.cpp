#include "xld/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace xld {

bool GradCheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
}

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.max_rel_error);
  return w;
}

std::vector<std::string> GradCheckReport::failures() const {
  std::vector<std::string> names;
  for (const auto& e : entries) {
    if (!e.passed) names.push_back(e.name);
  }
  return names;
}

std::string GradCheckReport::to_text() const {
  std::ostringstream out;
  out.setf(std::ios::scientific);
  out.precision(3);
  for (const auto& e : entries) {
    out << (e.skipped ? "SKIP" : e.passed ? "ok  " : "FAIL") << "  " << e.name;
    if (e.skipped) {
      out << "  (empty)\n";
    } else {
      out << "  n=" << e.size << "  max_rel=" << e.max_rel_error << "\n";
    }
  }
  out << (passed() ? "PASS" : "FAIL") << "  worst=" << worst() << "  tol=" << tolerance << "\n";
  return out.str();
}

GradCheckReport check_gradients(std::vector<nn::Parameter<double>>& params, const LossFn& loss,
                                double epsilon, double tolerance, const std::string& corrupt,
                                const LossFn& numeric) {
  const LossFn& probe = numeric ? numeric : loss;
  GradCheckReport report;
  report.tolerance = tolerance;
  for (auto& prm : params) prm.tensor.zero_grad();
  nn::backward(loss());

  for (auto& prm : params) {
    GradCheckEntry entry;
    entry.name = prm.name;
    entry.size = prm.tensor.size();
    if (entry.size == 0) {
      entry.skipped = true;
      report.entries.push_back(entry);
      continue;
    }
    std::vector<double> analytic(entry.size, 0.0);
    if (prm.tensor.has_grad()) {
      const auto g = prm.tensor.grad();
      std::copy(g.begin(), g.end(), analytic.begin());
    }
    if (prm.name == corrupt) analytic[0] += 0.1;

    auto data = prm.tensor.data();
    for (std::size_t i = 0; i < entry.size; ++i) {
      const double saved = data[i];
      data[i] = saved + epsilon;
      const double up = probe().item();
      data[i] = saved - epsilon;
      const double down = probe().item();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double denom = std::max(std::abs(analytic[i]) + std::abs(numeric), 1e-6);
      entry.max_rel_error = std::max(entry.max_rel_error, std::abs(analytic[i] - numeric) / denom);
    }
    entry.passed = entry.max_rel_error < tolerance;
    report.entries.push_back(entry);
  }
  return report;
}

std::string objective_name(GradObjective objective) {
  switch (objective) {
    case GradObjective::kSupervised: return "supervised";
    case GradObjective::kDistill: return "distill";
    case GradObjective::kConsistency: return "consistency";
    case GradObjective::kConsistencyBothBranches: return "consistency-both";
  }
  return "?";
}

std::vector<GradObjective> all_objectives() {
  return {GradObjective::kSupervised, GradObjective::kDistill, GradObjective::kConsistency,
          GradObjective::kConsistencyBothBranches};
}

ModelConfig tiny_config(std::size_t vocab_size, std::size_t k) {
  ModelConfig c;
  c.layers = 1;
  c.heads = 2;
  c.d_model = 8;
  c.d_ff = 16;
  c.vocab_size = vocab_size;
  c.k = k;
  c.max_len = 8;
  c.dropout = 0.0;
  return c;
}

namespace {

// Random example of `length` tokens; the tail may be padding.
TokenizedExample random_example(Rng& rng, const ModelConfig& config, std::size_t length) {
  TokenizedExample ex;
  const std::size_t pad = length > 2 ? rng.index(2) : 0;
  for (std::size_t i = 0; i < length; ++i) {
    const bool padded = i >= length - pad;
    const bool start = i == 0 || (!padded && rng.bernoulli(0.7));
    ex.input_ids.push_back(padded ? kPadId
                                  : static_cast<int>(kNumReserved +
                                                     rng.index(config.vocab_size - kNumReserved)));
    ex.attention_mask.push_back(padded ? 0 : 1);
    ex.word_starts.push_back(start && !padded ? 1 : 0);
    int label = kIgnoreLabel;
    if (start && !padded && !rng.bernoulli(0.15)) label = static_cast<int>(rng.index(config.k));
    ex.label_ids.push_back(label);
    ex.word_count += ex.word_starts.back();
  }
  // At least one supervised word.
  if (ex.label_ids[0] == kIgnoreLabel) ex.label_ids[0] = 0;
  return ex;
}

}  // namespace

GradCheckReport grad_check(const GradCheckOptions& options) {
  ModelConfig config = options.config;
  config.dropout = 0.0;
  TransformerTagger<double> model(config, Role::kStudent, options.seed);
  Rng rng(mix_seed(options.seed, 0x6c));

  std::vector<TokenizedExample> clean, noisy;
  for (std::size_t s = 0; s < options.sentences; ++s) {
    const std::size_t length = 2 + rng.index(config.max_len - 1);
    clean.push_back(random_example(rng, config, length));
    // Same word layout, different tokens.
    TokenizedExample other = clean.back();
    for (std::size_t i = 0; i < other.size(); ++i) {
      if (other.attention_mask[i] && rng.bernoulli(0.5)) {
        other.input_ids[i] =
            static_cast<int>(kNumReserved + rng.index(config.vocab_size - kNumReserved));
      }
      if (other.word_starts[i]) other.label_ids[i] = kIgnoreLabel;
    }
    noisy.push_back(std::move(other));
  }
  std::vector<const TokenizedExample*> clean_ptrs, noisy_ptrs;
  for (const auto& e : clean) clean_ptrs.push_back(&e);
  for (const auto& e : noisy) noisy_ptrs.push_back(&e);
  const Batch batch = Batch::pack(clean_ptrs);
  const Batch aug_batch = Batch::pack(noisy_ptrs);

  std::vector<double> teacher(batch.word_rows.size() * config.k);
  for (std::size_t r = 0; r < batch.word_rows.size(); ++r) {
    double total = 0.0;
    for (std::size_t j = 0; j < config.k; ++j) {
      teacher[r * config.k + j] = std::exp(2.0 * rng.normal());
      total += teacher[r * config.k + j];
    }
    for (std::size_t j = 0; j < config.k; ++j) teacher[r * config.k + j] /= total;
  }
  const auto teacher_probs =
      nn::Tensor<double>::from({batch.word_rows.size(), config.k}, teacher, false);

  const auto loss = [&]() -> nn::Tensor<double> {
    const auto words = nn::gather_rows(model.forward(batch), batch.word_rows);
    switch (options.objective) {
      case GradObjective::kSupervised:
        return supervised_objective(words, batch.word_labels, batch.word_segments).total;
      case GradObjective::kDistill:
        return distill_objective(words, teacher_probs, batch.word_labels, batch.word_segments,
                                 options.alpha, options.temperature)
            .total;
      case GradObjective::kConsistency:
      case GradObjective::kConsistencyBothBranches: {
        const auto aug = nn::gather_rows(model.forward(aug_batch), aug_batch.word_rows);
        const auto flow = options.objective == GradObjective::kConsistency
                              ? ConsistencyGradient::kAugmentedOnly
                              : ConsistencyGradient::kBothBranches;
        return consistency_objective(aug, words, batch.word_labels, batch.word_segments,
                                     options.alpha, options.temperature, flow)
            .total;
      }
    }
    throw std::logic_error("unknown objective");
  };
  if (options.objective != GradObjective::kConsistency) {
    return check_gradients(model.parameters(), loss, options.epsilon, options.tolerance,
                           options.corrupt);
  }
  // With the clean branch detached inside the KL term, the analytic gradient
  // is that of a loss whose KL target is frozen at the current parameters.
  const auto frozen = nn::detach(nn::softmax(
      nn::scale(nn::gather_rows(model.forward(batch), batch.word_rows), 1.0 / options.temperature),
      1));
  const auto numeric = [&]() -> nn::Tensor<double> {
    const auto words = nn::gather_rows(model.forward(batch), batch.word_rows);
    const auto aug = nn::gather_rows(model.forward(aug_batch), aug_batch.word_rows);
    const auto ce = nn::cross_entropy(nn::softmax(words, 1), batch.word_labels, batch.word_segments);
    const auto kl = nn::kl_divergence(
        nn::softmax(nn::scale(aug, 1.0 / options.temperature), 1), frozen, batch.word_segments);
    return nn::add(nn::scale(ce, options.alpha), nn::scale(kl, 1.0 - options.alpha));
  };
  return check_gradients(model.parameters(), loss, options.epsilon, options.tolerance,
                         options.corrupt, numeric);
}

ModelConfig random_tiny_config(Rng& rng) {
  ModelConfig c;
  c.layers = 1 + rng.index(2);
  c.heads = 1 + rng.index(2);
  c.d_model = c.heads * (2 + 2 * rng.index(3));
  c.d_ff = 4 + 4 * rng.index(3);
  c.vocab_size = kNumReserved + 6 + rng.index(20);
  c.k = rng.bernoulli(0.5) ? kNumTags : 3 + 2 * rng.index(5);
  c.max_len = 4 + rng.index(5);
  c.dropout = 0.0;
  return c;
}

bool GradCheckSuite::passed() const {
  return std::all_of(runs.begin(), runs.end(), [](const auto& r) { return r.second.passed(); });
}

double GradCheckSuite::worst() const {
  double w = 0.0;
  for (const auto& [name, err] : worst_by_parameter) w = std::max(w, err);
  return w;
}

std::string GradCheckSuite::summary() const {
  std::ostringstream out;
  out.setf(std::ios::scientific);
  out.precision(3);
  for (const auto& [name, err] : worst_by_parameter) {
    out << (err < tolerance ? "ok    " : "FAIL  ") << name << "  max_rel=" << err << "\n";
  }
  for (const auto& [label, report] : runs) {
    if (!report.passed()) {
      out << "failed: " << label << " (";
      const auto names = report.failures();
      for (std::size_t i = 0; i < names.size(); ++i) out << (i ? ", " : "") << names[i];
      out << ")\n";
    }
  }
  out << (passed() ? "PASS" : "FAIL") << "  runs=" << runs.size() << "  worst=" << worst()
      << "  tol=" << tolerance << "\n";
  return out.str();
}

GradCheckSuite grad_check_suite(std::size_t configs, std::uint64_t seed, double epsilon,
                                double tolerance, const std::string& corrupt) {
  GradCheckSuite suite;
  suite.tolerance = tolerance;
  Rng rng(mix_seed(seed, 0x9c));
  for (std::size_t i = 0; i < configs; ++i) {
    const ModelConfig config = random_tiny_config(rng);
    for (auto objective : all_objectives()) {
      GradCheckOptions options;
      options.config = config;
      options.seed = mix_seed(seed, i);
      options.epsilon = epsilon;
      options.tolerance = tolerance;
      options.objective = objective;
      options.alpha = 0.1 + 0.8 * rng.uniform();
      options.temperature = rng.bernoulli(0.5) ? 1.0 : 0.5 + 2.0 * rng.uniform();
      options.corrupt = corrupt;
      auto report = grad_check(options);
      for (const auto& e : report.entries) {
        if (e.skipped) continue;
        auto& w = suite.worst_by_parameter[e.name];
        w = std::max(w, e.max_rel_error);
      }
      suite.runs.emplace_back("config " + std::to_string(i) + " / " + objective_name(objective),
                              std::move(report));
    }
  }
  return suite;
}

}  // namespace xld
